import numpy as np
import pytest

from src.config import PipelineConfig
from src.schema import ABSENT, ALL_KEYS, AttributeAnswer, AttributeKey, AttributeSet

K = AttributeKey

DEFAULT_VALUES = {
    K.clothes_color: "red",
    K.clothes_style: "t-shirt",
    K.pants_color: "blue",
    K.pants_style: "jeans",
    K.shoes_color: "black",
    K.shoes_style: "sneakers",
    K.gender: "man",
    K.hair_color: "black",
    K.hair_length: "short",
    K.glasses: ABSENT,
    K.phone: ABSENT,
    K.umbrella: ABSENT,
    K.bike: ABSENT,
    K.bag: ABSENT,
}


def build_attribute_set(image_id="img0", confidences=None, **values) -> AttributeSet:
    row = {**DEFAULT_VALUES, **{K(k): v for k, v in values.items()}}
    confidences = confidences if confidences is not None else [1.0] * len(ALL_KEYS)
    return AttributeSet(
        image_id=image_id,
        answers=tuple(
            AttributeAnswer(key=key, raw_answer=row[key], value=row[key], confidence=c)
            for key, c in zip(ALL_KEYS, confidences)
        ),
    )


def central_difference(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Numerical gradient of scalar f at x; x is perturbed in place and restored."""
    grad = np.zeros_like(x, dtype=np.float64)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        up = f()
        x[idx] = orig - step
        down = f()
        x[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return float(np.max(np.abs(a - n)) / max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-8))


@pytest.fixture
def attribute_set_factory():
    return build_attribute_set


@pytest.fixture
def numeric_gradient():
    return central_difference


@pytest.fixture
def grad_error():
    return relative_error


@pytest.fixture
def small_config(tmp_path):
    """A quick-to-train config writing everything under tmp_path."""
    return PipelineConfig(
        synthetic_identities=12,
        images_per_identity=2,
        batch_size=8,
        epochs=3,
        max_steps=0,
        embedding_dim=16,
        hash_dim=256,
        workers=2,
        manifest_path=tmp_path / "data" / "manifest.jsonl",
        style_corpus_path=tmp_path / "data" / "style_corpus.jsonl",
        captions_path=tmp_path / "out" / "captions.jsonl",
        model_path=tmp_path / "out" / "model.joblib",
        report_path=tmp_path / "out" / "report.json",
        history_path=tmp_path / "out" / "history.csv",
    )
