# === train.py ===
# Treino em mini-lotes do modelo de referência sobre as pseudo legendas,
# cada legenda pesada pela sua confiança nas perdas CS escolhidas.
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from src.errors import ConfigError, EmptyTrainSet, NonFiniteLoss  # noqa: E402
from src.model import Adam, ReferenceRetrievalModel, StepInputs  # noqa: E402
from src.preprocess import (  # noqa: E402
    build_vocabulary,
    fit_attribute_encoder,
    image_features,
    make_text_hasher,
    mask_captions,
)
from src.seeding import derive_seed, rng_for  # noqa: E402

logger = logging.getLogger(__name__)


@dataclass
class TrainingResult:
    model: ReferenceRetrievalModel
    steps: pd.DataFrame
    epochs: pd.DataFrame


def truth_rows(corpus, image_ids) -> list:
    if not corpus.truth_table:
        raise ConfigError("the reference model needs ground-truth attributes in the manifest")
    return [corpus.truth_table[i] for i in image_ids]


def _stream_int(seed: int, *streams) -> int:
    return int(derive_seed(seed, *streams).generate_state(1)[0])


def train_model(captions, corpus, config) -> TrainingResult:
    images = corpus.by_id()
    train_caps = sorted(
        (c for c in captions if c.image_id in images and images[c.image_id].split == "train"),
        key=lambda c: c.image_id,
    )
    if not train_caps:
        raise EmptyTrainSet("no pseudo caption belongs to a train-split image")

    # Features
    rows = truth_rows(corpus, [c.image_id for c in train_caps])
    encoder = fit_attribute_encoder(rows)
    x_img = image_features(encoder, rows)
    texts = [c.text for c in train_caps]
    hasher = make_text_hasher(config.hash_dim)
    x_txt = hasher.transform(texts).tocsr()
    vocabulary = build_vocabulary(hasher, texts) if "irr" in config.loss_set else []

    classes = sorted({images[c.image_id].identity_id for c in train_caps})
    class_of = {ident: k for k, ident in enumerate(classes)}
    labels = np.array([class_of[images[c.image_id].identity_id] for c in train_caps])
    confidences = np.array([c.confidence for c in train_caps], dtype=np.float64)

    model = ReferenceRetrievalModel(
        image_dim=x_img.shape[1],
        hash_dim=config.hash_dim,
        embedding_dim=config.embedding_dim,
        n_classes=len(classes),
        vocabulary=vocabulary,
        temperature_init=config.temperature_init,
        seed=config.seed,
        encoder=encoder,
        classes=classes,
    )
    optimizer = Adam(model.params, config.learning_rate)
    order_rng = rng_for(config.seed, "train-order")
    n = len(train_caps)
    logger.info("Training on %d captions, %d identities, losses=%s, beta=%s",
                n, len(classes), ",".join(config.loss_set), config.beta)

    records = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        if config.max_steps and step >= config.max_steps:
            break
        order = order_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            if config.max_steps and step >= config.max_steps:
                break
            idx = order[start:start + config.batch_size]
            if idx.size < 2:
                continue
            inputs = StepInputs(
                image_features=x_img[idx],
                text_features=x_txt[idx],
                confidences=confidences[idx],
                class_index=labels[idx],
                itm_seed=_stream_int(config.seed, "itm", step),
            )
            if "irr" in config.loss_set:
                masked, targets = mask_captions(
                    hasher, [texts[i] for i in idx], vocabulary, config.irr_mask_rate,
                    rng_for(config.seed, "irr-mask", step),
                )
                inputs.masked_text_features = hasher.transform(masked).tocsr()
                inputs.irr_targets = targets

            loss, parts, grads = model.loss_and_grads(
                inputs, config.loss_set, config.beta, config.itm_strategy, config.sdm_epsilon
            )
            if not (math.isfinite(loss) and all(math.isfinite(v) for v in parts.values())):
                raise NonFiniteLoss(epoch, step, parts)
            optimizer.step(model.params, grads)
            model.clamp_temperature()
            records.append({"epoch": epoch, "step": step, "loss": loss, **parts,
                            "temperature": model.temperature})
            logger.debug("epoch %d step %d loss %.6f %s", epoch, step, loss, parts)
            step += 1
        epoch_losses = [r["loss"] for r in records if r["epoch"] == epoch]
        if epoch_losses:
            logger.info("Epoch %d: mean loss %.6f", epoch, float(np.mean(epoch_losses)))

    if not records:
        raise EmptyTrainSet("no mini-batch with at least two captions")
    steps = pd.DataFrame(records)
    epochs = steps.drop(columns="step").groupby("epoch", as_index=False).mean()
    return TrainingResult(model=model, steps=steps, epochs=epochs)


def plot_loss_curve(epochs: pd.DataFrame, path: Path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs["epoch"], epochs["loss"], marker="o", label="total")
    for name in ("itc", "itm", "sdm", "irr", "id"):
        if name in epochs.columns:
            ax.plot(epochs["epoch"], epochs[name], linestyle="--", label=name)
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def artifact_paths(model_path) -> dict:
    model_path = Path(model_path)
    return {
        "model": model_path,
        "steps": model_path.with_suffix(".steps.csv"),
        "epochs": model_path.with_suffix(".epochs.csv"),
        "plot": model_path.with_suffix(".loss.png"),
    }


def save_training(result: TrainingResult, model_path, config) -> dict:
    """Modelo, tabelas de perda por passo e por época e a curva de perda."""
    paths = artifact_paths(model_path)
    paths["model"].parent.mkdir(parents=True, exist_ok=True)
    result.model.save(paths["model"], config=config.model_dump(mode="json"))
    result.steps.to_csv(paths["steps"], index=False)
    result.epochs.to_csv(paths["epochs"], index=False)
    plot_loss_curve(result.epochs, paths["plot"])
    logger.info("Model and training log saved to %s", paths["model"].parent)
    return paths
