# === model.py ===
# Modelo de recuperação de duas torres em escala de bancada: torre de
# imagem linear sobre one-hots de atributos, torre de texto linear sobre
# n-gramas com hash, e as cabeças de matching, tokens mascarados e
# identidade treinadas pelas perdas CS.
import logging
import math
from dataclasses import dataclass, field

import joblib
import numpy as np

from src.errors import NoNegativeAvailable
from src.losses import (
    IdBatch,
    IrrBatch,
    ItmBatch,
    TrainingBatch,
    cs_id_loss,
    cs_irr_loss,
    cs_itc_loss,
    cs_itm_loss,
    cs_sdm_loss,
    sample_itm_pairs,
)
from src.preprocess import make_text_hasher
from src.seeding import rng_for

logger = logging.getLogger(__name__)

LOSS_NAMES = ("itc", "itm", "sdm", "irr", "id")
LOG_TAU_RANGE = (math.log(0.01), math.log(1.0))


def _encode(x, w):
    raw = np.asarray(x @ w, dtype=np.float64)
    norms = np.maximum(np.linalg.norm(raw, axis=1, keepdims=True), 1e-12)
    return raw / norms, norms


def _normalize_backward(e, norms, de):
    """Gradiente através da normalização l2 por linha e = r / ||r||."""
    return (de - e * np.sum(e * de, axis=1, keepdims=True)) / norms


@dataclass
class StepInputs:
    image_features: np.ndarray          # n x image_dim
    text_features: object               # n x hash_dim, esparso
    confidences: np.ndarray
    class_index: np.ndarray
    itm_seed: int = 0
    masked_text_features: object = None
    irr_targets: list = field(default_factory=list)


class ReferenceRetrievalModel:
    def __init__(self, image_dim, hash_dim, embedding_dim, n_classes, vocabulary=(),
                 temperature_init=0.07, seed=0, encoder=None, classes=()):
        rng = rng_for(seed, "model-init")
        d = embedding_dim
        self.hash_dim = hash_dim
        self.embedding_dim = d
        self.encoder = encoder
        self.classes = list(classes)
        self.vocabulary = list(vocabulary)
        self.hasher = make_text_hasher(hash_dim)
        v = max(len(self.vocabulary), 1)
        self.params = {
            "W_img": rng.normal(0.0, 0.1, size=(image_dim, d)),
            "W_txt": rng.normal(0.0, 0.1, size=(hash_dim, d)),
            "log_tau": np.array([math.log(temperature_init)]),
            "W_itm": rng.normal(0.0, 0.1, size=(d, 2)),
            "b_itm": np.zeros(2),
            "W_irr": rng.normal(0.0, 0.1, size=(d, v)),
            "b_irr": np.zeros(v),
            "W_id": rng.normal(0.0, 0.1, size=(max(n_classes, 1), d)),
            "b_id": np.zeros(max(n_classes, 1)),
        }

    @property
    def temperature(self) -> float:
        return float(np.exp(self.params["log_tau"][0]))

    def clamp_temperature(self):
        self.params["log_tau"] = np.clip(self.params["log_tau"], *LOG_TAU_RANGE)

    def embed_images(self, x) -> np.ndarray:
        return _encode(x, self.params["W_img"])[0]

    def embed_texts(self, texts) -> np.ndarray:
        return _encode(self.hasher.transform(texts), self.params["W_txt"])[0]

    # === Perda e gradientes de um mini-lote ===
    def loss_and_grads(self, inputs: StepInputs, loss_set, beta: float,
                       itm_strategy: str = "uniform", sdm_epsilon: float = 1e-8):
        p = self.params
        v, v_norm = _encode(inputs.image_features, p["W_img"])
        t, t_norm = _encode(inputs.text_features, p["W_txt"])
        tau = self.temperature
        conf = np.asarray(inputs.confidences, dtype=np.float64)
        batch = TrainingBatch(v, t, conf, inputs.class_index, tau, beta)

        grads = {k: np.zeros_like(a) for k, a in p.items()}
        dv, dt = np.zeros_like(v), np.zeros_like(t)
        d_tau = 0.0
        parts = {}

        if "itc" in loss_set:
            out = cs_itc_loss(batch)
            parts["itc"] = out.value
            dv += out.grads["image_embeddings"]
            dt += out.grads["text_embeddings"]
            d_tau += out.grads["temperature"]

        if "sdm" in loss_set:
            out = cs_sdm_loss(batch, sdm_epsilon)
            parts["sdm"] = out.value
            dv += out.grads["image_embeddings"]
            dt += out.grads["text_embeddings"]
            d_tau += out.grads["temperature"]

        if "itm" in loss_set:
            try:
                pairs = sample_itm_pairs(batch, itm_strategy, inputs.itm_seed)
            except NoNegativeAvailable:
                logger.debug("Single-identity batch, ITM skipped")
                pairs = None
            if pairs is not None:
                vi, ti = v[pairs.image_index], t[pairs.text_index]
                h = vi * ti
                phi = h @ p["W_itm"] + p["b_itm"]
                out = cs_itm_loss(ItmBatch(phi, pairs.labels, pairs.confidences, beta))
                parts["itm"] = out.value
                g = out.grads["pair_scores"]
                grads["W_itm"] += h.T @ g
                grads["b_itm"] += g.sum(axis=0)
                dh = g @ p["W_itm"].T
                np.add.at(dv, pairs.image_index, dh * ti)
                np.add.at(dt, pairs.text_index, dh * vi)

        if "irr" in loss_set and inputs.masked_text_features is not None:
            rows = [i for i, tg in enumerate(inputs.irr_targets) if len(tg)]
            if rows:
                x_masked = inputs.masked_text_features[rows]
                tm, tm_norm = _encode(x_masked, p["W_txt"])
                h = v[rows] * tm
                row_logits = h @ p["W_irr"] + p["b_irr"]
                vocab = row_logits.shape[1]
                logits, targets = [], []
                for r, i in enumerate(rows):
                    tg = inputs.irr_targets[i]
                    logits.append(np.repeat(row_logits[r][None, :], len(tg), axis=0))
                    targets.append(np.eye(vocab)[tg])
                out = cs_irr_loss(IrrBatch(logits, targets, conf[rows], beta))
                parts["irr"] = out.value
                g_rows = np.stack([g.sum(axis=0) for g in out.grads["logits"]])
                grads["W_irr"] += h.T @ g_rows
                grads["b_irr"] += g_rows.sum(axis=0)
                dh = g_rows @ p["W_irr"].T
                dv[rows] += dh * tm
                d_raw = _normalize_backward(tm, tm_norm, dh * v[rows])
                grads["W_txt"] += np.asarray(x_masked.T @ d_raw)

        if "id" in loss_set:
            out = cs_id_loss(IdBatch(t, v, p["W_id"], p["b_id"], inputs.class_index, conf, beta))
            parts["id"] = out.value
            dt += out.grads["text_features"]
            dv += out.grads["image_features"]
            grads["W_id"] += out.grads["class_weights"]
            grads["b_id"] += out.grads["biases"]

        grads["W_img"] += np.asarray(inputs.image_features.T @ _normalize_backward(v, v_norm, dv))
        grads["W_txt"] += np.asarray(inputs.text_features.T @ _normalize_backward(t, t_norm, dt))
        grads["log_tau"] += d_tau * tau
        return float(sum(parts.values())), parts, grads

    # === Persistência ===
    def save(self, path, **metadata):
        joblib.dump({
            "metadata": metadata,
            "params": self.params,
            "hash_dim": self.hash_dim,
            "embedding_dim": self.embedding_dim,
            "encoder": self.encoder,
            "classes": self.classes,
            "vocabulary": self.vocabulary,
        }, path)

    @classmethod
    def load(cls, path) -> "ReferenceRetrievalModel":
        artifact = joblib.load(path)
        params = artifact["params"]
        model = cls(
            image_dim=params["W_img"].shape[0],
            hash_dim=artifact["hash_dim"],
            embedding_dim=artifact["embedding_dim"],
            n_classes=len(artifact["classes"]),
            vocabulary=artifact["vocabulary"],
            encoder=artifact["encoder"],
            classes=artifact["classes"],
        )
        model.params = params
        return model


class Adam:
    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(a) for k, a in params.items()}
        self.v = {k: np.zeros_like(a) for k, a in params.items()}

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
