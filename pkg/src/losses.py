# === losses.py ===
# Objetivos de treino ponderados pela confiança. Cada perda devolve o valor
# e os gradientes analíticos em relação às entradas; o peso por amostra é
# C^beta, então beta = 0 devolve a perda sem peso.
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import log_softmax

from src.confidence import confidence_weights
from src.errors import DegenerateBatch, DimensionMismatch, InvalidBatch, NoNegativeAvailable


DEFAULT_TEMPERATURE = 0.07
DEFAULT_SDM_EPSILON = 1e-8
UNIT_NORM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class LossOutput:
    value: float
    grads: dict = field(default_factory=dict)


# === Lotes ===
@dataclass
class TrainingBatch:
    """A linha i dos embeddings de imagem forma par com a linha i dos de texto."""
    image_embeddings: np.ndarray
    text_embeddings: np.ndarray
    confidences: np.ndarray
    identity_labels: np.ndarray
    temperature: float = DEFAULT_TEMPERATURE
    beta: float = 0.8

    @property
    def size(self) -> int:
        return int(np.shape(self.image_embeddings)[0])

    def validate(self) -> "TrainingBatch":
        v = np.asarray(self.image_embeddings, dtype=np.float64)
        t = np.asarray(self.text_embeddings, dtype=np.float64)
        if v.ndim != 2 or v.shape != t.shape:
            raise DimensionMismatch(f"image/text embeddings differ in shape: {v.shape} vs {t.shape}")
        m = v.shape[0]
        if m == 0:
            raise DegenerateBatch("empty batch")
        if len(self.confidences) != m or len(self.identity_labels) != m:
            raise DimensionMismatch("confidences and identity labels must have one entry per pair")
        for name, e in (("image", v), ("text", t)):
            norms = np.linalg.norm(e, axis=1)
            if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOLERANCE):
                raise InvalidBatch(f"{name} embeddings must be unit-norm rows")
        if not (np.isfinite(self.temperature) and self.temperature > 0.0):
            raise InvalidBatch(f"temperature must be positive, got {self.temperature}")
        return self


@dataclass
class ItmBatch:
    pair_scores: np.ndarray   # K x 2 logits
    labels: np.ndarray        # K x 2 one-hot, [0, 1] para par casado
    confidences: np.ndarray
    beta: float = 0.8


@dataclass
class ItmPairs:
    """Pares sorteados de um TrainingBatch para a cabeça de matching."""
    image_index: np.ndarray
    text_index: np.ndarray
    labels: np.ndarray
    confidences: np.ndarray


@dataclass
class IrrBatch:
    logits: Sequence[np.ndarray]    # por texto: |M_t| x |V|
    targets: Sequence[np.ndarray]   # por texto: linhas one-hot, mesmo formato
    confidences: np.ndarray
    beta: float = 0.8


@dataclass
class IdBatch:
    text_features: np.ndarray
    image_features: np.ndarray
    class_weights: np.ndarray       # M x d
    biases: np.ndarray              # M
    labels: np.ndarray              # N índices de classe ou N x M one-hot
    confidences: np.ndarray
    beta: float = 0.8


def _pair_arrays(batch: TrainingBatch):
    batch.validate()
    return (np.asarray(batch.image_embeddings, dtype=np.float64),
            np.asarray(batch.text_embeddings, dtype=np.float64))


# === CS-ITC ===
def cs_itc_loss(batch: TrainingBatch) -> LossOutput:
    """InfoNCE simétrico com a log-verossimilhança do par i escalada por C_i^beta."""
    v, t = _pair_arrays(batch)
    m = v.shape[0]
    w = confidence_weights(batch.confidences, batch.beta)
    tau = float(batch.temperature)

    s = v @ t.T
    logits = s / tau
    log_p_row = log_softmax(logits, axis=1)
    log_p_col = log_softmax(logits, axis=0)
    diag = np.arange(m)
    loss_i2t = -np.mean(w * log_p_row[diag, diag])
    loss_t2i = -np.mean(w * log_p_col[diag, diag])

    eye = np.eye(m)
    g_row = w[:, None] * (np.exp(log_p_row) - eye) / m
    g_col = (np.exp(log_p_col) - eye) * w[None, :] / m
    g_logits = (g_row + g_col) / 2.0
    d_s = g_logits / tau
    return LossOutput(
        value=float((loss_i2t + loss_t2i) / 2.0),
        grads={
            "image_embeddings": d_s @ t,
            "text_embeddings": d_s.T @ v,
            "temperature": float(-np.sum(g_logits * s) / tau**2),
        },
    )


# === CS-ITM ===
def _check_one_hot(labels: np.ndarray, width: int = None):
    if labels.ndim != 2 or (width is not None and labels.shape[1] != width):
        raise DimensionMismatch(f"labels must be one-hot rows, got shape {labels.shape}")
    if not (np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1)):
        raise ValueError("labels must be one-hot rows")


def cs_itm_loss(batch: ItmBatch) -> LossOutput:
    """Média sobre os pares de C_k^beta vezes a entropia cruzada de 2 classes."""
    phi = np.asarray(batch.pair_scores, dtype=np.float64)
    y = np.asarray(batch.labels, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[0] == 0:
        raise DegenerateBatch("ITM batch needs at least one pair")
    if phi.shape != y.shape or phi.shape[1] != 2:
        raise DimensionMismatch(f"pair scores {phi.shape} and labels {y.shape} must both be K x 2")
    _check_one_hot(y, 2)
    k = phi.shape[0]
    w = confidence_weights(batch.confidences, batch.beta)

    log_p = log_softmax(phi, axis=1)
    ce = -np.sum(y * log_p, axis=1)
    grad = w[:, None] * (np.exp(log_p) - y) / k
    return LossOutput(value=float(np.mean(w * ce)), grads={"pair_scores": grad})


def sample_itm_pairs(batch: TrainingBatch, strategy: str = "uniform", seed: int = 0) -> ItmPairs:
    """3M pares: M casados (i, i), M imagem -> texto de outra identidade e M
    texto -> imagem de outra identidade. Cada par leva a confiança do seu texto."""
    v, t = _pair_arrays(batch)
    m = v.shape[0]
    if m < 2:
        raise DegenerateBatch("ITM sampling needs at least two pairs")
    if strategy not in ("uniform", "hard"):
        raise ValueError(f"unknown ITM sampling strategy '{strategy}'")
    ids = np.asarray(batch.identity_labels)
    other = ids[:, None] != ids[None, :]
    if not np.any(other):
        raise NoNegativeAvailable("every pair in the batch shares one identity")

    rng = np.random.default_rng(seed)
    sim = v @ t.T if strategy == "hard" else None

    def pick(i, scores):
        candidates = np.flatnonzero(other[i])
        if strategy == "hard":
            return int(candidates[np.argmax(scores[candidates])])
        return int(rng.choice(candidates))

    neg_text = np.array([pick(i, sim[i] if sim is not None else None) for i in range(m)])
    neg_image = np.array([pick(j, sim[:, j] if sim is not None else None) for j in range(m)])

    diag = np.arange(m)
    image_index = np.concatenate([diag, diag, neg_image])
    text_index = np.concatenate([diag, neg_text, diag])
    labels = np.zeros((3 * m, 2))
    labels[:m, 1] = 1.0
    labels[m:, 0] = 1.0
    conf = np.asarray(batch.confidences, dtype=np.float64)
    return ItmPairs(image_index=image_index, text_index=text_index, labels=labels,
                    confidences=conf[text_index])


# === CS-SDM ===
def _kl_rows(z: np.ndarray, log_r: np.ndarray):
    """Média sobre as linhas de KL(softmax(z_i) || r_i) e o gradiente em z."""
    n = z.shape[0]
    log_p = log_softmax(z, axis=1)
    p = np.exp(log_p)
    g = log_p - log_r
    value = np.sum(p * g) / n
    dz = p * (g - np.sum(p * g, axis=1, keepdims=True)) / n
    return value, dz


def cs_sdm_loss(batch: TrainingBatch, epsilon: float = DEFAULT_SDM_EPSILON) -> LossOutput:
    """Casamento de distribuições de similaridade, com as confianças dos
    textos dentro do softmax.

    Imagem -> texto escala a coluna j por C_j^beta; texto -> imagem escala a
    linha do texto consultado pelo seu C_i^beta.
    """
    v, t = _pair_arrays(batch)
    w = confidence_weights(batch.confidences, batch.beta)
    tau = float(batch.temperature)
    ids = np.asarray(batch.identity_labels)

    y = (ids[:, None] == ids[None, :]).astype(np.float64)
    log_r = np.log(y / y.sum(axis=1, keepdims=True) + epsilon)

    s = v @ t.T
    z_i2t = s * w[None, :] / tau
    z_t2i = s.T * w[:, None] / tau
    loss_i2t, dz_i2t = _kl_rows(z_i2t, log_r)
    loss_t2i, dz_t2i = _kl_rows(z_t2i, log_r.T)

    d_s = dz_i2t * w[None, :] / tau + (dz_t2i * w[:, None] / tau).T
    d_tau = -(np.sum(dz_i2t * z_i2t) + np.sum(dz_t2i * z_t2i)) / tau
    return LossOutput(
        value=float(loss_i2t + loss_t2i),
        grads={
            "image_embeddings": d_s @ t,
            "text_embeddings": d_s.T @ v,
            "temperature": float(d_tau),
        },
    )


# === CS-IRR ===
def cs_irr_loss(batch: IrrBatch) -> LossOutput:
    """Entropia cruzada dos tokens mascarados, cada texto escalado por C_t^beta / (|M_t| |V|)."""
    n = len(batch.logits)
    if n == 0 or len(batch.targets) != n:
        raise DegenerateBatch("IRR batch needs one logit block and one target block per text")
    w = confidence_weights(batch.confidences, batch.beta)
    total = 0.0
    grads = []
    for w_t, p_t, y_t in zip(w, batch.logits, batch.targets):
        p_t = np.asarray(p_t, dtype=np.float64)
        y_t = np.asarray(y_t, dtype=np.float64)
        if p_t.ndim != 2 or p_t.shape[0] == 0:
            raise DegenerateBatch("every text needs at least one masked token")
        if p_t.shape != y_t.shape:
            raise DimensionMismatch(f"logits {p_t.shape} and targets {y_t.shape} differ")
        _check_one_hot(y_t)
        n_masked, vocab = p_t.shape
        scale = w_t / (n_masked * vocab)
        log_q = log_softmax(p_t, axis=1)
        total += scale * np.sum(y_t * log_q)
        grads.append(scale * (np.exp(log_q) * y_t.sum(axis=1, keepdims=True) - y_t) / n)
    return LossOutput(value=float(-total / n), grads={"logits": grads})


# === CS-ID ===
def _one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        _check_one_hot(labels, n_classes)
        return labels.astype(np.float64)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels.astype(int)] = 1.0
    return out


def cs_id_loss(batch: IdBatch) -> LossOutput:
    """Classificação de identidade nas duas modalidades; nos logits do texto
    a projeção W_k . f_i é escalada por C_i^beta (o bias não). Normalizado por 1/(MN)."""
    ft = np.asarray(batch.text_features, dtype=np.float64)
    fv = np.asarray(batch.image_features, dtype=np.float64)
    wc = np.asarray(batch.class_weights, dtype=np.float64)
    b = np.asarray(batch.biases, dtype=np.float64)
    n, m = ft.shape[0], wc.shape[0]
    if n == 0 or m < 2:
        raise DegenerateBatch("ID loss needs at least one sample and two classes")
    if fv.shape != ft.shape or wc.shape[1] != ft.shape[1] or b.shape != (m,):
        raise DimensionMismatch("feature, weight and bias shapes do not agree")
    y = _one_hot(batch.labels, m)
    w = confidence_weights(batch.confidences, batch.beta)
    norm = m * n

    proj_t = ft @ wc.T
    z_t = w[:, None] * proj_t + b
    z_v = fv @ wc.T + b
    log_t = log_softmax(z_t, axis=1)
    log_v = log_softmax(z_v, axis=1)
    loss_t = -np.sum(y * log_t) / norm
    loss_v = -np.sum(y * log_v) / norm

    dz_t = (np.exp(log_t) - y) / norm
    dz_v = (np.exp(log_v) - y) / norm
    return LossOutput(
        value=float(loss_v + loss_t),
        grads={
            "text_features": w[:, None] * (dz_t @ wc),
            "image_features": dz_v @ wc,
            "class_weights": (dz_t * w[:, None]).T @ ft + dz_v.T @ fv,
            "biases": dz_t.sum(axis=0) + dz_v.sum(axis=0),
        },
    )
