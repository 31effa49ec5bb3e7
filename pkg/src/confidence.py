# === confidence.py ===
# Confiança da legenda como produto das confianças do VQA por prompt,
# guardada em log, e o peso C^beta usado por todas as perdas CS.
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.errors import ConfidenceOutOfRange
from src.schema import AttributeSet

CONFIDENCE_FLOOR = 1e-6


class ConfidenceScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    log_value: float

    @field_validator("log_value")
    @classmethod
    def _non_positive(cls, v):
        if not math.isfinite(v) or v > 0.0:
            raise ValueError(f"log confidence must be finite and <= 0, got {v!r}")
        return v

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @classmethod
    def from_value(cls, value: float) -> "ConfidenceScore":
        if not (0.0 < value <= 1.0):
            raise ConfidenceOutOfRange(f"confidence {value!r} is outside (0, 1]")
        return cls(log_value=math.log(value))


class BetaWeight(BaseModel):
    model_config = ConfigDict(frozen=True)

    beta: float = Field(ge=0.0, allow_inf_nan=False)


def clamp_confidence(c: float) -> float:
    """Limita a confiança do backend a [CONFIDENCE_FLOOR, 1]."""
    if not math.isfinite(c):
        raise ConfidenceOutOfRange(f"confidence {c!r} is not finite")
    return min(1.0, max(CONFIDENCE_FLOOR, float(c)))


def aggregate_confidence(answers: AttributeSet) -> ConfidenceScore:
    """C = prod_i C_i sobre todas as respostas, calculado como exp(sum_i log C_i)."""
    logs = []
    for a in answers.answers:
        if not (CONFIDENCE_FLOOR <= a.confidence <= 1.0):
            raise ConfidenceOutOfRange(
                f"confidence {a.confidence!r} for '{a.key.value}' of image "
                f"{answers.image_id} is outside [{CONFIDENCE_FLOOR}, 1]"
            )
        logs.append(math.log(a.confidence))
    return ConfidenceScore(log_value=math.fsum(logs))


def _beta_value(beta) -> float:
    return beta.beta if isinstance(beta, BetaWeight) else BetaWeight(beta=beta).beta


def apply_beta(c: ConfidenceScore, beta) -> float:
    """C^beta; vale sempre 1 com beta = 0."""
    return math.exp(_beta_value(beta) * c.log_value)


def confidence_weights(confidences, beta) -> np.ndarray:
    """C^beta vetorizado sobre um lote de confianças em (0, 1]."""
    c = np.asarray(confidences, dtype=np.float64)
    if c.size and (np.any(~(c > 0.0)) or np.any(c > 1.0)):
        raise ConfidenceOutOfRange("batch confidences must lie in (0, 1]")
    return np.exp(_beta_value(beta) * np.log(c))
