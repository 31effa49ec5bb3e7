# === i2a.py ===
# Extração imagem -> atributos: os 14 prompts de instrução passam por um
# backend de VQA, as respostas são normalizadas e as confianças limitadas.
import logging
import math
from typing import Callable, Protocol

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from src.confidence import clamp_confidence
from src.errors import BackendFailure, GtrError, UnknownBackend, UnknownImage, UnparseableAnswer
from src.schema import (
    ALL_KEYS,
    BOOLEAN_TOKENS,
    AttributeAnswer,
    AttributeKey,
    AttributeSet,
    ImageRecord,
    validate_attribute_set,
)
from src.seeding import rng_for

logger = logging.getLogger(__name__)


class InstructionPrompt(BaseModel):
    model_config = ConfigDict(frozen=True)

    key: AttributeKey
    question: str


PROMPTS = (
    InstructionPrompt(key=AttributeKey.clothes_color, question="What is the color of the clothes?"),
    InstructionPrompt(key=AttributeKey.clothes_style, question="What is the style of the clothes?"),
    InstructionPrompt(key=AttributeKey.pants_color, question="What is the color of the pants?"),
    InstructionPrompt(key=AttributeKey.pants_style, question="What is the style of the pants?"),
    InstructionPrompt(key=AttributeKey.shoes_color, question="What is the color of the shoes?"),
    InstructionPrompt(key=AttributeKey.shoes_style, question="What is the style of the shoes?"),
    InstructionPrompt(key=AttributeKey.gender, question="What is the gender of the person?"),
    InstructionPrompt(key=AttributeKey.hair_color, question="What is the color of the hair?"),
    InstructionPrompt(key=AttributeKey.hair_length, question="Is the person with long hair?"),
    InstructionPrompt(key=AttributeKey.glasses, question="Is the person wearing glasses?"),
    InstructionPrompt(key=AttributeKey.phone, question="Is the person holding a mobile phone?"),
    InstructionPrompt(key=AttributeKey.umbrella, question="Is the person holding an umbrella?"),
    InstructionPrompt(key=AttributeKey.bike, question="Is the person riding a bike?"),
    InstructionPrompt(key=AttributeKey.bag, question="Is the person carrying a bag?"),
)
_PROMPT_BY_QUESTION = {p.question: p for p in PROMPTS}


def builtin_prompt_set() -> list[InstructionPrompt]:
    return list(PROMPTS)


class VqaResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    raw_answer: str
    confidence: float

    @field_validator("confidence")
    @classmethod
    def _finite(cls, v):
        if not math.isfinite(v) or v < 0.0 or v > 1.0:
            raise ValueError(f"VQA confidence must be finite in [0, 1], got {v!r}")
        return v


class VqaBackend(Protocol):
    def answer(self, image: ImageRecord, question: str) -> VqaResponse:
        ...

    def caption(self, image: ImageRecord) -> str:
        ...


# === Normalização das respostas ===
def normalize_answer(key: AttributeKey, raw: str) -> str:
    """Converte a resposta bruta do VQA no token gravado para `key`.

    Chaves sim/não viram present/absent (long/short em hair_length); as
    demais guardam a resposta sem espaços e em minúsculas.
    """
    key = AttributeKey(key)
    text = raw.strip().lower()
    if not text:
        raise UnparseableAnswer(key.value, raw)
    tokens = BOOLEAN_TOKENS.get(key)
    if tokens is None:
        return text
    if text.startswith("yes"):
        return tokens[0]
    if text.startswith("no"):
        return tokens[1]
    raise UnparseableAnswer(key.value, raw)


def canonical_value(key: AttributeKey, raw: str) -> str:
    """Igual a normalize_answer, mas aceita tokens já normalizados
    (present/absent, long/short) como vêm nas tabelas de verdade."""
    key = AttributeKey(key)
    tokens = BOOLEAN_TOKENS.get(key)
    text = str(raw).strip().lower()
    if tokens is not None and text in tokens:
        return text
    return normalize_answer(key, str(raw))


# === Extração ===
def extract_attributes(image: ImageRecord, backend: VqaBackend) -> AttributeSet:
    """Faz cada pergunta sobre `image`; uma resposta por prompt, na ordem.

    Falha no primeiro erro do backend: nunca devolve um conjunto parcial.
    """
    answers = []
    for prompt in PROMPTS:
        try:
            response = backend.answer(image, prompt.question)
        except GtrError:
            raise
        except Exception as exc:
            raise BackendFailure(
                f"backend failed on '{prompt.key.value}' for image {image.image_id}: {exc}",
                key=prompt.key.value,
                image_id=image.image_id,
            ) from exc
        try:
            value = normalize_answer(prompt.key, response.raw_answer)
        except UnparseableAnswer as exc:
            raise UnparseableAnswer(prompt.key.value, response.raw_answer, image.image_id) from exc
        answers.append(
            AttributeAnswer(
                key=prompt.key,
                raw_answer=response.raw_answer,
                value=value,
                confidence=clamp_confidence(response.confidence),
            )
        )
    return validate_attribute_set(AttributeSet(image_id=image.image_id, answers=tuple(answers)))


# === Oráculo simulado ===
class MockOracleConfig(BaseModel):
    """Substituto com semente de um modelo VQA, guiado pela tabela de verdade."""
    model_config = ConfigDict(frozen=True)

    truth_table: dict[str, dict[AttributeKey, str]]
    flip_probability: float = 0.0
    confidence_law_correct: tuple[float, float] = (1.0, 1.0)
    confidence_law_flipped: tuple[float, float] = (1.0, 1.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_laws(self):
        if not (0.0 <= self.flip_probability <= 1.0):
            raise ValueError("flip_probability must lie in [0, 1]")
        for name in ("confidence_law_correct", "confidence_law_flipped"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi <= 1.0):
                raise ValueError(f"{name} must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})")
        return self

    def vocabulary(self, key: AttributeKey) -> list[str]:
        return sorted({row[key] for row in self.truth_table.values() if key in row})


def _boolean_raw(key: AttributeKey, value: str) -> str:
    return "yes" if value == BOOLEAN_TOKENS[key][0] else "no"


def mock_oracle_answer(config: MockOracleConfig, image_id: str, prompt: InstructionPrompt) -> VqaResponse:
    """Responde `prompt` pela tabela de verdade, trocando a resposta com
    probabilidade flip_probability. O sorteio só depende de (seed, image_id, key)."""
    row = config.truth_table.get(image_id)
    if row is None:
        raise UnknownImage(f"image {image_id} is not in the mock truth table")
    key = prompt.key
    truth = row[key]
    rng = rng_for(config.seed, "mock-oracle", image_id, ALL_KEYS.index(key))

    flipped = rng.random() < config.flip_probability
    lo, hi = config.confidence_law_flipped if flipped else config.confidence_law_correct
    confidence = float(rng.uniform(lo, hi))

    value = truth
    if flipped:
        tokens = BOOLEAN_TOKENS.get(key)
        if tokens is not None:
            value = tokens[1] if truth == tokens[0] else tokens[0]
        else:
            wrong = [v for v in config.vocabulary(key) if v != truth]
            if wrong:
                value = wrong[int(rng.integers(len(wrong)))]

    raw = _boolean_raw(key, value) if key in BOOLEAN_TOKENS else value
    return VqaResponse(raw_answer=raw, confidence=confidence)


class MockOracleBackend:
    def __init__(self, config: MockOracleConfig):
        self.config = config

    def answer(self, image: ImageRecord, question: str) -> VqaResponse:
        prompt = _PROMPT_BY_QUESTION.get(question)
        if prompt is None:
            raise BackendFailure(f"mock oracle has no answer for question {question!r}")
        return mock_oracle_answer(self.config, image.image_id, prompt)

    def caption(self, image: ImageRecord) -> str:
        row = self.config.truth_table.get(image.image_id)
        if row is None:
            raise UnknownImage(f"image {image.image_id} is not in the mock truth table")
        return f"a {row[AttributeKey.gender]} walking on the street"


# === Registro de backends ===
VQA_BACKENDS: dict[str, Callable[..., VqaBackend]] = {}


def register_vqa_backend(name: str):
    def wrap(factory):
        VQA_BACKENDS[name] = factory
        return factory
    return wrap


@register_vqa_backend("mock")
def _make_mock(truth_table=None, **options) -> VqaBackend:
    if not truth_table:
        raise UnknownBackend("the mock backend needs attribute columns in the manifest")
    return MockOracleBackend(MockOracleConfig(truth_table=truth_table, **options))


def load_vqa_backend(name: str, **options) -> VqaBackend:
    factory = VQA_BACKENDS.get(name)
    if factory is None:
        raise UnknownBackend(f"unknown VQA backend '{name}' (known: {', '.join(sorted(VQA_BACKENDS))})")
    logger.info("Loading VQA backend '%s'", name)
    return factory(**options)
