# === schema.py ===
# Vocabulário comum às duas etapas: chaves de atributo, respostas por
# imagem, registros do corpus e a pseudo legenda entregue à recuperação.
from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from src.errors import ConfidenceOutOfRange, DuplicateKey, MissingKey, UnparseableAnswer


class AttributeKey(str, Enum):
    """Uma chave por prompt de instrução, na ordem dos prompts."""
    clothes_color = "clothes_color"
    clothes_style = "clothes_style"
    pants_color = "pants_color"
    pants_style = "pants_style"
    shoes_color = "shoes_color"
    shoes_style = "shoes_style"
    gender = "gender"
    hair_color = "hair_color"
    hair_length = "hair_length"
    glasses = "glasses"
    phone = "phone"
    umbrella = "umbrella"
    bike = "bike"
    bag = "bag"


ALL_KEYS = tuple(AttributeKey)

FIXED_KEYS = (
    AttributeKey.clothes_color,
    AttributeKey.clothes_style,
    AttributeKey.pants_color,
    AttributeKey.pants_style,
    AttributeKey.shoes_color,
    AttributeKey.shoes_style,
    AttributeKey.gender,
    AttributeKey.hair_color,
    AttributeKey.hair_length,
)
VARIABLE_KEYS = (
    AttributeKey.glasses,
    AttributeKey.phone,
    AttributeKey.umbrella,
    AttributeKey.bike,
    AttributeKey.bag,
)

# Chaves respondidas com sim/não e os tokens de cada resposta
BOOLEAN_TOKENS = {key: ("present", "absent") for key in VARIABLE_KEYS}
BOOLEAN_TOKENS[AttributeKey.hair_length] = ("long", "short")

PRESENT = "present"
ABSENT = "absent"


class AttributeAnswer(BaseModel):
    model_config = ConfigDict(frozen=True)

    key: AttributeKey
    raw_answer: str
    value: str
    confidence: float


class AttributeSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    image_id: str
    answers: tuple[AttributeAnswer, ...]

    def answer(self, key: AttributeKey) -> AttributeAnswer:
        for a in self.answers:
            if a.key == key:
                return a
        raise MissingKey(AttributeKey(key).value)

    def value(self, key: AttributeKey) -> str:
        return self.answer(key).value

    def values(self) -> dict:
        return {a.key.value: a.value for a in self.answers}

    def confidences(self) -> list[float]:
        return [a.confidence for a in self.answers]


class ImageRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    image_id: str
    path: str
    identity_id: str
    split: Literal["train", "val", "test"]


class TextRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    text_id: str
    text: str = Field(min_length=1)


class PseudoCaption(BaseModel):
    model_config = ConfigDict(frozen=True)

    image_id: str
    text: str
    confidence: float
    log_confidence: float
    source: Literal["template", "lm"]
    ic_caption: str = ""
    attribute_set: AttributeSet


def validate_attribute_set(attribute_set: AttributeSet) -> AttributeSet:
    """Devolve o conjunto intacto se cada chave tem uma única resposta, com
    confiança em (0, 1]."""
    seen = set()
    for a in attribute_set.answers:
        if a.key in seen:
            raise DuplicateKey(a.key.value)
        seen.add(a.key)
        if not (0.0 < a.confidence <= 1.0):
            raise ConfidenceOutOfRange(
                f"confidence {a.confidence!r} for '{a.key.value}' of image "
                f"{attribute_set.image_id} is outside (0, 1]"
            )
        tokens = BOOLEAN_TOKENS.get(a.key)
        if tokens is not None and a.value not in tokens:
            raise UnparseableAnswer(a.key.value, a.value, attribute_set.image_id)
    for key in ALL_KEYS:
        if key not in seen:
            raise MissingKey(key.value)
    return attribute_set
