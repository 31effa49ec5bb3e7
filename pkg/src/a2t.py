# === a2t.py ===
# Atributos -> texto: o template fixo (só imagens), os pares de estilo
# <atributos, texto> para um modelo de linguagem (com corpus de textos) e
# a montagem da pseudo legenda final.
import logging
import os
import re
from typing import Callable, Protocol, Sequence

from pydantic import BaseModel, ConfigDict, model_validator

from src.chunker import LexiconChunker, NounPhraseParser
from src.confidence import ConfidenceScore
from src.errors import BackendFailure, EmptyExtraction, EmptyText, UnknownBackend
from src.schema import PRESENT, AttributeKey, AttributeSet, PseudoCaption, TextRecord

logger = logging.getLogger(__name__)

K = AttributeKey

# Acessórios da segunda frase, na ordem do template, com artigo
_ACCESSORIES = (
    (K.bag, "a bag"),
    (K.glasses, "glasses"),
    (K.phone, "a phone"),
    (K.umbrella, "an umbrella"),
)
_MALE_WORDS = {"man", "male", "boy"}


def _slot(value: str) -> str:
    return value.replace("<", "").replace(">", "").strip()


def pronoun_for(gender: str) -> str:
    words = re.findall(r"[a-z]+", gender.lower())
    return "He" if _MALE_WORDS.intersection(words) else "She"


def _join_items(items: list[str]) -> str:
    if len(items) == 1:
        return items[0]
    return ", ".join(items[:-1]) + " and " + items[-1]


# === Template ===
def render_template(attribute_set: AttributeSet) -> str:
    """Preenche o template de três frases.

    A primeira frase sempre traz os atributos fixos. A segunda lista só os
    acessórios presentes e some quando não há nenhum; a terceira só aparece
    com bicicleta.
    """
    v = {key: _slot(attribute_set.value(key)) for key in AttributeKey}
    gender = v[K.gender]
    sentences = [
        f"The {gender} with {v[K.hair_color]} {v[K.hair_length]} hair wears "
        f"{v[K.clothes_color]} {v[K.clothes_style]}, {v[K.pants_color]} {v[K.pants_style]} "
        f"and {v[K.shoes_color]} {v[K.shoes_style]}."
    ]
    carried = [text for key, text in _ACCESSORIES if v[key] == PRESENT]
    if carried:
        sentences.append(f"{pronoun_for(gender)} is carrying {_join_items(carried)}.")
    if v[K.bike] == PRESENT:
        sentences.append(f"The {gender} is riding a bike.")
    return " ".join(sentences)


def attribute_phrases(attribute_set: AttributeSet) -> list[str]:
    """Sequência de atributos W de uma imagem, no formato dos sintagmas que
    o chunker extrai de descrições reais."""
    v = attribute_set.values()
    phrases = [
        v[K.gender],
        f"{v[K.hair_color]} {v[K.hair_length]} hair",
        f"{v[K.clothes_color]} {v[K.clothes_style]}",
        f"{v[K.pants_color]} {v[K.pants_style]}",
        f"{v[K.shoes_color]} {v[K.shoes_style]}",
    ]
    phrases += [text for key, text in _ACCESSORIES if v[key] == PRESENT]
    if v[K.bike] == PRESENT:
        phrases.append("a bike")
    return phrases


# === Pares de estilo ===
class StylePair(BaseModel):
    model_config = ConfigDict(frozen=True)

    attributes: tuple[str, ...]
    text: str

    @model_validator(mode="after")
    def _attributes_in_text(self):
        if not self.attributes:
            raise ValueError("a style pair needs at least one attribute")
        missing = [w for w in self.attributes if w not in self.text]
        if missing:
            raise ValueError(f"attributes {missing} do not occur in {self.text!r}")
        return self

    @property
    def attribute_sequence(self) -> str:
        return " ".join(self.attributes)


def extract_style_attributes(text, parser: NounPhraseParser) -> list[str]:
    """Sintagmas nominais de `text` na ordem em que aparecem, sem repetição."""
    raw = text.text if isinstance(text, TextRecord) else text
    if not raw or not raw.strip():
        raise EmptyText("cannot extract attributes from an empty text")
    phrases = list(dict.fromkeys(parser.noun_phrases(raw)))
    if not phrases:
        raise EmptyExtraction(f"no noun phrase found in {raw!r}")
    return phrases


def build_style_pairs(corpus: Sequence[TextRecord], parser: NounPhraseParser = None,
                      limit: int = 0) -> tuple[list[StylePair], int]:
    """Um par por texto com extração não vazia. Retorna (pares, ignorados).

    `limit` > 0 usa só os primeiros `limit` textos do corpus.
    """
    if not corpus:
        raise EmptyText("the style corpus is empty")
    parser = parser or LexiconChunker()
    texts = corpus[:limit] if limit > 0 else corpus
    pairs, skipped = [], 0
    for record in texts:
        try:
            attrs = extract_style_attributes(record, parser)
        except (EmptyExtraction, EmptyText):
            skipped += 1
            logger.debug("No noun phrase in text %s, skipped", record.text_id)
            continue
        pairs.append(StylePair(attributes=tuple(attrs), text=record.text))
    logger.info("Built %d style pairs (%d texts skipped)", len(pairs), skipped)
    return pairs, skipped


# === Backends A2T ===
class A2TState(BaseModel):
    model_config = ConfigDict(frozen=True)

    backend: str
    n_pairs: int = 0
    examples: tuple[StylePair, ...] = ()


class A2TBackend(Protocol):
    def convert(self, attributes: Sequence[str], attribute_set: AttributeSet) -> str:
        ...

    def finetune(self, pairs: Sequence[StylePair]) -> A2TState:
        ...


class EchoTemplateBackend:
    """Ignora os pares de estilo e usa o template."""

    name = "echo-template"

    def __init__(self):
        self.state = A2TState(backend=self.name)

    def finetune(self, pairs: Sequence[StylePair]) -> A2TState:
        self.state = A2TState(backend=self.name, n_pairs=len(pairs))
        return self.state

    def convert(self, attributes: Sequence[str], attribute_set: AttributeSet) -> str:
        return render_template(attribute_set)


class GeminiA2TBackend:
    """Sequência de atributos -> texto pelo Gemini, com os pares de estilo
    como exemplos no prompt."""

    name = "gemini"

    def __init__(self, client, model: str = "gemini-2.5-flash", n_examples: int = 8):
        self.client = client
        self.model = model
        self.n_examples = n_examples
        self.state = A2TState(backend=self.name)

    def finetune(self, pairs: Sequence[StylePair]) -> A2TState:
        self.state = A2TState(
            backend=self.name, n_pairs=len(pairs), examples=tuple(pairs[: self.n_examples])
        )
        return self.state

    def _prompt(self, attributes: Sequence[str]) -> str:
        blocks = [f"Attributes: {p.attribute_sequence}\nText: {p.text}" for p in self.state.examples]
        blocks.append(f"Attributes: {' '.join(attributes)}\nText:")
        return "\n\n".join(blocks)

    def convert(self, attributes: Sequence[str], attribute_set: AttributeSet) -> str:
        from google.genai import types

        system_prompt = (
            "You write one short description of a pedestrian from a list of attribute "
            "phrases, in the style of the examples. Use every attribute and invent nothing."
        )
        try:
            response = self.client.models.generate_content(
                model=self.model,
                contents=self._prompt(attributes),
                config=types.GenerateContentConfig(system_instruction=system_prompt, temperature=0.0),
            )
            text = (response.text or "").strip()
        except Exception as exc:
            raise BackendFailure(
                f"Gemini A2T failed for image {attribute_set.image_id}: {exc}",
                image_id=attribute_set.image_id,
            ) from exc
        if not text:
            raise BackendFailure(f"Gemini returned no text for image {attribute_set.image_id}",
                                 image_id=attribute_set.image_id)
        return text


def _make_gemini(**options):
    from dotenv import load_dotenv
    from google import genai

    load_dotenv()
    api_key = os.getenv("GEMINI_API_KEY")
    if not api_key:
        raise UnknownBackend("GEMINI_API_KEY is not set; the gemini A2T backend is unavailable")
    return GeminiA2TBackend(genai.Client(api_key=api_key), **options)


A2T_BACKENDS: dict[str, Callable[..., A2TBackend]] = {
    "echo-template": lambda **options: EchoTemplateBackend(),
    "gemini": _make_gemini,
}


def load_a2t_backend(name: str, **options) -> A2TBackend:
    factory = A2T_BACKENDS.get(name)
    if factory is None:
        raise UnknownBackend(f"unknown A2T backend '{name}' (known: {', '.join(sorted(A2T_BACKENDS))})")
    return factory(**options)


# === Legenda final ===
def compose_pseudo_caption(a2t_text: str, ic_caption: str, attribute_set: AttributeSet,
                           confidence: ConfidenceScore, source: str = "template") -> PseudoCaption:
    """Texto A2T seguido da legenda da imagem, separados por um espaço."""
    if not a2t_text:
        raise EmptyText("A2T text must not be empty")
    text = f"{a2t_text} {ic_caption}" if ic_caption else a2t_text
    return PseudoCaption(
        image_id=attribute_set.image_id,
        text=text,
        confidence=confidence.value,
        log_confidence=confidence.log_value,
        source=source,
        ic_caption=ic_caption,
        attribute_set=attribute_set,
    )
