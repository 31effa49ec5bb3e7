# === records.py ===
# Arquivos JSON-lines do pipeline: o manifesto do dataset, o arquivo de
# pseudo legendas, o corpus de estilo e os pares de estilo dele.
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, ValidationError

from src.confidence import aggregate_confidence
from src.errors import (
    DuplicateImageId,
    GtrError,
    MixedAttributeCoverage,
    ParseError,
)
from src.i2a import canonical_value
from src.schema import (
    ALL_KEYS,
    AttributeAnswer,
    AttributeKey,
    AttributeSet,
    ImageRecord,
    PseudoCaption,
    TextRecord,
    validate_attribute_set,
)

logger = logging.getLogger(__name__)

CONFIDENCE_TOLERANCE = 1e-12


def _read_lines(path: Path):
    """(número da linha, texto) de cada linha não vazia de um arquivo UTF-8."""
    if not path.exists():
        raise ParseError(f"file {path} not found")
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if line.strip():
                yield lineno, line


def _parse(model, path: Path):
    for lineno, line in _read_lines(path):
        try:
            yield lineno, model.model_validate_json(line)
        except ValidationError as exc:
            first = exc.errors()[0]
            where = ".".join(str(p) for p in first["loc"]) or "line"
            raise ParseError(f"{where}: {first['msg']}", line=lineno, path=path) from exc


def _write_lines(path: Path, models):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for m in models:
            f.write(m.model_dump_json())
            f.write("\n")


# === Manifesto do dataset ===
class ManifestLine(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    image_id: str
    path: str
    identity_id: str
    split: Literal["train", "val", "test"]
    attributes: Optional[dict[str, str]] = None
    caption: Optional[str] = None


@dataclass
class Corpus:
    """Manifesto lido: imagens na ordem do arquivo, mais a tabela de
    atributos verdadeiros e as legendas de referência, quando existem."""
    images: list[ImageRecord]
    truth_table: dict[str, dict[AttributeKey, str]] = field(default_factory=dict)
    reference_captions: dict[str, str] = field(default_factory=dict)

    def split(self, name: str) -> list[ImageRecord]:
        return [img for img in self.images if img.split == name]

    def by_id(self) -> dict[str, ImageRecord]:
        return {img.image_id: img for img in self.images}


def _truth_row(attributes: dict, lineno: int, path: Path) -> dict[AttributeKey, str]:
    unknown = sorted(set(attributes) - {k.value for k in ALL_KEYS})
    if unknown:
        raise ParseError(f"unknown attribute keys {unknown}", line=lineno, path=path)
    row = {}
    for key in ALL_KEYS:
        if key.value not in attributes:
            raise ParseError(f"attribute '{key.value}' missing", line=lineno, path=path)
        try:
            row[key] = canonical_value(key, attributes[key.value])
        except GtrError as exc:
            raise ParseError(str(exc), line=lineno, path=path) from exc
    return row


def ingest(manifest_path) -> Corpus:
    path = Path(manifest_path)
    images, truth, captions = [], {}, {}
    seen = {}
    for lineno, entry in _parse(ManifestLine, path):
        if entry.image_id in seen:
            raise DuplicateImageId(
                f"image_id '{entry.image_id}' on line {lineno} already used on line {seen[entry.image_id]}"
            )
        seen[entry.image_id] = lineno
        images.append(ImageRecord(image_id=entry.image_id, path=entry.path,
                                  identity_id=entry.identity_id, split=entry.split))
        if entry.attributes is not None:
            truth[entry.image_id] = _truth_row(entry.attributes, lineno, path)
        if entry.caption:
            captions[entry.image_id] = entry.caption
    if truth and len(truth) != len(images):
        raise MixedAttributeCoverage(
            f"{len(truth)} of {len(images)} manifest lines carry attributes; use all or none"
        )
    logger.info("Ingested %d images (%d identities) from %s",
                len(images), len({i.identity_id for i in images}), path)
    return Corpus(images=images, truth_table=truth, reference_captions=captions)


def write_manifest(path, lines):
    _write_lines(Path(path), lines)


# === Arquivo de pseudo legendas ===
class AttributeEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    key: AttributeKey
    value: str
    confidence: float
    raw_answer: str


class PseudoCaptionRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    image_id: str
    text: str
    confidence: float
    log_confidence: float
    source: Literal["template", "lm"]
    ic_caption: str
    attributes: list[AttributeEntry]

    @classmethod
    def from_caption(cls, caption: PseudoCaption) -> "PseudoCaptionRecord":
        return cls(
            image_id=caption.image_id,
            text=caption.text,
            confidence=caption.confidence,
            log_confidence=caption.log_confidence,
            source=caption.source,
            ic_caption=caption.ic_caption,
            attributes=[
                AttributeEntry(key=a.key, value=a.value, confidence=a.confidence, raw_answer=a.raw_answer)
                for a in caption.attribute_set.answers
            ],
        )

    def to_caption(self) -> PseudoCaption:
        """Reconstrói a legenda; a confiança gravada e o seu log precisam
        bater com o produto das confianças dos atributos."""
        attribute_set = validate_attribute_set(AttributeSet(
            image_id=self.image_id,
            answers=tuple(
                AttributeAnswer(key=e.key, raw_answer=e.raw_answer, value=e.value, confidence=e.confidence)
                for e in self.attributes
            ),
        ))
        expected = aggregate_confidence(attribute_set)
        if not math.isclose(expected.value, self.confidence, rel_tol=CONFIDENCE_TOLERANCE, abs_tol=0.0):
            raise ParseError(
                f"confidence {self.confidence!r} of image {self.image_id} does not match "
                f"the attribute confidences ({expected.value!r})"
            )
        if not math.isclose(expected.log_value, self.log_confidence, rel_tol=0.0, abs_tol=CONFIDENCE_TOLERANCE):
            raise ParseError(
                f"log_confidence {self.log_confidence!r} of image {self.image_id} does not match "
                f"the attribute confidences ({expected.log_value!r})"
            )
        return PseudoCaption(
            image_id=self.image_id,
            text=self.text,
            confidence=self.confidence,
            log_confidence=self.log_confidence,
            source=self.source,
            ic_caption=self.ic_caption,
            attribute_set=attribute_set,
        )


def write_captions(path, captions) -> Path:
    """Grava um registro por legenda, ordenado por image_id."""
    path = Path(path)
    ordered = sorted(captions, key=lambda c: c.image_id)
    _write_lines(path, (PseudoCaptionRecord.from_caption(c) for c in ordered))
    logger.info("Wrote %d pseudo captions to %s", len(ordered), path)
    return path


def read_captions(path) -> list[PseudoCaption]:
    path = Path(path)
    captions = []
    for lineno, record in _parse(PseudoCaptionRecord, path):
        try:
            captions.append(record.to_caption())
        except ParseError as exc:
            raise ParseError(str(exc), line=lineno, path=path) from exc
        except GtrError as exc:
            raise ParseError(f"{exc.code}: {exc}", line=lineno, path=path) from exc
    return captions


# === Corpus de estilo e pares de estilo ===
class StylePairRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    attributes: str
    text: str


def read_style_corpus(path) -> list[TextRecord]:
    return [record for _, record in _parse(TextRecord, Path(path))]


def write_style_corpus(path, records):
    _write_lines(Path(path), records)


def write_style_pairs(path, pairs) -> Path:
    path = Path(path)
    _write_lines(path, (StylePairRecord(attributes=p.attribute_sequence, text=p.text) for p in pairs))
    return path

