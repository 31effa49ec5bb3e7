# === config.py ===
# Configuração da execução: arquivo chave=valor lido com python-dotenv e
# validado num PipelineConfig imutável.
import logging
from pathlib import Path
from typing import Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.errors import ConfigError

logger = logging.getLogger(__name__)

LossName = Literal["itc", "itm", "sdm", "irr", "id"]

PATH_FIELDS = (
    "manifest_path",
    "style_corpus_path",
    "captions_path",
    "model_path",
    "report_path",
    "history_path",
)


class PipelineConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    # etapa de geração
    vqa_backend: str = "mock"
    a2t_mode: Literal["template", "lm"] = "template"
    a2t_backend: str = "echo-template"
    caption_parts: Literal["fineic", "a2t"] = "fineic"
    workers: int = Field(4, ge=1)
    flip_probability: float = Field(0.0, ge=0.0, le=1.0)
    confidence_correct_lo: float = Field(1.0, gt=0.0, le=1.0)
    confidence_correct_hi: float = Field(1.0, gt=0.0, le=1.0)
    confidence_flipped_lo: float = Field(1.0, gt=0.0, le=1.0)
    confidence_flipped_hi: float = Field(1.0, gt=0.0, le=1.0)
    max_style_texts: int = Field(0, ge=0)

    # etapa de recuperação
    beta: float = Field(0.8, ge=0.0, allow_inf_nan=False)
    beta_grid: tuple[float, ...] = (0.0, 0.4, 0.8, 1.2)
    temperature_init: float = Field(0.07, gt=0.0)
    batch_size: int = Field(32, ge=2)
    epochs: int = Field(10, ge=1)
    max_steps: int = Field(200, ge=0)
    learning_rate: float = Field(0.01, gt=0.0)
    embedding_dim: int = Field(64, ge=1)
    hash_dim: int = Field(4096, ge=16)
    loss_set: tuple[LossName, ...] = ("itc", "itm")
    itm_strategy: Literal["uniform", "hard"] = "uniform"
    sdm_epsilon: float = Field(1e-8, gt=0.0)
    irr_mask_rate: float = Field(0.15, gt=0.0, le=1.0)
    eval_split: Literal["train", "val", "test"] = "test"
    query_source: Literal["auto", "reference", "template", "pseudo"] = "auto"

    seed: int = 0

    # corpus sintético
    synthetic_identities: int = Field(0, ge=0)
    images_per_identity: int = Field(4, ge=1)
    synthetic_values_per_key: int = Field(0, ge=0)

    manifest_path: Path = Path("data/manifest.jsonl")
    style_corpus_path: Path = Path("data/style_corpus.jsonl")
    captions_path: Path = Path("out/captions.jsonl")
    model_path: Path = Path("out/model.joblib")
    report_path: Path = Path("out/report.json")
    history_path: Path = Path("out/history.csv")

    @field_validator("beta_grid", "loss_set", mode="before")
    @classmethod
    def _split_list(cls, v):
        if isinstance(v, str):
            return tuple(part.strip() for part in v.split(",") if part.strip())
        return v

    @field_validator("beta_grid")
    @classmethod
    def _grid_non_negative(cls, v):
        if any(b < 0.0 for b in v):
            raise ValueError("every beta in beta_grid must be >= 0")
        return v

    @model_validator(mode="after")
    def _check(self):
        if not self.loss_set:
            raise ValueError("loss_set must name at least one loss")
        if len(set(self.loss_set)) != len(self.loss_set):
            raise ValueError("loss_set lists a loss twice")
        for name in ("correct", "flipped"):
            lo = getattr(self, f"confidence_{name}_lo")
            hi = getattr(self, f"confidence_{name}_hi")
            if lo > hi:
                raise ValueError(f"confidence_{name}_lo must not exceed confidence_{name}_hi")
        return self

    def mock_options(self) -> dict:
        return {
            "flip_probability": self.flip_probability,
            "confidence_law_correct": (self.confidence_correct_lo, self.confidence_correct_hi),
            "confidence_law_flipped": (self.confidence_flipped_lo, self.confidence_flipped_hi),
            "seed": self.seed,
        }

    def resolve_paths(self, base: Path) -> "PipelineConfig":
        update = {}
        for name in PATH_FIELDS:
            p = getattr(self, name)
            if not p.is_absolute():
                update[name] = Path(base) / p
        return self.model_copy(update=update)


def _revalidate(config: PipelineConfig) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(config.model_dump())
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc


def _describe(exc: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(p) for p in e['loc']) or 'config'}: {e['msg']}" for e in exc.errors()
    )


def apply_overrides(config: PipelineConfig, **overrides) -> PipelineConfig:
    """Valores da linha de comando substituem os da config; None = não informado."""
    update = {k: v for k, v in overrides.items() if v is not None}
    if not update:
        return config
    unknown = sorted(set(update) - set(PipelineConfig.model_fields))
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    logger.debug("Config overrides: %s", update)
    return _revalidate(config.model_copy(update=update))


def load_config(path, **overrides) -> PipelineConfig:
    """Lê `path`, resolve caminhos relativos a partir da pasta do arquivo e
    aplica os overrides."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    raw = dotenv_values(path)
    missing = sorted(k for k, v in raw.items() if v is None)
    if missing:
        raise ConfigError(f"{path}: keys without a value: {missing}")
    try:
        config = PipelineConfig(**raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {_describe(exc)}") from exc
    config = config.resolve_paths(path.parent)
    logger.debug("Loaded config %s (seed=%d, beta=%s)", path, config.seed, config.beta)
    return apply_overrides(config, **overrides)
