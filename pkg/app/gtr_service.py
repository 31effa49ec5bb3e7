# === gtr_service.py ===
# Orquestração das etapas: ingest -> generate -> train -> evaluate, mais o
# corpus sintético e a varredura de beta. Cada etapa lê e grava os
# caminhos do PipelineConfig.
import logging
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd

from src.a2t import (
    A2T_BACKENDS,
    attribute_phrases,
    build_style_pairs,
    compose_pseudo_caption,
    load_a2t_backend,
    render_template,
)
from src.config import PipelineConfig, apply_overrides
from src.confidence import aggregate_confidence
from src.errors import BackendFailure, ConfigError, DegenerateCorpus, GtrError, UnknownBackend
from src.i2a import VQA_BACKENDS, extract_attributes, load_vqa_backend
from src.model import ReferenceRetrievalModel
from src.preprocess import image_features
from src.records import (
    Corpus,
    ingest,
    read_captions,
    read_style_corpus,
    write_captions,
    write_manifest,
    write_style_corpus,
    write_style_pairs,
)
from src.retrieval_eval import EvalCorpus, EvalReport, evaluate_corpus
from src.schema import ALL_KEYS, AttributeAnswer, AttributeSet, ImageRecord
from src.synthetic import make_synthetic
from src.train import save_training, train_model, truth_rows

logger = logging.getLogger(__name__)

# === Caminhos ===
BASE_DIR = Path(__file__).resolve().parent.parent
CONFIG_DIR = BASE_DIR / "configs"


def config_path(name) -> Path:
    """O caminho recebido, ou a config de mesmo nome em configs/."""
    path = Path(name)
    if not path.exists() and (CONFIG_DIR / path.name).is_file():
        return CONFIG_DIR / path.name
    return path


def check_backends(config: PipelineConfig):
    """Falha antes de qualquer etapa se um backend configurado não existe."""
    if config.vqa_backend not in VQA_BACKENDS:
        raise UnknownBackend(f"unknown VQA backend '{config.vqa_backend}' "
                             f"(known: {', '.join(sorted(VQA_BACKENDS))})")
    if config.a2t_mode == "lm" and config.a2t_backend not in A2T_BACKENDS:
        raise UnknownBackend(f"unknown A2T backend '{config.a2t_backend}' "
                             f"(known: {', '.join(sorted(A2T_BACKENDS))})")


# === Ingest ===
def make_synthetic_corpus(config: PipelineConfig, out=None) -> Path:
    if config.synthetic_identities <= 0:
        raise ConfigError("synthetic_identities must be positive to build a synthetic corpus")
    lines, texts = make_synthetic(config.synthetic_identities, config.images_per_identity, config.seed,
                                  config.synthetic_values_per_key)
    manifest = Path(out) if out else config.manifest_path
    write_manifest(manifest, lines)
    write_style_corpus(config.style_corpus_path, texts)
    logger.info("Synthetic manifest written to %s", manifest)
    return manifest


def ingest_corpus(config: PipelineConfig) -> Corpus:
    """Lê o manifesto; gera antes o sintético quando a config pede e o
    arquivo ainda não existe."""
    if not config.manifest_path.exists() and config.synthetic_identities > 0:
        make_synthetic_corpus(config)
    return ingest(config.manifest_path)


# === Geração ===
def _vqa_backend(config: PipelineConfig, corpus: Corpus):
    options = {}
    if config.vqa_backend == "mock":
        options = {"truth_table": corpus.truth_table, **config.mock_options()}
    return load_vqa_backend(config.vqa_backend, **options)


def generate_captions(corpus: Corpus, config: PipelineConfig, images=None):
    """Pseudo legendas de `images` (padrão: split de treino), na ordem de
    entrada. Retorna (legendas, pares de estilo); sem pares no modo template."""
    images = corpus.split("train") if images is None else images
    backend = _vqa_backend(config, corpus)
    a2t, pairs = None, []
    if config.a2t_mode == "lm":
        a2t = load_a2t_backend(config.a2t_backend)
        pairs, _ = build_style_pairs(read_style_corpus(config.style_corpus_path),
                                     limit=config.max_style_texts)
        a2t.finetune(pairs)

    def caption_one(image: ImageRecord):
        attributes = extract_attributes(image, backend)
        confidence = aggregate_confidence(attributes)
        if a2t is None:
            text, source = render_template(attributes), "template"
        else:
            text, source = a2t.convert(attribute_phrases(attributes), attributes), "lm"
        ic_caption = ""
        if config.caption_parts == "fineic":
            try:
                ic_caption = backend.caption(image)
            except GtrError:
                raise
            except Exception as exc:
                raise BackendFailure(f"captioning failed for image {image.image_id}: {exc}",
                                     image_id=image.image_id) from exc
        return compose_pseudo_caption(text, ic_caption, attributes, confidence, source)

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        captions = list(pool.map(caption_one, images))
    logger.info("Generated %d pseudo captions (%s A2T, parts=%s)",
                len(captions), config.a2t_mode, config.caption_parts)
    return captions, pairs


def run_generation(corpus: Corpus, config: PipelineConfig, out=None) -> Path:
    captions, pairs = generate_captions(corpus, config)
    path = write_captions(Path(out) if out else config.captions_path, captions)
    if config.a2t_mode == "lm":
        write_style_pairs(path.with_suffix(".style_pairs.jsonl"), pairs)
    return path


# === Treino ===
def train(config: PipelineConfig, corpus: Corpus = None, out=None) -> dict:
    corpus = corpus or ingest_corpus(config)
    captions = read_captions(config.captions_path)
    result = train_model(captions, corpus, config)
    return save_training(result, Path(out) if out else config.model_path, config)


# === Avaliação ===
def truth_attribute_set(image_id: str, row: dict) -> AttributeSet:
    return AttributeSet(
        image_id=image_id,
        answers=tuple(
            AttributeAnswer(key=key, raw_answer=row[key], value=row[key], confidence=1.0) for key in ALL_KEYS
        ),
    )


def query_texts(corpus: Corpus, gallery, config: PipelineConfig) -> tuple[str, list[str]]:
    """Um texto de consulta por imagem da galeria e o nome da origem."""
    source = config.query_source
    has_refs = all(img.image_id in corpus.reference_captions for img in gallery)
    if source == "auto":
        source = "reference" if has_refs else "template"
    if source == "reference":
        if not has_refs:
            raise ConfigError("query_source=reference but the manifest lacks reference captions")
        return source, [corpus.reference_captions[img.image_id] for img in gallery]
    if source == "template":
        rows = truth_rows(corpus, [img.image_id for img in gallery])
        return source, [render_template(truth_attribute_set(img.image_id, row)) for img, row in zip(gallery, rows)]
    captions, _ = generate_captions(corpus, config, images=gallery)
    return source, [c.text for c in captions]


def evaluate_model(model: ReferenceRetrievalModel, corpus: Corpus, config: PipelineConfig,
                   split: str = None) -> EvalReport:
    split = split or config.eval_split
    gallery = corpus.split(split)
    if not gallery:
        raise DegenerateCorpus(f"split '{split}' has no images")
    rows = truth_rows(corpus, [img.image_id for img in gallery])
    gallery_emb = model.embed_images(image_features(model.encoder, rows))
    source, texts = query_texts(corpus, gallery, config)
    query_emb = model.embed_texts(texts)
    identities = np.array([img.identity_id for img in gallery])
    logger.info("Evaluating on %s split: %d queries (%s), %d gallery images",
                split, len(texts), source, len(gallery))
    return evaluate_corpus(EvalCorpus(query_emb, identities, gallery_emb, identities), query_source=source)


def write_report(report: EvalReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json(), encoding="utf-8")
    path.with_suffix(".txt").write_text(report.to_flat_text(), encoding="utf-8")
    return path


def append_history(config: PipelineConfig, report: EvalReport, split: str):
    record = {
        "timestamp": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
        "split": split,
        "seed": config.seed,
        "beta": config.beta,
        "loss_set": ",".join(config.loss_set),
        "a2t_mode": config.a2t_mode,
        **report.model_dump(),
    }
    history = pd.DataFrame([record])
    path = config.history_path
    if path.exists():
        history = pd.concat([pd.read_csv(path), history], ignore_index=True)
    path.parent.mkdir(parents=True, exist_ok=True)
    history.to_csv(path, index=False)


def evaluate(config: PipelineConfig, split: str = None, corpus: Corpus = None, out=None) -> EvalReport:
    corpus = corpus or ingest_corpus(config)
    split = split or config.eval_split
    if not config.model_path.exists():
        raise ConfigError(f"model {config.model_path} not found; run train first")
    model = ReferenceRetrievalModel.load(config.model_path)
    report = evaluate_model(model, corpus, config, split)
    write_report(report, Path(out) if out else config.report_path)
    append_history(config, report, split)
    return report


# === Pipeline completo ===
def run_all(config: PipelineConfig, out=None) -> EvalReport:
    corpus = ingest_corpus(config)
    run_generation(corpus, config)
    train(config, corpus)
    return evaluate(config, corpus=corpus, out=out)


def sweep_beta(config: PipelineConfig, out=None) -> pd.DataFrame:
    """Treina e avalia uma vez por beta de beta_grid, com as mesmas legendas."""
    corpus = ingest_corpus(config)
    captions, _ = generate_captions(corpus, config)
    rows = []
    for beta in config.beta_grid:
        run_config = apply_overrides(config, beta=beta)
        result = train_model(captions, corpus, run_config)
        report = evaluate_model(result.model, corpus, run_config)
        rows.append({"beta": beta, "r1": report.r1, "r5": report.r5, "r10": report.r10, "map": report.map})
        logger.info("beta=%s: R@1=%.4f mAP=%.4f", beta, report.r1, report.map)
    table = pd.DataFrame(rows)
    path = Path(out) if out else config.report_path.with_suffix(".beta_sweep.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    return table
