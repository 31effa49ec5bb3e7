# === retrieval_eval.py ===
# Métricas de ranking texto -> imagem: Rank@K e mAP com relevância por
# identidade. A galeria é ordenada por similaridade decrescente; empates
# ficam com o menor índice da galeria.
import json
import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.errors import DegenerateCorpus, DimensionMismatch, NoRelevantItem

logger = logging.getLogger(__name__)


@dataclass
class EvalCorpus:
    query_embeddings: np.ndarray
    query_identities: np.ndarray
    gallery_embeddings: np.ndarray
    gallery_identities: np.ndarray


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    r1: float
    r5: float
    r10: float
    map: float
    Q: int
    G: int
    query_source: str = ""

    @model_validator(mode="after")
    def _ordered(self):
        if not (self.r1 <= self.r5 <= self.r10):
            raise ValueError("Rank@K must be non-decreasing in K")
        return self

    def to_flat_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.model_dump().items())

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), indent=2) + "\n"


def similarity_matrix(queries, gallery) -> np.ndarray:
    """Produtos internos Q x G de linhas unitárias (similaridade de cosseno)."""
    q = np.asarray(queries, dtype=np.float64)
    g = np.asarray(gallery, dtype=np.float64)
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise DimensionMismatch(f"query shape {q.shape} and gallery shape {g.shape} do not match")
    return q @ g.T


def _matches(sim, query_ids, gallery_ids) -> np.ndarray:
    sim = np.asarray(sim, dtype=np.float64)
    q_ids = np.asarray(query_ids)
    g_ids = np.asarray(gallery_ids)
    if sim.ndim != 2 or sim.shape[0] == 0 or sim.shape[1] == 0:
        raise DegenerateCorpus(f"cannot rank with a similarity matrix of shape {sim.shape}")
    if sim.shape != (len(q_ids), len(g_ids)):
        raise DimensionMismatch(
            f"similarity {sim.shape} does not match {len(q_ids)} queries x {len(g_ids)} gallery items"
        )
    # ordenação estável dos scores negados mantém empates na ordem do índice
    order = np.argsort(-sim, axis=1, kind="stable")
    return g_ids[order] == q_ids[:, None]


def rank_at_k(sim, query_ids, gallery_ids, k: int) -> float:
    """Fração das consultas com a identidade certa entre as k primeiras."""
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    matches = _matches(sim, query_ids, gallery_ids)
    return float(np.mean(matches[:, :k].any(axis=1)))


def average_precision(relevant: np.ndarray) -> float:
    """AP de um vetor de relevância já ordenado."""
    n_rel = int(relevant.sum())
    if n_rel == 0:
        raise NoRelevantItem("query has no relevant gallery item")
    hits = np.cumsum(relevant)
    ranks = np.arange(1, relevant.shape[0] + 1)
    return float(np.sum((hits / ranks)[relevant]) / n_rel)


def mean_average_precision(sim, query_ids, gallery_ids) -> float:
    matches = _matches(sim, query_ids, gallery_ids)
    missing = np.flatnonzero(~matches.any(axis=1))
    if missing.size:
        raise NoRelevantItem(f"{missing.size} queries have no relevant gallery item (first: {missing[0]})")
    return float(np.mean([average_precision(row) for row in matches]))


def evaluate_corpus(corpus: EvalCorpus, query_source: str = "") -> EvalReport:
    sim = similarity_matrix(corpus.query_embeddings, corpus.gallery_embeddings)
    q_ids, g_ids = corpus.query_identities, corpus.gallery_identities
    report = EvalReport(
        r1=rank_at_k(sim, q_ids, g_ids, 1),
        r5=rank_at_k(sim, q_ids, g_ids, 5),
        r10=rank_at_k(sim, q_ids, g_ids, 10),
        map=mean_average_precision(sim, q_ids, g_ids),
        Q=sim.shape[0],
        G=sim.shape[1],
        query_source=query_source,
    )
    logger.info("R@1=%.4f R@5=%.4f R@10=%.4f mAP=%.4f (Q=%d, G=%d)",
                report.r1, report.r5, report.r10, report.map, report.Q, report.G)
    return report
