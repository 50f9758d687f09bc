"""
Evaluation Metrics
AUC (rank statistic), Logloss and RelaImpr.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.stats import rankdata

from autograd.ops import PROBABILITY_FLOOR
from errors import ArgumentError, UndefinedMetricError

logger = logging.getLogger(__name__)

RANDOM_AUC = 0.5


class EvalReport(BaseModel):
    auc: Optional[float] = Field(default=None, ge=0, le=1)
    logloss: float = Field(..., ge=0)
    n_pos: int = Field(..., ge=0)
    n_neg: int = Field(..., ge=0)

    @model_validator(mode="after")
    def validate_classes(self):
        if self.auc is not None and (self.n_pos < 1 or self.n_neg < 1):
            raise ValueError("auc needs at least one positive and one negative")
        return self

    def format_lines(self) -> str:
        auc = "nan" if self.auc is None else f"{self.auc:.6f}"
        return f"auc={auc}\nlogloss={self.logloss:.6f}\nn_pos={self.n_pos}\nn_neg={self.n_neg}"


def _arrays(scores: Sequence[float], labels: Sequence[int]):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ArgumentError(f"{scores.size} scores for {labels.size} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise ArgumentError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Probability that a random positive outranks a random negative.

    Mann-Whitney U from average ranks, so tied scores earn half credit.

    Raises:
        UndefinedMetricError: only one class present
    """
    scores, labels = _arrays(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUC undefined with {n_pos} positives and {n_neg} negatives")
    ranks = rankdata(scores, method="average")
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pairwise_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """O(n_pos * n_neg) comparison of every positive with every negative"""
    scores, labels = _arrays(scores, labels)
    positives = scores[labels == 1]
    negatives = scores[labels == 0]
    if positives.size == 0 or negatives.size == 0:
        raise UndefinedMetricError(f"AUC undefined with {positives.size} positives and {negatives.size} negatives")
    diff = positives[:, None] - negatives[None, :]
    wins = np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0)
    return float(wins / diff.size)


def logloss(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mean cross-entropy with probabilities clamped to [1e-12, 1 - 1e-12]"""
    scores, labels = _arrays(scores, labels)
    if scores.size == 0:
        raise ArgumentError("logloss of an empty set")
    p = np.clip(scores, PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log(1.0 - p)))


def relaimpr(target_auc: float, base_auc: float) -> float:
    """
    Relative AUC improvement over a base model, in percent, measured from the 0.5 random floor.

    Raises:
        UndefinedMetricError: base_auc <= 0.5
    """
    if base_auc <= RANDOM_AUC:
        raise UndefinedMetricError(f"RelaImpr undefined for base AUC {base_auc} <= {RANDOM_AUC}")
    return ((target_auc - RANDOM_AUC) / (base_auc - RANDOM_AUC) - 1.0) * 100.0


def evaluate_scores(scores: Sequence[float], labels: Sequence[int], require_auc: bool = True) -> EvalReport:
    """
    AUC and Logloss of scored instances.

    Args:
        require_auc: Raise on a single-class set instead of reporting auc=None
    """
    scores, labels = _arrays(scores, labels)
    n_pos = int(labels.sum())
    try:
        value = auc(scores, labels)
    except UndefinedMetricError:
        if require_auc:
            raise
        logger.warning(f"AUC undefined on {scores.size} instances with a single class")
        value = None
    return EvalReport(auc=value, logloss=logloss(scores, labels), n_pos=n_pos, n_neg=labels.size - n_pos)
