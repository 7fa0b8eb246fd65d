"""Zero-shot classification, ranking metrics and root-distance diagnostics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DimensionError, UndefinedMetricError
from .geometry import distance_unchecked, origin


def zero_shot_classify(image_means, class_means, c=1.0):
    """Nearest class prompt by geodesic distance.

    ``image_means`` is (N, D), or (N, K, D) when each image was encoded once
    per class prompt. ``class_means`` is (K, D). Returns (predictions,
    scores) with scores = -distance of shape (N, K); ties go to the lowest
    class index.
    """
    image_means = np.asarray(image_means, dtype=np.float64)
    class_means = np.asarray(class_means, dtype=np.float64)
    if class_means.ndim != 2 or class_means.shape[0] < 2:
        raise DimensionError("need at least two class prompts")
    if image_means.ndim == 2:
        image_means = image_means[:, None, :]
    scores = -distance_unchecked(image_means, class_means[None, :, :], c)
    return np.argmax(scores, axis=1), scores


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of ROC AUC; tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).astype(bool).ravel()
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both positive and negative labels")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def f1(predictions, labels) -> float:
    """Binary F1 for the positive class (label 1); 0 when there are no true positives."""
    pred = np.asarray(predictions).astype(bool).ravel()
    true = np.asarray(labels).astype(bool).ravel()
    tp = int(np.sum(pred & true))
    if tp == 0:
        return 0.0
    precision = tp / int(pred.sum())
    recall = tp / int(true.sum())
    return 2.0 * precision * recall / (precision + recall)


def micro_auc(scores, indicator) -> float:
    """AUC over all (sample, class) cells of a multi-label score matrix."""
    return auc(np.asarray(scores).ravel(), np.asarray(indicator).ravel())


def micro_f1(pred_indicator, indicator) -> float:
    return f1(np.asarray(pred_indicator).ravel(), np.asarray(indicator).ravel())


@dataclass(frozen=True)
class RankedList:
    """Candidates sorted by descending score, ties broken by ascending id."""

    query_id: int
    candidate_ids: np.ndarray
    scores: np.ndarray
    relevance: np.ndarray

    @classmethod
    def from_scores(cls, query_id, candidate_ids, scores, relevance) -> "RankedList":
        ids = np.asarray(candidate_ids)
        scores = np.asarray(scores, dtype=np.float64)
        relevance = np.asarray(relevance, dtype=np.float64)
        order = np.lexsort((ids, -scores))
        return cls(query_id, ids[order], scores[order], relevance[order])

    def __len__(self) -> int:
        return len(self.candidate_ids)


def _check_k(r: RankedList, k: int) -> None:
    if not 1 <= k <= len(r):
        raise ValueError(f"k={k} outside 1..{len(r)}")


def precision_at_k(r: RankedList, k: int) -> float:
    _check_k(r, k)
    return 100.0 * float(np.sum(r.relevance[:k] > 0)) / k


def _dcg(gains: np.ndarray) -> float:
    discounts = 1.0 / np.log2(np.arange(2, gains.size + 2))
    return float(np.sum(gains * discounts))


def ndcg_at_k(r: RankedList, k: int) -> float:
    _check_k(r, k)
    ideal = _dcg(np.sort(r.relevance)[::-1][:k])
    if ideal == 0:
        warnings.warn("NDCG undefined without relevant items; reporting 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return _dcg(r.relevance[:k]) / ideal


def recall_at_fraction(r: RankedList, fraction: float) -> float:
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    total = float(np.sum(r.relevance > 0))
    if total == 0:
        warnings.warn("recall undefined without relevant items; reporting 0", RuntimeWarning, stacklevel=2)
        return 0.0
    cutoff = math.ceil(fraction * len(r))
    return 100.0 * float(np.sum(r.relevance[:cutoff] > 0)) / total


def root_distances(means, c=1.0) -> np.ndarray:
    means = np.asarray(means, dtype=np.float64)
    return distance_unchecked(means, origin(means.shape[-1] - 1, c), c)


def root_distance_histogram(text_means, image_means, c=1.0, bins: int = 20) -> list[tuple[float, float, int, int]]:
    """Counts of text and image distances from the origin over shared bins.

    Rows are (bin_left, bin_right, count_text, count_image).
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    dt, dv = root_distances(text_means, c), root_distances(image_means, c)
    both = np.concatenate([dt, dv])
    lo, hi = float(both.min()), float(both.max())
    if hi == lo:
        return [(lo, hi, int(dt.size), int(dv.size))]
    edges = np.linspace(lo, hi, bins + 1)
    ct, _ = np.histogram(dt, bins=edges)
    cv, _ = np.histogram(dv, bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(ct[i]), int(cv[i])) for i in range(bins)]
