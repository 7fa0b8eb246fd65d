"""Training objectives: encapsulation order loss and Lorentz-distance contrastive loss.

The order loss penalizes D_alpha(image || text): the image density is the
specific one and should sit inside the (more general) text density.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .density import HyperbolicDensity
from .divergence import DivergenceConfig, encapsulation_penalty
from .errors import DimensionError
from .geometry import distance_unchecked, pairwise_distance

TAU_MIN = 1e-3
TAU_MAX = 100.0


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.7
    gamma: float = 1.0
    margin: float = 5.0
    temperature: float = 0.07
    order_weight: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gamma < 0 or self.order_weight < 0:
            raise ValueError("gamma and order_weight must be nonnegative")
        if self.margin <= 0 or self.temperature <= 0:
            raise ValueError("margin and temperature must be positive")

    @property
    def divergence(self) -> DivergenceConfig:
        return DivergenceConfig(alpha=self.alpha, gamma=self.gamma)


def _stack(densities: Sequence[HyperbolicDensity]) -> HyperbolicDensity:
    return HyperbolicDensity(
        ad.stack([d.mean for d in densities]),
        ad.stack([ad.reshape(d.scale, ()) for d in densities]),
    )


@dataclass(frozen=True)
class PairBatch:
    """Positive and negative (text, image) pairs, each side stacked along axis 0.

    ``contrast_images`` optionally holds the (N, N) grid of image densities
    where entry [i, j] is image j encoded with text i as its attention query.
    Without it, the contrastive term uses the positive images directly.
    """

    pos_text: HyperbolicDensity
    pos_image: HyperbolicDensity
    neg_text: HyperbolicDensity | None = None
    neg_image: HyperbolicDensity | None = None
    contrast_images: HyperbolicDensity | None = field(default=None)

    @classmethod
    def from_pairs(cls, positives, negatives=()) -> "PairBatch":
        positives, negatives = list(positives), list(negatives)
        if not positives:
            raise ValueError("a batch needs at least one positive pair")
        pos_t, pos_v = _stack([t for t, _ in positives]), _stack([v for _, v in positives])
        if negatives:
            neg_t, neg_v = _stack([t for t, _ in negatives]), _stack([v for _, v in negatives])
        else:
            neg_t = neg_v = None
        return cls(pos_t, pos_v, neg_t, neg_v)

    def __len__(self) -> int:
        return len(self.pos_text)


def order_terms(batch: PairBatch, cfg: LossConfig):
    """Per-pair hinge terms (positive_terms, negative_terms or None)."""
    div = cfg.divergence
    pos = encapsulation_penalty(batch.pos_image, batch.pos_text, div)
    neg = None
    if batch.neg_text is not None and len(batch.neg_text) > 0:
        neg = ad.relu(cfg.margin - encapsulation_penalty(batch.neg_image, batch.neg_text, div))
    return pos, neg


def order_loss(batch: PairBatch, cfg: LossConfig):
    """Sum of positive penalties plus sum of margin hinges on negatives."""
    pos, neg = order_terms(batch, cfg)
    total = ad.sum(pos)
    if neg is not None:
        total = total + ad.sum(neg)
    return total


def contrastive_from_distances(distances, tau):
    """Symmetric cross-entropy over logits -distances / tau; pair i is on the diagonal."""
    shape = np.shape(ad.data_of(distances))
    if len(shape) != 2 or shape[0] != shape[1]:
        raise DimensionError(f"need a square distance matrix, got {shape}")
    logits = -distances / tau
    n = shape[0]
    diag = logits[np.arange(n), np.arange(n)]
    rows = ad.logsumexp(logits, axis=1) - diag
    cols = ad.logsumexp(logits, axis=0) - diag
    return 0.5 * (ad.mean(rows) + ad.mean(cols))


def contrastive_loss(texts: HyperbolicDensity, images: HyperbolicDensity, c, tau):
    """CLIP-style loss on geodesic distances between density means.

    ``images.mean`` is (N, n+1) for query-independent images or (N, N, n+1)
    for an image grid indexed [text, image].
    """
    t_shape = np.shape(ad.data_of(texts.mean))
    i_shape = np.shape(ad.data_of(images.mean))
    n = t_shape[0]
    if len(i_shape) == 2:
        if i_shape[0] != n:
            raise DimensionError(f"{n} texts but {i_shape[0]} images")
        distances = pairwise_distance(texts.mean, images.mean, c)
    elif len(i_shape) == 3 and i_shape[:2] == (n, n):
        distances = distance_unchecked(ad.reshape(texts.mean, (n, 1, t_shape[-1])), images.mean, c)
    else:
        raise DimensionError(f"image means of shape {i_shape} do not match {n} texts")
    return contrastive_from_distances(distances, tau)


def loss_components(batch: PairBatch, cfg: LossConfig, c, tau=None):
    """(contrastive, order, total) with total = contrastive + order_weight * order."""
    tau = cfg.temperature if tau is None else tau
    images = batch.contrast_images if batch.contrast_images is not None else batch.pos_image
    con = contrastive_loss(batch.pos_text, images, c, tau)
    order = order_loss(batch, cfg)
    return con, order, con + cfg.order_weight * order


def total_loss(batch: PairBatch, cfg: LossConfig, c, tau=None):
    return loss_components(batch, cfg, c, tau)[2]
