"""Spherical-covariance densities G(mu, beta * I) with means on the hyperboloid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidParamsError
from .geometry import exp_map_origin_space

SCALE_MIN = 1e-4
SCALE_MAX = 1e4


@dataclass(frozen=True)
class EuclideanDensityParams:
    """Raw encoder output: tangent mean ``mu_hat`` (n,) and log-scale ``beta_raw``.

    Leading batch axes are allowed on both fields.
    """

    mu_hat: np.ndarray
    beta_raw: np.ndarray | float


@dataclass(frozen=True)
class HyperbolicDensity:
    """Mean on the hyperboloid (..., n+1) and isotropic variance ``scale`` (...)."""

    mean: np.ndarray
    scale: np.ndarray | float

    @property
    def dim(self) -> int:
        """Ambient dimension D = n + 1 the covariance lives in."""
        return np.shape(ad.data_of(self.mean))[-1]

    def __getitem__(self, index) -> "HyperbolicDensity":
        return HyperbolicDensity(self.mean[index], self.scale[index])

    def __len__(self) -> int:
        return len(self.mean)


def positive_scale(beta_raw):
    """exp(beta_raw) clamped to [SCALE_MIN, SCALE_MAX]."""
    return ad.clip(ad.exp(beta_raw), SCALE_MIN, SCALE_MAX)


def embed_unchecked(mu_hat, beta_raw, c) -> HyperbolicDensity:
    """Differentiable core of :func:`embed_density` (no validation)."""
    return HyperbolicDensity(exp_map_origin_space(mu_hat, c), positive_scale(beta_raw))


def embed_density(params: EuclideanDensityParams, c=1.0) -> HyperbolicDensity:
    mu_hat = params.mu_hat if ad.is_tensor(params.mu_hat) else np.asarray(params.mu_hat, dtype=np.float64)
    beta_raw = params.beta_raw if ad.is_tensor(params.beta_raw) else np.asarray(params.beta_raw, dtype=np.float64)
    if not (np.all(np.isfinite(ad.data_of(mu_hat))) and np.all(np.isfinite(ad.data_of(beta_raw)))):
        raise InvalidParamsError("density parameters must be finite")
    return embed_unchecked(mu_hat, beta_raw, c)


def sample_density(d: HyperbolicDensity, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` samples of N(mean, scale * I) in ambient coordinates.

    Only used by Monte-Carlo checks; training never samples.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    mean = np.asarray(ad.data_of(d.mean), dtype=np.float64)
    if mean.ndim != 1:
        raise ValueError("sample_density takes a single density")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((count, mean.shape[0]))
    return mean + np.sqrt(float(ad.data_of(d.scale))) * noise
