"""Closed-form divergences between spherical Gaussians, plus a Monte-Carlo check.

The alpha-divergence used throughout is

    D_a(f || g) = 1 / (a (a - 1)) * log  integral f(x)^a g(x)^(1 - a) dx

which tends to KL(f || g) as a -> 1 and to KL(g || f) as a -> 0. For
f = N(mu_f, b_f I) and g = N(mu_g, b_g I) in D dimensions, with the mixed
variance s = (1 - a) b_f + a b_g, it evaluates to

    |mu_f - mu_g|^2 / (2 s)  -  D / (2 a (a - 1)) * log(s / (b_f^(1-a) b_g^a)).

The mixture convention is argument-order sensitive: the first argument gets
weight (1 - a).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .density import HyperbolicDensity, sample_density
from .errors import DivergenceDomainError


@dataclass(frozen=True)
class DivergenceConfig:
    alpha: float = 0.7
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha in (0.0, 1.0) or not np.isfinite(self.alpha):
            raise DivergenceDomainError("alpha must be finite and differ from 0 and 1")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


def _squared_gap(f: HyperbolicDensity, g: HyperbolicDensity):
    diff = f.mean - g.mean
    return ad.sum(diff * diff, axis=-1)


def renyi_alpha_divergence(f: HyperbolicDensity, g: HyperbolicDensity, alpha: float):
    """D_alpha(f || g) for spherical Gaussians over the ambient coordinates.

    Broadcasts over leading batch axes of the two densities.
    """
    alpha = float(alpha)
    if alpha in (0.0, 1.0):
        raise DivergenceDomainError("alpha in {0, 1} is the KL limit; call kl_divergence")
    bf, bg = f.scale, g.scale
    mixed = bf + alpha * (bg - bf)  # (1 - a) b_f + a b_g, exact when b_f == b_g
    if np.any(ad.data_of(mixed) <= 0):
        raise DivergenceDomainError("mixed variance (1-alpha) b_f + alpha b_g must be positive")
    dim = f.dim
    log_bf = ad.log(bf)
    log_ratio = (ad.log(mixed) - log_bf) - alpha * (ad.log(bg) - log_bf)
    quadratic = 0.5 * _squared_gap(f, g) / mixed
    return quadratic - (dim / (2.0 * alpha * (alpha - 1.0))) * log_ratio


def kl_divergence(f: HyperbolicDensity, g: HyperbolicDensity):
    """KL(f || g) for spherical Gaussians over the ambient coordinates."""
    bf, bg = f.scale, g.scale
    dim = f.dim
    return 0.5 * (dim * bf / bg + _squared_gap(f, g) / bg - dim + dim * ad.log(bg / bf))


def encapsulation_penalty(f: HyperbolicDensity, g: HyperbolicDensity, cfg: DivergenceConfig):
    """max(0, D_alpha(f || g) - gamma): zero once f sits inside g up to slack gamma."""
    return ad.relu(renyi_alpha_divergence(f, g, cfg.alpha) - cfg.gamma)


# -- Monte-Carlo oracle -------------------------------------------------------


def _gaussian_logpdf(x: np.ndarray, mean: np.ndarray, var: float) -> np.ndarray:
    dim = x.shape[-1]
    sq = np.sum((x - mean) ** 2, axis=-1)
    return -0.5 * (sq / var + dim * np.log(2.0 * np.pi * var))


@dataclass(frozen=True)
class MonteCarloEstimate:
    alpha: float
    estimate: float
    std_error: float
    samples: int


def monte_carlo_renyi(
    f: HyperbolicDensity,
    g: HyperbolicDensity,
    alphas,
    samples: int = 10_000_000,
    seed: int = 0,
    chunk: int = 1_000_000,
) -> list[MonteCarloEstimate]:
    """Estimate D_alpha(f || g) by sampling from g.

    Uses integral f^a g^(1-a) = E_g[(f/g)^a]; the standard error on the log is
    propagated with the delta method. The same draws serve every alpha.
    """
    mean_f = np.asarray(ad.data_of(f.mean), dtype=np.float64)
    mean_g = np.asarray(ad.data_of(g.mean), dtype=np.float64)
    var_f, var_g = float(ad.data_of(f.scale)), float(ad.data_of(g.scale))
    alphas = np.asarray(alphas, dtype=np.float64)
    total = np.zeros_like(alphas)
    total_sq = np.zeros_like(alphas)
    drawn = 0
    seeds = np.random.SeedSequence(seed).spawn((samples + chunk - 1) // chunk)
    for child in seeds:
        n = min(chunk, samples - drawn)
        x = sample_density(HyperbolicDensity(mean_g, var_g), n, child)
        log_ratio = _gaussian_logpdf(x, mean_f, var_f) - _gaussian_logpdf(x, mean_g, var_g)
        w = np.exp(np.outer(alphas, log_ratio))
        total += w.sum(axis=1)
        total_sq += (w * w).sum(axis=1)
        drawn += n
    mean_w = total / drawn
    var_w = np.maximum(total_sq / drawn - mean_w**2, 0.0) * drawn / (drawn - 1)
    se_mean = np.sqrt(var_w / drawn)
    scale = alphas * (alphas - 1.0)
    estimates = np.log(mean_w) / scale
    errors = se_mean / (mean_w * np.abs(scale))
    return [
        MonteCarloEstimate(float(a), float(e), float(s), drawn)
        for a, e, s in zip(alphas, estimates, errors)
    ]


@dataclass(frozen=True)
class OracleRow:
    trial: int
    dim: int
    alpha: float
    closed_form: float
    estimate: float
    std_error: float

    @property
    def z_score(self) -> float:
        return (self.estimate - self.closed_form) / self.std_error

    def within(self, n_se: float = 3.0) -> bool:
        return abs(self.z_score) <= n_se


def random_density_pair(rng: np.random.Generator, max_dim: int = 4, c: float = 1.0):
    """Two densities on a random hyperboloid of ambient dimension 2..max_dim.

    Means come from tangent vectors of norm at most 1 and the variances
    differ by at most a factor of two, which keeps the importance weights
    of the Monte-Carlo estimate well behaved.
    """
    from .geometry import exp_map_origin_space

    n = int(rng.integers(1, max_dim))
    means = [exp_map_origin_space(rng.uniform(-1.0, 1.0, n) / np.sqrt(n), c) for _ in range(2)]
    scales = np.exp(rng.uniform(np.log(0.5), np.log(1.0), size=2)) * np.array([1.0, rng.uniform(1.0, 2.0)])
    rng.shuffle(scales)
    return HyperbolicDensity(means[0], float(scales[0])), HyperbolicDensity(means[1], float(scales[1]))


def divergence_oracle(alphas, trials: int = 50, samples: int = 10_000_000, seed: int = 0, max_dim: int = 4):
    """Closed form against Monte Carlo for ``trials`` random pairs; one row per (pair, alpha)."""
    rng = np.random.default_rng(seed)
    rows = []
    for trial in range(trials):
        f, g = random_density_pair(rng, max_dim)
        estimates = monte_carlo_renyi(f, g, alphas, samples=samples, seed=int(rng.integers(2**63)))
        for est in estimates:
            exact = float(renyi_alpha_divergence(f, g, est.alpha))
            rows.append(OracleRow(trial, f.dim, est.alpha, exact, est.estimate, est.std_error))
    return rows
