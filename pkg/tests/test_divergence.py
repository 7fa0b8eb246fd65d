import math

import numpy as np
import pytest
from scipy import integrate

from hypdense.density import HyperbolicDensity
from hypdense.divergence import (
    DivergenceConfig,
    divergence_oracle,
    encapsulation_penalty,
    kl_divergence,
    monte_carlo_renyi,
    random_density_pair,
    renyi_alpha_divergence,
)
from hypdense.errors import DivergenceDomainError
from hypdense.geometry import exp_map_origin_space, origin


def pair_at_gap(gap, bf, bg, n=2, c=1.0):
    """Two densities whose means are ``gap`` apart in ambient coordinates."""
    a = origin(n, c)
    direction = np.zeros(n)
    direction[0] = 1.0
    # walk out along one axis until the ambient gap matches
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm(exp_map_origin_space(mid * direction, c) - a) < gap:
            lo = mid
        else:
            hi = mid
    b = exp_map_origin_space(lo * direction, c)
    return HyperbolicDensity(a, bf), HyperbolicDensity(b, bg)


def test_identical_densities_have_zero_divergence(rng):
    f = HyperbolicDensity(exp_map_origin_space(rng.normal(size=3)), 0.7)
    for alpha in (0.1, 0.5, 0.9, 1.5):
        assert renyi_alpha_divergence(f, f, alpha) == pytest.approx(0.0, abs=1e-14)
    assert kl_divergence(f, f) == pytest.approx(0.0, abs=1e-14)


def test_half_is_symmetric(rng):
    for _ in range(50):
        f, g = random_density_pair(rng)
        assert abs(renyi_alpha_divergence(f, g, 0.5) - renyi_alpha_divergence(g, f, 0.5)) < 1e-10


def test_matches_monte_carlo_worked_example():
    f, g = pair_at_gap(1.0, 1.0, 2.0, n=2)
    assert np.linalg.norm(f.mean - g.mean) == pytest.approx(1.0, abs=1e-12)
    exact = renyi_alpha_divergence(f, g, 0.7)
    (est,) = monte_carlo_renyi(f, g, [0.7], samples=10_000_000, seed=1)
    assert abs(est.estimate - exact) < 3 * est.std_error


@pytest.mark.parametrize("alpha", [0.3, 0.7])
def test_matches_quadrature_in_two_dimensions(alpha):
    # ambient D = 2 (n = 1): integrate f^a g^(1-a) over the plane directly
    f = HyperbolicDensity(np.array([1.2, 0.663]), 0.8)
    g = HyperbolicDensity(np.array([1.0, -0.1]), 1.3)

    def pdf(x, y, d):
        sq = (x - d.mean[0]) ** 2 + (y - d.mean[1]) ** 2
        return math.exp(-0.5 * sq / d.scale) / (2 * math.pi * d.scale)

    val, _ = integrate.dblquad(
        lambda y, x: pdf(x, y, f) ** alpha * pdf(x, y, g) ** (1 - alpha), -12, 12, -12, 12, epsabs=1e-13, epsrel=1e-12
    )
    oracle = math.log(val) / (alpha * (alpha - 1))
    assert renyi_alpha_divergence(f, g, alpha) == pytest.approx(oracle, rel=1e-8)


def test_kl_closed_form_example():
    f, g = pair_at_gap(1.0, 1.0, 1.0, n=1)
    assert kl_divergence(f, g) == pytest.approx(0.5, abs=1e-12)


def test_kl_limits(rng):
    for _ in range(50):
        f, g = random_density_pair(rng)
        assert renyi_alpha_divergence(f, g, 0.999) == pytest.approx(kl_divergence(f, g), rel=1e-2)
        assert renyi_alpha_divergence(f, g, 0.001) == pytest.approx(kl_divergence(g, f), rel=1e-2)


def test_penalty_examples():
    cfg = DivergenceConfig(alpha=0.7, gamma=0.5)
    for target, expected in ((0.3, 0.0), (0.8, 0.3)):
        # equal scales remove the log term, leaving |dmu|^2 / (2 b)
        f, g = pair_at_gap(1.0, 1.0, 1.0)
        beta = 1.0 / (2 * target)
        f, g = HyperbolicDensity(f.mean, beta), HyperbolicDensity(g.mean, beta)
        assert renyi_alpha_divergence(f, g, 0.7) == pytest.approx(target, abs=1e-12)
        assert encapsulation_penalty(f, g, cfg) == pytest.approx(expected, abs=1e-12)
    f = HyperbolicDensity(origin(2), 0.4)
    assert encapsulation_penalty(f, f, DivergenceConfig(gamma=0.0)) == 0.0


def test_domain_errors():
    f = HyperbolicDensity(origin(2), 1.0)
    for alpha in (0.0, 1.0):
        with pytest.raises(DivergenceDomainError):
            renyi_alpha_divergence(f, f, alpha)
        with pytest.raises(DivergenceDomainError):
            DivergenceConfig(alpha=alpha)
    # alpha > 1 can drive the mixed variance negative
    with pytest.raises(DivergenceDomainError):
        renyi_alpha_divergence(HyperbolicDensity(origin(2), 10.0), HyperbolicDensity(origin(2), 1.0), 3.0)


def test_nonnegative_on_many_pairs(rng):
    n = 10_000
    means_f = exp_map_origin_space(rng.normal(size=(n, 3)))
    means_g = exp_map_origin_space(rng.normal(size=(n, 3)))
    f = HyperbolicDensity(means_f, np.exp(rng.uniform(-3, 3, n)))
    g = HyperbolicDensity(means_g, np.exp(rng.uniform(-3, 3, n)))
    for alpha in (0.1, 0.5, 0.9):
        assert np.all(renyi_alpha_divergence(f, g, alpha) >= -1e-12)


def test_increases_with_mean_gap():
    for alpha in (0.2, 0.7, 0.95):
        values = [renyi_alpha_divergence(*pair_at_gap(gap, 0.5, 2.0), alpha) for gap in (0.1, 0.5, 1.0, 2.0, 4.0)]
        assert np.all(np.isfinite(values))
        assert np.all(np.diff(values) > 0)


def test_monte_carlo_is_reproducible():
    f, g = pair_at_gap(0.5, 1.0, 1.5)
    a = monte_carlo_renyi(f, g, [0.5], samples=20_000, seed=3, chunk=7_000)
    b = monte_carlo_renyi(f, g, [0.5], samples=20_000, seed=3, chunk=7_000)
    assert a == b and a[0].samples == 20_000


def test_small_oracle_run_is_calibrated():
    rows = divergence_oracle([0.3, 0.9], trials=10, samples=200_000, seed=5)
    assert len(rows) == 20
    assert all(r.within(4.0) for r in rows)
