"""Lorentz-model primitives for hyperbolic space of curvature -c.

Points live on the upper sheet ``{z : <z, z>_L = -1/c, z_0 > 0}`` of
R^{n+1}; the time coordinate is stored first. All functions broadcast over
leading axes and accept :class:`~hypdense.autodiff.Tensor` inputs (including
a Tensor curvature) so the training path can differentiate through them.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, InvalidPointError

CURVATURE_MIN = 0.1
CURVATURE_MAX = 10.0
MANIFOLD_TOL = 1e-6
_FAR_COSH = 2.0  # switch point between the chord and arccosh distance forms


def clamp_curvature(c: float) -> float:
    return float(min(max(c, CURVATURE_MIN), CURVATURE_MAX))


def _as_array(x):
    return x if ad.is_tensor(x) else np.asarray(x, dtype=np.float64)


def _check_pair(a, b) -> None:
    sa, sb = np.shape(ad.data_of(a)), np.shape(ad.data_of(b))
    if not sa or not sb or sa[-1] != sb[-1]:
        raise DimensionError(f"ambient dimensions differ: {sa} vs {sb}")
    if sa[-1] < 2:
        raise DimensionError("ambient dimension must be at least 2")


def lorentz_inner(a, b):
    """-a_0 b_0 + sum_i a_i b_i over the last axis."""
    a, b = _as_array(a), _as_array(b)
    _check_pair(a, b)
    space = ad.sum(a[..., 1:] * b[..., 1:], axis=-1)
    return space - a[..., 0] * b[..., 0]


def origin(n: int, c: float = 1.0) -> np.ndarray:
    """The root point [1/sqrt(c), 0, ..., 0] of H^n."""
    out = np.zeros(n + 1)
    out[0] = 1.0 / np.sqrt(c)
    return out


def constraint_residual(z, c) -> np.ndarray:
    """|c <z, z>_L + 1|, zero for exact points of the hyperboloid."""
    z = ad.data_of(z)
    c = ad.data_of(c)
    return np.abs(c * lorentz_inner(z, z) + 1.0)


def check_on_manifold(z, c, tol: float = MANIFOLD_TOL) -> None:
    """Raise InvalidPointError unless every point of ``z`` is on the upper sheet.

    The tolerance is relative to c*z_0^2 since the Lorentz form of a point far
    from the origin is a difference of two large squares.
    """
    data = ad.data_of(z)
    c_val = ad.data_of(c)
    if data.shape[-1] < 2:
        raise DimensionError("ambient dimension must be at least 2")
    if not np.all(np.isfinite(data)):
        raise InvalidPointError("non-finite coordinates")
    scale = np.maximum(1.0, c_val * data[..., 0] ** 2)
    bad = constraint_residual(data, c_val) > tol * scale
    if np.any(bad) or np.any(data[..., 0] <= 0):
        raise InvalidPointError(
            f"point off the hyperboloid (max residual {np.max(constraint_residual(data, c_val)):.3e})"
        )


def distance_unchecked(z, z2, c):
    """Geodesic distance without manifold checks; broadcasts over leading axes.

    On the hyperboloid (1/sqrt c) arccosh(-c <z, z2>_L) equals
    (2/sqrt c) asinh(sqrt(c) |z - z2|_L / 2), where |.|_L is the Lorentz norm
    of the chord. arccosh near 1 loses half the digits (coincident points come
    out ~1e-8 apart), so the chord form is used for close pairs and the
    clamped arccosh, which is well conditioned far from 1, for the rest.
    Both lose relative accuracy for close pairs very far out (sqrt(c) r >~ 10),
    where the chord's Lorentz norm is a difference of squares of size z_0^2.
    """
    sqrt_c = ad.sqrt(c)
    cosh_d = -c * lorentz_inner(z, z2)
    diff = z - z2
    near = 2.0 * ad.asinh(0.5 * sqrt_c * ad.sqrt_clamped(lorentz_inner(diff, diff))) / sqrt_c
    far = ad.acosh_clamped(cosh_d) / sqrt_c
    use_far = (ad.data_of(cosh_d) >= _FAR_COSH).astype(np.float64)
    return use_far * far + (1.0 - use_far) * near


def geodesic_distance(z, z2, c=1.0, check: bool = True):
    """Geodesic distance between points of H^n with curvature -c."""
    z, z2 = _as_array(z), _as_array(z2)
    _check_pair(z, z2)
    if check:
        check_on_manifold(z, c)
        check_on_manifold(z2, c)
    return distance_unchecked(z, z2, c)


def pairwise_distance(za, zb, c=1.0):
    """Distance matrix between two point sets of shape (A, n+1) and (B, n+1)."""
    za, zb = _as_array(za), _as_array(zb)
    _check_pair(za, zb)
    na, dim = np.shape(ad.data_of(za))
    nb = np.shape(ad.data_of(zb))[0]
    return distance_unchecked(ad.reshape(za, (na, 1, dim)), ad.reshape(zb, (1, nb, dim)), c)


def exp_map_origin_space(v, c=1.0):
    """Exponential map at the origin of the tangent vector [0, v].

    ``v`` holds only the n space coordinates; the result has n+1.
    """
    v = _as_array(v)
    sqrt_c = ad.sqrt(c)
    r = sqrt_c * ad.norm(v, axis=-1, keepdims=True)
    time = ad.cosh(r) / sqrt_c
    space = ad.sinhc(r) * v
    return ad.concat([time, space], axis=-1)


def exp_map_origin(u, c=1.0):
    """Exponential map at the origin; ``u`` must have a zero time coordinate."""
    u = _as_array(u)
    data = ad.data_of(u)
    if data.shape[-1] < 2:
        raise DimensionError("ambient dimension must be at least 2")
    if np.any(data[..., 0] != 0):
        raise InvalidPointError("tangent vectors at the origin need u_0 == 0")
    return exp_map_origin_space(u[..., 1:], c)


def log_map_origin(z, c=1.0, check: bool = True):
    """Inverse of :func:`exp_map_origin`; returns vectors with zero time coordinate."""
    if check:
        check_on_manifold(z, c)
    data = np.asarray(ad.data_of(z), dtype=np.float64)
    sqrt_c = np.sqrt(ad.data_of(c))
    space = data[..., 1:]
    # asinh of the space norm is better conditioned than acosh of z_0 near the origin
    r = np.arcsinh(sqrt_c * np.linalg.norm(space, axis=-1, keepdims=True))
    tangent_space = space / ad.sinhc(r)
    return np.concatenate([np.zeros_like(data[..., :1]), tangent_space], axis=-1)


def project_to_hyperboloid(v, c=1.0):
    """Recompute z_0 = sqrt(1/c + |space|^2), leaving the space part untouched."""
    v = _as_array(v)
    space = v[..., 1:]
    time = ad.sqrt(1.0 / c + ad.sum(space * space, axis=-1, keepdims=True))
    return ad.concat([time, space], axis=-1)


def tangent_norm(u) -> np.ndarray:
    """Lorentzian norm of tangent vectors at the origin (equals the space part's 2-norm)."""
    data = ad.data_of(u)
    return np.sqrt(np.maximum(lorentz_inner(data, data), 0.0))
