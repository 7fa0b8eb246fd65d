"""Central finite-difference checks of the end-to-end training gradients."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .density import EuclideanDensityParams
from .encoders import (
    BatchInputs,
    EncoderParams,
    ModelDims,
    backward,
    batch_objective,
    density_param_gradients,
    init_params,
    objective_from_density_params,
    sample_negatives,
)
from .losses import LossConfig

FD_STEP = 1e-5
REL_TOL = 1e-4


@dataclass
class GradCheckResult:
    seed: int
    worst_name: str
    worst_error: float
    errors: "OrderedDict[str, float]"

    @property
    def passed(self) -> bool:
        return self.worst_error < REL_TOL


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), taken as 0 when both are numerically zero."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-10:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_gradient(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated in place, restored)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def random_config(seed: int):
    """A small random model, batch and loss configuration."""
    rng = np.random.default_rng(seed)
    dims = ModelDims(
        text_dim=int(rng.integers(2, 5)),
        image_dim=int(rng.integers(2, 5)),
        attn_dim=int(rng.integers(2, 4)),
        hidden=int(rng.integers(3, 6)),
        embed_dim=int(rng.integers(2, 4)),
        use_local=True,
    )
    params = init_params(
        dims,
        seed=int(rng.integers(2**31)),
        curvature=float(np.exp(rng.uniform(np.log(0.3), np.log(3.0)))),
        temperature=float(rng.uniform(0.2, 1.0)),
        head_scale=1.0,
    )
    for name, value in params.items():
        if value.ndim == 1:
            value[...] = rng.normal(0.0, 0.3, size=value.shape)
    batch = int(rng.integers(2, 5))
    patches = int(rng.integers(1, 4))
    inputs = BatchInputs(
        texts=rng.normal(size=(batch, dims.text_dim)),
        globals_=rng.normal(size=(batch, dims.image_dim)),
        patches=rng.normal(size=(batch, patches, dims.image_dim)),
        negatives=sample_negatives(batch, rng),
    )
    cfg = LossConfig(
        alpha=float(rng.uniform(0.2, 0.9)),
        gamma=float(rng.uniform(0.0, 0.5)),
        margin=float(rng.uniform(2.0, 8.0)),
        temperature=1.0,
        order_weight=float(rng.uniform(0.5, 1.5)),
    )
    return params, inputs, cfg


def check_parameters(params: EncoderParams, inputs: BatchInputs, cfg: LossConfig) -> "OrderedDict[str, float]":
    """Relative error per named parameter between backward() and central differences."""
    _, analytic = backward(params, inputs, cfg)
    work = params.copy()

    def total() -> float:
        return float(batch_objective(work, work.dims, inputs, cfg)[2])

    return OrderedDict(
        (name, relative_error(analytic[name], numeric_gradient(total, work.tensors[name])))
        for name in work
    )


def check_density_params(params: EncoderParams, inputs: BatchInputs, cfg: LossConfig) -> "OrderedDict[str, float]":
    """Relative error for gradients w.r.t. the raw (mu_hat, beta_raw) outputs."""
    raw, analytic = density_param_gradients(params, inputs, cfg)
    raw = OrderedDict((k, np.array(v, dtype=np.float64)) for k, v in raw.items())

    def total() -> float:
        return float(
            objective_from_density_params(
                EuclideanDensityParams(raw["text.mu_hat"], raw["text.beta_raw"]),
                EuclideanDensityParams(raw["image.mu_hat"], raw["image.beta_raw"]),
                params["log_curvature"],
                params["log_temperature"],
                inputs.negatives,
                cfg,
            )[2]
        )

    return OrderedDict(
        (f"density:{name}", relative_error(analytic[name], numeric_gradient(total, raw[name]))) for name in raw
    )


def run_gradcheck(seed: int = 0, configs: int = 20) -> list[GradCheckResult]:
    results = []
    for k in range(configs):
        cfg_seed = seed * 1000 + k
        params, inputs, cfg = random_config(cfg_seed)
        errors = check_parameters(params, inputs, cfg)
        errors.update(check_density_params(params, inputs, cfg))
        worst = max(errors, key=errors.get)
        results.append(GradCheckResult(cfg_seed, worst, errors[worst], errors))
    return results
