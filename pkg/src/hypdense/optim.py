"""AdamW training loop with warmup + cosine schedule and curvature/temperature clamping."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import AdamState, Checkpoint
from .datasynth import Dataset
from .encoders import BatchInputs, EncoderParams, backward, is_decayed, sample_negatives
from .errors import TrainingDivergedError
from .geometry import CURVATURE_MAX, CURVATURE_MIN
from .losses import TAU_MAX, TAU_MIN, LossConfig

log = logging.getLogger(__name__)

LOG_C_BOUNDS = (math.log(CURVATURE_MIN), math.log(CURVATURE_MAX))
LOG_TAU_BOUNDS = (math.log(TAU_MIN), math.log(TAU_MAX))
METRIC_FIELDS = ("step", "loss_con", "loss_order", "total", "c", "tau", "lr")


@dataclass(frozen=True)
class TrainConfig:
    lr_max: float = 1e-3
    warmup_steps: int = 100
    total_steps: int = 1500
    batch_size: int = 8
    weight_decay: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    seed: int = 0
    learn_curvature: bool = True
    learn_temperature: bool = True
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.total_steps < 0 or self.warmup_steps < 0:
            raise ValueError("step counts must be nonnegative")
        if self.warmup_steps > self.total_steps:
            raise ValueError("warmup_steps must not exceed total_steps")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 for in-batch negatives")


def learning_rate(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to lr_max at ``warmup_steps``, then cosine decay to 0 at ``total_steps``."""
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.lr_max * step / cfg.warmup_steps
    span = cfg.total_steps - cfg.warmup_steps
    if span <= 0:
        return cfg.lr_max if step <= cfg.total_steps else 0.0
    progress = min(max((step - cfg.warmup_steps) / span, 0.0), 1.0)
    return cfg.lr_max * 0.5 * (1.0 + math.cos(math.pi * progress))


def adamw_step(
    params: "OrderedDict[str, np.ndarray]",
    grads: "OrderedDict[str, np.ndarray]",
    state: AdamState,
    lr: float,
    cfg: TrainConfig,
    decay: dict[str, bool] | None = None,
) -> None:
    """One decoupled-weight-decay Adam update, in place."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for name, p in params.items():
        g = grads[name]
        if decay is None or decay.get(name, False):
            p *= 1.0 - lr * cfg.weight_decay
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def _clamp_scalars(params: EncoderParams) -> None:
    t = params.tensors
    t["log_curvature"][...] = np.clip(t["log_curvature"], *LOG_C_BOUNDS)
    t["log_temperature"][...] = np.clip(t["log_temperature"], *LOG_TAU_BOUNDS)


class BatchSampler:
    """Batches holding at most one image per concept, reshuffled every epoch.

    Each round draws one not-yet-used image from every concept that still has
    one, in random concept order, and cuts the round into batches; a trailing
    batch of a single pair is dropped.
    """

    def __init__(self, concept_ids: np.ndarray, batch_size: int, rng: np.random.Generator):
        self.batch_size = batch_size
        self.rng = rng
        self.by_concept = OrderedDict()
        for idx, cid in enumerate(concept_ids):
            self.by_concept.setdefault(int(cid), []).append(idx)
        if len(self.by_concept) < 2:
            raise ValueError("training needs at least two concepts for in-batch negatives")
        self._queue: list[np.ndarray] = []

    def _epoch(self) -> list[np.ndarray]:
        pools = {cid: list(self.rng.permutation(idxs)) for cid, idxs in self.by_concept.items()}
        batches = []
        while any(pools.values()):
            live = [cid for cid, pool in pools.items() if pool]
            order = self.rng.permutation(len(live))
            picks = [pools[live[i]].pop() for i in order]
            for start in range(0, len(picks), self.batch_size):
                chunk = picks[start : start + self.batch_size]
                if len(chunk) >= 2:
                    batches.append(np.array(chunk, dtype=np.int64))
        return batches

    def next(self) -> np.ndarray:
        while not self._queue:
            self._queue = self._epoch()[::-1]
        return self._queue.pop()


@dataclass
class TrainResult:
    params: EncoderParams
    optimizer: AdamState
    step: int
    metrics: list[dict]

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.params, self.step, self.optimizer)


def _dump_batch(path: Path, step: int, inputs: BatchInputs, values) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"step": step, "loss": [repr(v) for v in values], "batch": inputs.to_json()}
    path.write_text(json.dumps(payload))
    return path


def train(
    dataset: Dataset,
    init: EncoderParams,
    cfg: TrainConfig,
    *,
    optimizer: AdamState | None = None,
    start_step: int = 0,
    stop_step: int | None = None,
    dump_dir: Path | None = None,
) -> TrainResult:
    """Run AdamW from ``start_step`` to ``stop_step`` (default ``cfg.total_steps``).

    Batches and negatives depend only on the seed and step index, so a run
    resumed from a checkpoint continues exactly as an uninterrupted one.
    """
    params = init.copy()
    state = AdamState.zeros_like(params) if optimizer is None else optimizer.copy()
    stop = cfg.total_steps if stop_step is None else stop_step
    train_set = dataset.subset("train") if any(s.split == "train" for s in dataset.samples) else dataset
    texts, globals_, patches, concept_ids = train_set.arrays()
    rng = np.random.default_rng(cfg.seed)
    sampler = BatchSampler(concept_ids, cfg.batch_size, rng)
    for _ in range(start_step):  # replay the sampler so resumed runs see the same batches
        idx = sampler.next()
        sample_negatives(len(idx), rng)
    decay = {name: is_decayed(name) for name in params}
    frozen = set()
    if not cfg.learn_curvature:
        frozen.add("log_curvature")
    if not cfg.learn_temperature:
        frozen.add("log_temperature")
    metrics = []
    for step in range(start_step + 1, stop + 1):
        idx = sampler.next()
        inputs = BatchInputs(texts[idx], globals_[idx], patches[idx], sample_negatives(len(idx), rng))
        values, grads = backward(params, inputs, cfg.loss)
        finite = all(np.isfinite(values)) and all(np.all(np.isfinite(g)) for g in grads.values())
        if not finite:
            dump = _dump_batch(Path(dump_dir or ".") / f"diverged_step{step}.json", step, inputs, values)
            raise TrainingDivergedError(f"non-finite loss or gradient at step {step}", dump)
        for name in frozen:
            grads[name] = np.zeros_like(grads[name])
        lr = learning_rate(step, cfg)
        adamw_step(params.tensors, grads, state, lr, cfg, decay)
        _clamp_scalars(params)
        assert CURVATURE_MIN - 1e-12 <= params.curvature <= CURVATURE_MAX + 1e-12
        row = dict(zip(METRIC_FIELDS, (step, *values, params.curvature, params.temperature, lr)))
        metrics.append(row)
        if step % 100 == 0:
            log.info("step %d total %.4f con %.4f order %.4f c %.3f", step, values[2], values[0], values[1], params.curvature)
    return TrainResult(params, state, max(stop, start_step), metrics)


def write_metrics_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_FIELDS)
        for row in rows:
            writer.writerow([row["step"]] + [repr(float(row[k])) for k in METRIC_FIELDS[1:]])
