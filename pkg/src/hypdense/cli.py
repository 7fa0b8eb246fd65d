"""Command-line entry point: ``hypdense {generate,train,eval,gradcheck,oracle}``.

Every command reads an optional YAML/JSON config file, applies ``--key value``
overrides on top (``--section.key`` or a bare ``--key`` when the name is
unambiguous), and writes its fully resolved config as ``config.json`` next to
its outputs. Precedence is command line, then file, then built-in defaults.

Exit codes: 0 success, 2 usage or config error, 3 I/O error, 4 failed check,
5 training diverged, 6 malformed or wrong-version input file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .checkpoint import load_checkpoint, save_checkpoint
from .datasynth import Dataset, SynthConfig, generate, load_dataset, save_dataset
from .divergence import divergence_oracle
from .encoders import ModelDims, init_params
from .errors import ConfigError, FormatError, TrainingDivergedError
from .evaluation import TASKS, evaluate
from .gradcheck import REL_TOL, run_gradcheck
from .losses import LossConfig
from .optim import TrainConfig, train, write_metrics_csv

log = logging.getLogger("hypdense")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CHECK, EXIT_DIVERGED, EXIT_FORMAT = 0, 2, 3, 4, 5, 6
OUT_ENV = "HYPDENSE_OUT"


@dataclass(frozen=True)
class ModelSection:
    """Model dimensions and initialization. Feature sizes default to the dataset's."""

    text_dim: int | None = None
    image_dim: int | None = None
    attn_dim: int = 16
    hidden: int = 64
    embed_dim: int = 8
    use_local: bool = True
    curvature: float = 1.0
    head_scale: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class TrainSection:
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


@dataclass(frozen=True)
class EvalSection:
    tasks: tuple = TASKS
    k: int = 10
    bins: int = 20
    split: str = "auto"


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**asdict(self.train), loss=self.loss)

    def model_dims(self, dataset: Dataset) -> ModelDims:
        header = dataset.header
        for key in ("text_dim", "image_dim"):
            want = getattr(self.model, key)
            if want is not None and want != header[key]:
                raise ConfigError(f"model.{key}={want} but the dataset has {header[key]}")
        return ModelDims(
            text_dim=header["text_dim"],
            image_dim=header["image_dim"],
            attn_dim=self.model.attn_dim,
            hidden=self.model.hidden,
            embed_dim=self.model.embed_dim,
            use_local=self.model.use_local,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


SECTIONS = {f.name: f.default_factory for f in fields(RunConfig)}


# -- config resolution ----------------------------------------------------------


def _coerce(value, type_name: str, key: str):
    base = type_name.replace(" | None", "")
    if value is None and "None" in type_name:
        return None
    if base == "bool":
        if isinstance(value, bool):
            return value
    elif base == "int":
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif base == "float":
        if isinstance(value, str):  # YAML 1.1 reads "3e-3" as a string
            try:
                value = float(value)
            except ValueError:
                pass
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif base == "str":
        if isinstance(value, str):
            return value
    elif base == "tuple":
        if isinstance(value, str):
            value = [v for v in value.split(",") if v]
        if isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value):
            return tuple(value)
    raise ConfigError(f"{key}: expected {type_name}, got {value!r}")


def _section_fields(section: str) -> dict:
    return {f.name: str(f.type) for f in fields(SECTIONS[section]())}


def _qualify(key: str) -> tuple[str, str]:
    if "." in key:
        section, name = key.split(".", 1)
        if section not in SECTIONS or name not in _section_fields(section):
            raise ConfigError(f"unknown config key {key!r}")
        return section, name
    owners = [s for s in SECTIONS if key in _section_fields(s)]
    if not owners:
        raise ConfigError(f"unknown config key {key!r}")
    if len(owners) > 1:
        raise ConfigError(f"ambiguous key {key!r}; use one of " + ", ".join(f"{s}.{key}" for s in owners))
    return owners[0], key


def load_config_file(path) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping of sections")
    return raw


def resolve_config(file_values: dict | None = None, overrides: list[tuple[str, object]] = ()) -> RunConfig:
    """Defaults, then the file's sections, then the ``(key, value)`` overrides."""
    merged: dict[str, dict] = {s: {} for s in SECTIONS}
    for section, values in (file_values or {}).items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        for key, value in values.items():
            _qualify(f"{section}.{key}")
            merged[section][key] = value
    for key, value in overrides:
        section, name = _qualify(key)
        merged[section][name] = value
    built = {}
    for section, factory in SECTIONS.items():
        types = _section_fields(section)
        values = {k: _coerce(v, types[k], f"{section}.{k}") for k, v in merged[section].items()}
        try:
            built[section] = replace(factory(), **values)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}: {exc}") from None
    unknown = set(built["eval"].tasks) - set(TASKS)
    if unknown:
        raise ConfigError(f"eval.tasks: unknown task(s) {sorted(unknown)}; choose from {list(TASKS)}")
    if built["eval"].split not in ("auto", "all", "train", "test"):
        raise ConfigError("eval.split must be one of auto, all, train, test")
    cfg = RunConfig(**built)
    try:
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from None
    return cfg


def parse_overrides(tokens: list[str]) -> list[tuple[str, object]]:
    """``--key value`` / ``--key=value`` pairs; values are parsed as YAML scalars."""
    out = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        if "=" in tok:
            key, text = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"missing value for {tok}")
            key, text = tok[2:], tokens[i + 1]
            i += 2
        key = key.replace("-", "_")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError:
            value = text
        out.append((key, value))
    return out


# -- helpers --------------------------------------------------------------------


def output_dir(arg: str | None, command: str) -> Path:
    if arg:
        path = Path(arg)
    else:
        path = Path(os.environ.get(OUT_ENV, "runs")) / command
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _dataset_for(args, cfg: RunConfig) -> Dataset:
    if args.dataset:
        return load_dataset(args.dataset)
    return generate(cfg.synth)


def _flatten(prefix: str, obj, out: dict) -> dict:
    if isinstance(obj, dict):
        for key in sorted(obj):
            _flatten(f"{prefix}.{key}" if prefix else str(key), obj[key], out)
    else:
        out[prefix] = obj
    return out


def write_eval_outputs(out: Path, metrics: dict, histogram: list) -> None:
    _write_text(out / "metrics.json", json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("metric", "value"))
        for key, value in _flatten("", metrics, {}).items():
            writer.writerow((key, repr(value) if isinstance(value, float) else value))
    with open(out / "histogram.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("bin_left", "bin_right", "count_text", "count_image"))
        for left, right, ct, cv in histogram:
            writer.writerow((repr(left), repr(right), ct, cv))


def eval_split(dataset: Dataset, split: str) -> Dataset:
    if split == "auto":
        split = "test" if any(s.split == "test" for s in dataset.samples) else "all"
    return dataset.subset(split)


# -- commands -------------------------------------------------------------------


def cmd_generate(args, cfg: RunConfig) -> int:
    out = output_dir(args.out, "generate")
    save_dataset(generate(cfg.synth), out / "dataset.jsonl")
    _write_text(out / "config.json", cfg.to_json())
    log.info("wrote %s", out / "dataset.jsonl")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    out = output_dir(args.out, "train")
    dataset = _dataset_for(args, cfg)
    dims = cfg.model_dims(dataset)
    cfg = replace(cfg, model=replace(cfg.model, text_dim=dims.text_dim, image_dim=dims.image_dim))
    _write_text(out / "config.json", cfg.to_json())
    if args.resume:
        start = load_checkpoint(args.resume)
        if start.params.dims != dims:
            raise ConfigError("checkpoint model dimensions differ from the config")
        init, optimizer, step = start.params, start.optimizer, start.step
    else:
        init = init_params(
            dims,
            seed=cfg.model.seed,
            curvature=cfg.model.curvature,
            temperature=cfg.loss.temperature,
            head_scale=cfg.model.head_scale,
        )
        optimizer, step = None, 0
    result = train(dataset, init, cfg.train_config(), optimizer=optimizer, start_step=step, dump_dir=out)
    save_checkpoint(result.checkpoint(), out / "checkpoint.hydn")
    write_metrics_csv(result.metrics, out / "metrics.csv")
    if result.metrics:
        last = result.metrics[-1]
        log.info("step %d total %.4f c %.3f tau %.4f", last["step"], last["total"], last["c"], last["tau"])
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    out = output_dir(args.out, "eval")
    ckpt = load_checkpoint(args.checkpoint)
    dataset = _dataset_for(args, cfg)
    _write_text(out / "config.json", cfg.to_json())
    subset = eval_split(dataset, cfg.eval.split)
    metrics, histogram = evaluate(
        ckpt.params, subset, cfg.eval.tasks, k=cfg.eval.k, bins=cfg.eval.bins, loss=cfg.loss
    )
    metrics["step"] = ckpt.step
    write_eval_outputs(out, metrics, histogram)
    for key, value in _flatten("", metrics, {}).items():
        log.info("%s = %s", key, value)
    return EXIT_OK


def cmd_gradcheck(args, cfg: RunConfig) -> int:
    out = output_dir(args.out, "gradcheck")
    _write_text(out / "config.json", json.dumps({"seed": args.seed, "configs": args.configs}, indent=2) + "\n")
    results = run_gradcheck(seed=args.seed, configs=args.configs)
    with open(out / "gradcheck.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("config_seed", "tensor", "relative_error"))
        for res in results:
            for name, err in res.errors.items():
                writer.writerow((res.seed, name, repr(err)))
    failed = [r for r in results if not r.passed]
    worst = max(results, key=lambda r: r.worst_error)
    print(f"gradcheck: {len(results) - len(failed)}/{len(results)} configs pass (worst {worst.worst_error:.2e} at {worst.worst_name}, tol {REL_TOL:g})")
    return EXIT_CHECK if failed else EXIT_OK


def cmd_oracle(args, cfg: RunConfig) -> int:
    out = output_dir(args.out, "oracle")
    alphas = [float(a) for a in args.alphas.split(",")]
    options = {"alphas": alphas, "trials": args.trials, "samples": args.samples, "seed": args.seed, "n_se": args.n_se}
    _write_text(out / "config.json", json.dumps(options, indent=2) + "\n")
    rows = divergence_oracle(alphas, trials=args.trials, samples=args.samples, seed=args.seed)
    with open(out / "oracle.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("trial", "dim", "alpha", "closed_form", "monte_carlo", "std_error", "z"))
        for r in rows:
            writer.writerow((r.trial, r.dim, r.alpha, repr(r.closed_form), repr(r.estimate), repr(r.std_error), repr(r.z_score)))
    bad = [r for r in rows if not r.within(args.n_se)]
    worst = max(abs(r.z_score) for r in rows)
    print(f"oracle: {len(rows) - len(bad)}/{len(rows)} within {args.n_se:g} SE (max |z| = {worst:.2f})")
    return EXIT_CHECK if bad else EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypdense",
        description="Hyperbolic density embeddings on synthetic image-text data.",
        epilog="Any config key can be overridden with --section.key VALUE (or --key VALUE when unambiguous).",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="YAML or JSON run config")
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<command> or runs/<command>)")
        return p

    common(sub.add_parser("generate", help="write a synthetic dataset"))
    p = common(sub.add_parser("train", help="train and write a checkpoint"))
    p.add_argument("--dataset", help="dataset file (default: generate from the synth section)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p = common(sub.add_parser("eval", help="evaluate a checkpoint"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", help="dataset file (default: generate from the synth section)")
    p = common(sub.add_parser("gradcheck", help="finite-difference gradient suite"), config=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--configs", type=int, default=20)
    p = common(sub.add_parser("oracle", help="Monte-Carlo check of the closed-form divergence"), config=False)
    p.add_argument("--alphas", default="0.3,0.5,0.7,0.9")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--samples", type=int, default=10_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-se", type=float, default=3.0, help="allowed deviation in standard errors")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if extra and args.command in ("gradcheck", "oracle"):
            raise ConfigError(f"unrecognized arguments: {' '.join(extra)}")
        file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
        cfg = resolve_config(file_values, parse_overrides(extra))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"hypdense: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"hypdense: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except TrainingDivergedError as exc:
        print(f"hypdense: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"hypdense: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
