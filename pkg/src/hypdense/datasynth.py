"""Seeded synthetic hierarchical image/text data and its JSON-lines file format.

A concept tree is grown from a root at the zero vector; every child is its
parent plus a random offset whose norm shrinks geometrically with depth.
Each leaf concept gets one text feature, ``images_per_concept`` training
images and ``test_images_per_concept`` held-out images. An image is a
bag of patches in which only one "pathology" patch carries the concept: it
sits one level below its leaf (leaf vector plus an offset of the next
level's norm), so every image is a specific instance of its text. The other
patches come from a shared background distribution, and the global token is
a noisy average of all patches, which dilutes the concept signal.

File format (``hypdense.dataset`` version 1): line 1 is a header object,
every following line one sample object. See ``docs/dataset_format.md``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, VersionError

FORMAT_NAME = "hypdense.dataset"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class SynthConfig:
    depth: int = 3
    branching: int = 2
    images_per_concept: int = 16
    patches: int = 8
    feature_dim: int = 16
    offset_scale: float = 3.0
    level_decay: float = 0.7
    text_noise: float = 0.1
    patch_noise: float = 0.0
    background_scale: float = 1.0
    background_offset: float = 3.0
    global_noise: float = 1.0
    test_images_per_concept: int = 16
    seed: int = 0

    def __post_init__(self):
        for name in ("depth", "branching", "images_per_concept", "patches", "feature_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.test_images_per_concept < 0:
            raise ValueError("test_images_per_concept must be nonnegative")


@dataclass(frozen=True)
class Concept:
    id: int
    parent: int | None
    level: int
    vector: np.ndarray


@dataclass
class ConceptTree:
    depth: int
    branching: int
    concepts: list[Concept]

    @property
    def leaves(self) -> list[Concept]:
        return [c for c in self.concepts if c.level == self.depth]

    def at_level(self, level: int) -> list[Concept]:
        return [c for c in self.concepts if c.level == level]

    def ancestor(self, concept_id: int, level: int) -> int:
        node = self.concepts[concept_id]
        while node.level > level:
            node = self.concepts[node.parent]
        return node.id


@dataclass
class PairedSample:
    text_feature: np.ndarray
    image_global: np.ndarray
    image_patches: np.ndarray
    concept_id: int
    split: str = "train"


@dataclass
class Dataset:
    header: dict
    samples: list[PairedSample] = field(default_factory=list)

    @property
    def tree(self) -> ConceptTree | None:
        raw = self.header.get("concepts") or []
        if not raw:
            return None
        concepts = [Concept(c["id"], c["parent"], c["level"], np.asarray(c["vector"])) for c in raw]
        tree_cfg = self.header.get("tree", {})
        depth = tree_cfg.get("depth", max(c.level for c in concepts))
        return ConceptTree(depth, tree_cfg.get("branching", 0), concepts)

    def subset(self, split: str | None) -> "Dataset":
        if split in (None, "all"):
            return self
        return Dataset(self.header, [s for s in self.samples if s.split == split])

    def arrays(self):
        """(texts, globals, patches, concept_ids) stacked over samples."""
        return (
            np.stack([s.text_feature for s in self.samples]),
            np.stack([s.image_global for s in self.samples]),
            np.stack([s.image_patches for s in self.samples]),
            np.array([s.concept_id for s in self.samples], dtype=np.int64),
        )

    def concept_texts(self):
        """One text feature per distinct concept id, ordered by id: (ids, texts)."""
        first = {}
        for s in self.samples:
            first.setdefault(s.concept_id, s.text_feature)
        ids = sorted(first)
        return np.array(ids, dtype=np.int64), np.stack([first[i] for i in ids])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset) or self.header != other.header or len(self.samples) != len(other.samples):
            return False
        return all(
            a.concept_id == b.concept_id
            and a.split == b.split
            and np.array_equal(a.text_feature, b.text_feature)
            and np.array_equal(a.image_global, b.image_global)
            and np.array_equal(a.image_patches, b.image_patches)
            for a, b in zip(self.samples, other.samples)
        )


def _random_direction(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def build_tree(cfg: SynthConfig, rng: np.random.Generator) -> ConceptTree:
    concepts = [Concept(0, None, 0, np.zeros(cfg.feature_dim))]
    frontier = [concepts[0]]
    for level in range(1, cfg.depth + 1):
        radius = cfg.offset_scale * cfg.level_decay**level
        children = []
        for parent in frontier:
            for _ in range(cfg.branching):
                vec = parent.vector + radius * _random_direction(rng, cfg.feature_dim)
                child = Concept(len(concepts), parent.id, level, vec)
                concepts.append(child)
                children.append(child)
        frontier = children
    return ConceptTree(cfg.depth, cfg.branching, concepts)


def generate(cfg: SynthConfig = SynthConfig()) -> Dataset:
    """Build a dataset as a pure function of ``cfg`` (including its seed)."""
    rng = np.random.default_rng(cfg.seed)
    tree = build_tree(cfg, rng)
    background_mean = cfg.background_offset * _random_direction(rng, cfg.feature_dim)
    instance_radius = cfg.offset_scale * cfg.level_decay ** (cfg.depth + 1)
    samples = []
    for leaf in tree.leaves:
        text = leaf.vector + cfg.text_noise * rng.standard_normal(cfg.feature_dim)
        splits = ["train"] * cfg.images_per_concept + ["test"] * cfg.test_images_per_concept
        for split in splits:
            patches = background_mean + cfg.background_scale * rng.standard_normal((cfg.patches, cfg.feature_dim))
            slot = int(rng.integers(cfg.patches))
            patches[slot] = (
                leaf.vector
                + instance_radius * _random_direction(rng, cfg.feature_dim)
                + cfg.patch_noise * rng.standard_normal(cfg.feature_dim)
            )
            global_token = patches.mean(axis=0) + cfg.global_noise * rng.standard_normal(cfg.feature_dim)
            samples.append(PairedSample(text.copy(), global_token, patches, leaf.id, split))
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "text_dim": cfg.feature_dim,
        "image_dim": cfg.feature_dim,
        "patches": cfg.patches,
        "num_samples": len(samples),
        "seed": cfg.seed,
        "tree": asdict(cfg),
        "concepts": [
            {"id": c.id, "parent": c.parent, "level": c.level, "vector": c.vector.tolist()} for c in tree.concepts
        ],
    }
    return Dataset(header, samples)


# -- file format ----------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_dataset(dataset: Dataset, path) -> None:
    header = dict(dataset.header, num_samples=len(dataset.samples))
    lines = [_dumps(header)]
    for s in dataset.samples:
        lines.append(
            _dumps(
                {
                    "concept_id": int(s.concept_id),
                    "split": s.split,
                    "text": np.asarray(s.text_feature).tolist(),
                    "global": np.asarray(s.image_global).tolist(),
                    "patches": np.asarray(s.image_patches).tolist(),
                }
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_line(text: str, lineno: int) -> dict:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", line=lineno, offset=exc.colno) from None
    if not isinstance(obj, dict):
        raise FormatError("expected a JSON object", line=lineno)
    return obj


def _vector(obj: dict, key: str, lineno: int, dim: int, ndim: int = 1) -> np.ndarray:
    if key not in obj:
        raise FormatError(f"missing field {key!r}", line=lineno)
    try:
        arr = np.asarray(obj[key], dtype=np.float64)
    except (TypeError, ValueError):
        raise FormatError(f"field {key!r} is not a numeric array", line=lineno) from None
    if arr.ndim != ndim or arr.shape[-1] != dim or not np.all(np.isfinite(arr)):
        raise FormatError(f"field {key!r} has shape {arr.shape}, expected last dimension {dim}", line=lineno)
    return arr


def load_dataset(path) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError("empty dataset file", line=1)
    header = _parse_line(lines[0], 1)
    if header.get("format") != FORMAT_NAME:
        raise FormatError(f"not a {FORMAT_NAME} file", line=1)
    if header.get("version") != FORMAT_VERSION:
        raise VersionError(f"unsupported dataset version {header.get('version')!r}", line=1)
    for key in ("text_dim", "image_dim", "patches", "num_samples"):
        if not isinstance(header.get(key), int) or header[key] < 0:
            raise FormatError(f"header field {key!r} must be a nonnegative integer", line=1)
    known_ids = {c["id"] for c in header.get("concepts") or []}
    samples = []
    for lineno, raw in enumerate(lines[1:], start=2):
        obj = _parse_line(raw, lineno)
        patches = _vector(obj, "patches", lineno, header["image_dim"], ndim=2)
        if patches.shape[0] != header["patches"]:
            raise FormatError(f"expected {header['patches']} patches, got {patches.shape[0]}", line=lineno)
        concept_id = obj.get("concept_id")
        if not isinstance(concept_id, int):
            raise FormatError("concept_id must be an integer", line=lineno)
        if known_ids and concept_id not in known_ids:
            raise FormatError(f"concept_id {concept_id} is not in the concept tree", line=lineno)
        split = obj.get("split", "train")
        if split not in ("train", "test"):
            raise FormatError(f"split must be 'train' or 'test', got {split!r}", line=lineno)
        samples.append(
            PairedSample(
                _vector(obj, "text", lineno, header["text_dim"]),
                _vector(obj, "global", lineno, header["image_dim"]),
                patches,
                concept_id,
                split,
            )
        )
    if len(samples) != header["num_samples"]:
        raise FormatError(
            f"header announces {header['num_samples']} samples but file has {len(samples)} (truncated?)",
            line=len(lines) + 1,
        )
    return Dataset(header, samples)
