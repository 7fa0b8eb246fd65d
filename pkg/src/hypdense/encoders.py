"""Toy feature encoders, text-aware cross-attention and density heads.

The stand-in encoders are two tanh layers per modality followed by a linear
density head that emits ``n`` tangent-mean coordinates and one log-scale.
Images fuse their global token with a text-queried attention readout over
their patches. All weights use the row-vector convention ``x @ W``.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .density import EuclideanDensityParams, HyperbolicDensity, embed_unchecked
from .errors import DimensionError
from .losses import LossConfig, PairBatch, loss_components


@dataclass(frozen=True)
class ModelDims:
    text_dim: int = 16
    image_dim: int = 16
    attn_dim: int = 16
    hidden: int = 64
    embed_dim: int = 8
    use_local: bool = True


@dataclass(frozen=True)
class FeatureBundle:
    """One image's features plus the text used as its attention query."""

    text_feature: np.ndarray
    image_global: np.ndarray
    image_patches: np.ndarray  # (k, image_dim)

    def __post_init__(self):
        patches = np.asarray(self.image_patches)
        if patches.ndim != 2 or patches.shape[0] < 1:
            raise DimensionError("an image needs at least one patch")
        for arr in (self.text_feature, self.image_global, patches):
            if not np.all(np.isfinite(arr)):
                raise ValueError("feature vectors must be finite")


class EncoderParams:
    """Named parameter tensors in a fixed declaration order.

    Besides the network weights this carries the learnable scalars
    ``log_curvature`` and ``log_temperature``.
    """

    def __init__(self, dims: ModelDims, tensors: "OrderedDict[str, np.ndarray]"):
        self.dims = dims
        self.tensors = OrderedDict((k, np.asarray(v, dtype=np.float64)) for k, v in tensors.items())
        expected = parameter_shapes(dims)
        if list(self.tensors) != list(expected):
            raise ValueError("parameter names/order do not match the model dimensions")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise DimensionError(f"{name}: expected shape {shape}, got {self.tensors[name].shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.dims, OrderedDict((k, v.copy()) for k, v in self.tensors.items()))

    @property
    def curvature(self) -> float:
        return float(np.exp(self.tensors["log_curvature"]))

    @property
    def temperature(self) -> float:
        return float(np.exp(self.tensors["log_temperature"]))

    def as_tensors(self) -> "OrderedDict[str, ad.Tensor]":
        return OrderedDict((k, ad.Tensor(v, name=k)) for k, v in self.tensors.items())

    def equals(self, other: "EncoderParams") -> bool:
        return self.dims == other.dims and all(
            np.array_equal(v, other.tensors[k]) for k, v in self.tensors.items()
        )


def parameter_shapes(dims: ModelDims) -> "OrderedDict[str, tuple]":
    h, out = dims.hidden, dims.embed_dim + 1
    shapes = OrderedDict()
    for prefix, d_in in (("text", dims.text_dim), ("image", dims.image_dim)):
        shapes[f"{prefix}.w1"] = (d_in, h)
        shapes[f"{prefix}.b1"] = (h,)
        shapes[f"{prefix}.w2"] = (h, h)
        shapes[f"{prefix}.b2"] = (h,)
        shapes[f"{prefix}.head_w"] = (h, out)
        shapes[f"{prefix}.head_b"] = (out,)
    shapes["attn.wq"] = (dims.text_dim, dims.attn_dim)
    shapes["attn.wk"] = (dims.image_dim, dims.attn_dim)
    shapes["attn.wv"] = (dims.image_dim, dims.image_dim)
    shapes["log_curvature"] = ()
    shapes["log_temperature"] = ()
    return shapes


def is_decayed(name: str) -> bool:
    """Weight decay applies to weight matrices only, never to biases or scalars."""
    return name.endswith(("w1", "w2", "head_w")) or name.startswith("attn.")


def init_params(
    dims: ModelDims,
    seed: int,
    curvature: float = 1.0,
    temperature: float = 0.07,
    head_scale: float = 0.1,
) -> EncoderParams:
    rng = np.random.default_rng(seed)
    tensors = OrderedDict()
    for name, shape in parameter_shapes(dims).items():
        if name == "log_curvature":
            tensors[name] = np.array(np.log(curvature))
        elif name == "log_temperature":
            tensors[name] = np.array(np.log(temperature))
        elif len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            std = 1.0 / np.sqrt(shape[0])
            if name.endswith("head_w"):
                std *= head_scale
            tensors[name] = rng.normal(0.0, std, size=shape)
    return EncoderParams(dims, tensors)


# -- forward pieces -----------------------------------------------------------


def mlp(x, w1, b1, w2, b2):
    return ad.tanh(ad.tanh(x @ w1 + b1) @ w2 + b2)


def density_head(h, w, b) -> EuclideanDensityParams:
    out = h @ w + b
    return EuclideanDensityParams(out[..., :-1], out[..., -1])


def attention_weights(queries, keys, wq, wk):
    """Softmax weights (Q, B, k) of each query over each image's k keys."""
    q = queries @ wq
    k = keys @ wk
    scale = 1.0 / np.sqrt(np.shape(ad.data_of(wq))[-1])
    scores = ad.einsum("qh,bkh->qbk", q, k) * scale
    return ad.exp(scores - ad.logsumexp(scores, axis=-1, keepdims=True))


def attend(queries, keys, values, wq, wk, wv):
    """Batched single-head scaled dot-product attention -> (Q, B, value_dim)."""
    weights = attention_weights(queries, keys, wq, wk)
    return ad.einsum("qbk,bkd->qbd", weights, values @ wv)


def cross_attention(query, keys, values, params: EncoderParams):
    """Attention readout for one query vector over one image's keys/values."""
    query = np.asarray(ad.data_of(query), dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if keys.ndim != 2 or values.ndim != 2 or len(keys) != len(values) or len(keys) < 1:
        raise DimensionError("keys and values need the same nonzero length")
    if query.shape[-1] != params["attn.wq"].shape[0] or keys.shape[-1] != params["attn.wk"].shape[0]:
        raise DimensionError("query/key dimensions do not match the projections")
    if values.shape[-1] != params["attn.wv"].shape[0]:
        raise DimensionError("value dimension does not match the value projection")
    out = attend(query[None], keys[None], values[None], params["attn.wq"], params["attn.wk"], params["attn.wv"])
    return out[0, 0]


def _get(params, name):
    return params[name]


def encode_texts(params, texts) -> EuclideanDensityParams:
    """Text density parameters for a (B, text_dim) array."""
    h = mlp(texts, *(_get(params, f"text.{k}") for k in ("w1", "b1", "w2", "b2")))
    return density_head(h, _get(params, "text.head_w"), _get(params, "text.head_b"))


def encode_image_grid(params, dims: ModelDims, queries, globals_, patches) -> EuclideanDensityParams:
    """Image density parameters for every (query text, image) combination.

    ``queries`` (Q, text_dim), ``globals_`` (B, image_dim), ``patches``
    (B, k, image_dim); the result has leading shape (Q, B). With local
    attention disabled, images ignore the query.
    """
    n_q = np.shape(ad.data_of(queries))[0]
    n_b, dim = np.shape(ad.data_of(globals_))
    fused = ad.reshape(globals_, (1, n_b, dim)) + np.zeros((n_q, n_b, dim))
    if dims.use_local:
        fused = fused + attend(
            queries, patches, patches, _get(params, "attn.wq"), _get(params, "attn.wk"), _get(params, "attn.wv")
        )
    h = mlp(fused, *(_get(params, f"image.{k}") for k in ("w1", "b1", "w2", "b2")))
    return density_head(h, _get(params, "image.head_w"), _get(params, "image.head_b"))


def encode_text(text_feature, params: EncoderParams) -> EuclideanDensityParams:
    out = encode_texts(params, np.asarray(text_feature, dtype=np.float64)[None])
    return EuclideanDensityParams(out.mu_hat[0], out.beta_raw[0])


def encode_image(bundle: FeatureBundle, params: EncoderParams) -> EuclideanDensityParams:
    """Density parameters of one image, attended with its own text as query."""
    out = encode_image_grid(
        params,
        params.dims,
        np.asarray(bundle.text_feature, dtype=np.float64)[None],
        np.asarray(bundle.image_global, dtype=np.float64)[None],
        np.asarray(bundle.image_patches, dtype=np.float64)[None],
    )
    return EuclideanDensityParams(out.mu_hat[0, 0], out.beta_raw[0, 0])


# -- batch objective and its gradients ----------------------------------------


@dataclass
class BatchInputs:
    texts: np.ndarray  # (B, text_dim)
    globals_: np.ndarray  # (B, image_dim)
    patches: np.ndarray  # (B, k, image_dim)
    negatives: np.ndarray  # (B,) image index paired with text i as a negative

    def to_json(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in asdict(self).items()}


def sample_negatives(batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """For each text i, one mismatched image index j != i drawn uniformly."""
    if batch_size < 2:
        raise ValueError("in-batch negatives need batch_size >= 2")
    return (np.arange(batch_size) + rng.integers(1, batch_size, size=batch_size)) % batch_size


def objective_from_density_params(text_params, image_params, log_c, log_tau, negatives, cfg: LossConfig):
    """Loss components from raw density outputs.

    ``text_params`` has leading shape (B,), ``image_params`` (B, B) indexed
    [query text, image].
    """
    c = ad.exp(log_c)
    tau = ad.exp(log_tau)
    texts = embed_unchecked(text_params.mu_hat, text_params.beta_raw, c)
    grid = embed_unchecked(image_params.mu_hat, image_params.beta_raw, c)
    n = np.shape(ad.data_of(texts.mean))[0]
    idx = np.arange(n)
    positives = HyperbolicDensity(grid.mean[idx, idx], grid.scale[idx, idx])
    neg = np.asarray(negatives)
    negative_images = HyperbolicDensity(grid.mean[idx, neg], grid.scale[idx, neg])
    batch = PairBatch(texts, positives, texts, negative_images, contrast_images=grid)
    return loss_components(batch, cfg, c, tau)


def batch_objective(params, dims: ModelDims, inputs: BatchInputs, cfg: LossConfig):
    """(contrastive, order, total) for one batch; differentiable when ``params`` holds Tensors."""
    text_params = encode_texts(params, inputs.texts)
    image_params = encode_image_grid(params, dims, inputs.texts, inputs.globals_, inputs.patches)
    return objective_from_density_params(
        text_params, image_params, params["log_curvature"], params["log_temperature"], inputs.negatives, cfg
    )


def backward(params: EncoderParams, inputs: BatchInputs, cfg: LossConfig):
    """Loss components and d(total)/d(parameter) for every named parameter.

    Returns ``(values, grads)`` where ``values`` is (contrastive, order,
    total) as floats and ``grads`` maps each name to an array of its shape.
    """
    leaves = params.as_tensors()
    con, order, total = batch_objective(leaves, params.dims, inputs, cfg)
    total.backward()
    grads = OrderedDict(
        (k, np.zeros_like(t.data) if t.grad is None else t.grad) for k, t in leaves.items()
    )
    return (float(ad.data_of(con)), float(ad.data_of(order)), float(ad.data_of(total))), grads


def density_param_gradients(params: EncoderParams, inputs: BatchInputs, cfg: LossConfig):
    """Gradient of the total loss w.r.t. the raw density outputs of a batch.

    Returns the raw outputs (as arrays) and their gradients, keyed
    ``text.mu_hat``, ``text.beta_raw``, ``image.mu_hat``, ``image.beta_raw``.
    """
    text_params = encode_texts(params.tensors, inputs.texts)
    image_params = encode_image_grid(params.tensors, params.dims, inputs.texts, inputs.globals_, inputs.patches)
    raw = OrderedDict(
        [
            ("text.mu_hat", text_params.mu_hat),
            ("text.beta_raw", text_params.beta_raw),
            ("image.mu_hat", image_params.mu_hat),
            ("image.beta_raw", image_params.beta_raw),
        ]
    )
    leaves = OrderedDict((k, ad.Tensor(v, name=k)) for k, v in raw.items())
    _, _, total = objective_from_density_params(
        EuclideanDensityParams(leaves["text.mu_hat"], leaves["text.beta_raw"]),
        EuclideanDensityParams(leaves["image.mu_hat"], leaves["image.beta_raw"]),
        params["log_curvature"],
        params["log_temperature"],
        inputs.negatives,
        cfg,
    )
    total.backward()
    grads = OrderedDict((k, np.zeros_like(t.data) if t.grad is None else t.grad) for k, t in leaves.items())
    return raw, grads
