"""Run the evaluation suites of a trained model over a paired-feature dataset."""

from __future__ import annotations

import numpy as np

from .datasynth import Dataset
from .density import HyperbolicDensity, embed_unchecked
from .divergence import renyi_alpha_divergence
from .encoders import EncoderParams, encode_image_grid, encode_texts
from .evalmetrics import (
    RankedList,
    auc,
    f1,
    micro_auc,
    micro_f1,
    ndcg_at_k,
    precision_at_k,
    recall_at_fraction,
    root_distance_histogram,
    root_distances,
    zero_shot_classify,
)
from .geometry import distance_unchecked
from .losses import LossConfig

TASKS = ("retrieval", "classify", "coarse", "hierarchy")


def embed_texts(params: EncoderParams, texts: np.ndarray) -> HyperbolicDensity:
    out = encode_texts(params, texts)
    return embed_unchecked(out.mu_hat, out.beta_raw, params.curvature)


def embed_image_grid(params: EncoderParams, queries, globals_, patches) -> HyperbolicDensity:
    """Image densities for every (query text, image) pair, shape (Q, B)."""
    out = encode_image_grid(params, params.dims, queries, globals_, patches)
    return embed_unchecked(out.mu_hat, out.beta_raw, params.curvature)


def retrieval_metrics(text_means, image_grid_means, query_labels, image_labels, c, k=10, fraction=0.1) -> dict:
    """Text-to-image retrieval averaged over queries."""
    n_images = image_grid_means.shape[1]
    k = min(k, n_images)
    prec, ndcg, rec = [], [], []
    for q, label in enumerate(query_labels):
        scores = -distance_unchecked(text_means[q][None, :], image_grid_means[q], c)
        ranked = RankedList.from_scores(q, np.arange(n_images), scores, image_labels == label)
        prec.append(precision_at_k(ranked, k))
        ndcg.append(ndcg_at_k(ranked, k))
        rec.append(recall_at_fraction(ranked, fraction))
    return {
        f"prec@{k}": float(np.mean(prec)),
        f"ndcg@{k}": float(np.mean(ndcg)),
        f"recall@{int(round(fraction * 100))}%": float(np.mean(rec)),
        "chance_prec": float(100.0 * np.mean([np.mean(image_labels == l) for l in query_labels])),
    }


def classification_metrics(prompt_means, image_grid_means, prompt_labels, image_labels, c) -> dict:
    """Zero-shot classification; binary AUC/F1 for two prompts, micro variants otherwise."""
    preds, scores = zero_shot_classify(np.swapaxes(image_grid_means, 0, 1), prompt_means, c)
    truth = np.searchsorted(prompt_labels, image_labels)
    out = {"accuracy": float(np.mean(preds == truth))}
    if len(prompt_labels) == 2:
        binary = truth == 1
        if binary.any() and not binary.all():
            out["auc"] = auc(scores[:, 1] - scores[:, 0], binary)
        out["f1"] = f1(preds == 1, binary)
    else:
        onehot = np.eye(len(prompt_labels), dtype=bool)[truth]
        out["micro_auc"] = micro_auc(scores, onehot)
        out["micro_f1"] = micro_f1(np.eye(len(prompt_labels), dtype=bool)[preds], onehot)
    return out


def evaluate(
    params: EncoderParams,
    dataset: Dataset,
    tasks=TASKS,
    *,
    k: int = 10,
    bins: int = 20,
    loss: LossConfig = LossConfig(),
) -> tuple[dict, list]:
    """Return (metrics, histogram_rows) for the requested tasks."""
    c = params.curvature
    _, globals_, patches, labels = dataset.arrays()
    concept_ids, concept_texts = dataset.concept_texts()
    texts = embed_texts(params, concept_texts)
    grid = embed_image_grid(params, concept_texts, globals_, patches)
    metrics: dict = {"num_images": int(len(labels)), "num_texts": int(len(concept_ids)), "curvature": c}
    histogram: list = []
    if "retrieval" in tasks:
        metrics["retrieval"] = retrieval_metrics(texts.mean, grid.mean, concept_ids, labels, c, k=k)
    if "classify" in tasks and len(concept_ids) >= 2:
        metrics["classify"] = classification_metrics(texts.mean, grid.mean, concept_ids, labels, c)
    tree = dataset.tree
    if "coarse" in tasks and tree is not None and len(tree.at_level(1)) >= 2:
        coarse = tree.at_level(1)
        prompt_ids = np.array([node.id for node in coarse])
        prompt_feats = np.stack([node.vector for node in coarse])
        coarse_labels = np.array([tree.ancestor(int(l), 1) for l in labels])
        prompts = embed_texts(params, prompt_feats)
        coarse_grid = embed_image_grid(params, prompt_feats, globals_, patches)
        metrics["coarse"] = classification_metrics(prompts.mean, coarse_grid.mean, prompt_ids, coarse_labels, c)
    if "hierarchy" in tasks:
        row = np.searchsorted(concept_ids, labels)
        cols = np.arange(len(labels))
        own = HyperbolicDensity(grid.mean[row, cols], grid.scale[row, cols])
        paired_text = HyperbolicDensity(texts.mean[row], texts.scale[row])
        div = renyi_alpha_divergence(own, paired_text, loss.alpha)
        d_text, d_image = root_distances(texts.mean, c), root_distances(own.mean, c)
        metrics["hierarchy"] = {
            "mean_root_distance_text": float(np.mean(d_text)),
            "mean_root_distance_image": float(np.mean(d_image)),
            "positive_encapsulation_rate": float(np.mean(div <= loss.gamma)),
            "mean_positive_divergence": float(np.mean(div)),
            "mean_scale_text": float(np.mean(texts.scale)),
            "mean_scale_image": float(np.mean(own.scale)),
        }
        histogram = root_distance_histogram(texts.mean, own.mean, c, bins=bins)
    return metrics, histogram
