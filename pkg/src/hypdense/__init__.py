"""Hyperbolic density embeddings for image-text alignment, at toy scale.

Text and image features are encoded as spherical Gaussians whose means live
on the Lorentz hyperboloid. Training combines a geodesic-distance
contrastive loss with an order loss built from a closed-form Renyi
alpha-divergence that asks each image density to sit inside its text's.
"""

from .density import EuclideanDensityParams, HyperbolicDensity, embed_density, sample_density
from .divergence import DivergenceConfig, encapsulation_penalty, kl_divergence, renyi_alpha_divergence
from .geometry import exp_map_origin, geodesic_distance, log_map_origin, origin, project_to_hyperboloid
from .losses import LossConfig, PairBatch, contrastive_loss, order_loss, total_loss

__version__ = "0.1.0"

__all__ = [
    "DivergenceConfig",
    "EuclideanDensityParams",
    "HyperbolicDensity",
    "LossConfig",
    "PairBatch",
    "contrastive_loss",
    "embed_density",
    "encapsulation_penalty",
    "exp_map_origin",
    "geodesic_distance",
    "kl_divergence",
    "log_map_origin",
    "order_loss",
    "origin",
    "project_to_hyperboloid",
    "renyi_alpha_divergence",
    "sample_density",
    "total_loss",
]
