"""Dense temporal event set prediction with position-anchored queries and
relation-biased decoding, at desk scale on synthetic data."""

from .config import RunConfig, load_config, save_config
from .geometry import (
    TemporalInterval,
    giou_1d,
    location_correlation,
    pairwise_relation_matrix,
    relation_vector,
)
from .matching import LossReport, LossWeights, focal_loss, head_matching_cost, hungarian, total_loss
from .model import DenseEventModel
from .queries import EventQuerySet, fit_kmeans, proposal_loss
from .synth import SyntheticVideo, build_vocabulary, dataset_statistics, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "DenseEventModel",
    "EventQuerySet",
    "LossReport",
    "LossWeights",
    "RunConfig",
    "SyntheticVideo",
    "TemporalInterval",
    "build_vocabulary",
    "dataset_statistics",
    "fit_kmeans",
    "focal_loss",
    "generate_dataset",
    "giou_1d",
    "head_matching_cost",
    "hungarian",
    "load_config",
    "location_correlation",
    "pairwise_relation_matrix",
    "proposal_loss",
    "relation_vector",
    "save_config",
    "total_loss",
]
