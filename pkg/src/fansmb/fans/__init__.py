"""Any-subset masked autoregressive flow: masking, model, training, checkpoints."""
from .masking import (
    FansConfig,
    MaskSet,
    SubsetOrder,
    build_masks,
    build_subset_order,
    compact_rescale,
    default_batch_size,
    resolve_collisions,
    sample_leaf_mask,
    sample_leaf_masks,
)
from .model import FansModel, TrainingDivergence, build_model

__all__ = [
    "FansConfig", "MaskSet", "SubsetOrder", "build_masks", "build_subset_order", "compact_rescale",
    "default_batch_size", "resolve_collisions", "sample_leaf_mask", "sample_leaf_masks",
    "FansModel", "TrainingDivergence", "build_model",
]
