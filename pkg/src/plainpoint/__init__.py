"""Point cloud patchifying and masked-autoencoder pre-training in plain numpy."""
from .geometry import KeyPoints, PointCloud, farthest_point_sampling, knn_search
from .mae import MaskedAutoencoder, ModelConfig, chamfer_l2, mae_loss, partition_patches
from .patchify import PatchSet, PatchTensor, gather_patches, patchify
from .rng import Rng

__all__ = [
    "KeyPoints", "MaskedAutoencoder", "ModelConfig", "PatchSet", "PatchTensor", "PointCloud", "Rng",
    "chamfer_l2", "farthest_point_sampling", "gather_patches", "knn_search", "mae_loss",
    "partition_patches", "patchify",
]
__version__ = "0.1.0"
