"""Unsupervised superpixel segmentation by inference-time CNN optimization.

A randomly initialized convolutional network is optimized on a single
image to minimize an entropy-clustering + edge-aware-smoothness +
reconstruction objective; the per-pixel argmax of the resulting soft
assignment is the superpixel map. Includes ASA/boundary-recall metrics and
a from-scratch SLIC baseline for comparison.
"""

from .metrics import MetricsReport, asa, boundary_recall, evaluate, extract_boundary
from .objective import (
    EdgeWeights,
    LossBreakdown,
    clustering_loss,
    compute_edge_weights,
    recons_loss,
    smoothness_loss,
    total_loss,
)
from .segmenter import (
    DeepSuperpixels,
    RunConfig,
    SegmentationDiverged,
    SegmentationResult,
    compact_labels,
    count_connected_components,
    count_superpixels,
    extract_labels,
    segment,
)
from .slic import Slic, slic
from .image_io import NormalizedInput, load_image, load_labelmap, normalize_inputs, save_image, save_labelmap
from .tensor import Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "DeepSuperpixels",
    "EdgeWeights",
    "LossBreakdown",
    "MetricsReport",
    "NormalizedInput",
    "RunConfig",
    "SegmentationDiverged",
    "SegmentationResult",
    "Slic",
    "Tape",
    "Tensor",
    "asa",
    "boundary_recall",
    "clustering_loss",
    "compact_labels",
    "compute_edge_weights",
    "count_connected_components",
    "count_superpixels",
    "evaluate",
    "extract_boundary",
    "extract_labels",
    "load_image",
    "load_labelmap",
    "normalize_inputs",
    "recons_loss",
    "save_image",
    "save_labelmap",
    "segment",
    "slic",
    "smoothness_loss",
    "total_loss",
]
