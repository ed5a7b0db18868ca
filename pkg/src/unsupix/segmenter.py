"""End-to-end per-image optimization and label extraction.

``segment`` runs the whole procedure on one normalized image: initialize a
random model, loop ``iterations`` times {forward -> objective -> backward
-> Adam}, then read the label map off the final soft assignment by
per-pixel argmax. ``DeepSuperpixels`` wraps the same procedure as a
scikit-learn style estimator operating on a raw RGB image.

Labels are not post-processed in any way: a label may be absent (empty
superpixel) and a label's pixels may form several connected components;
``n_connected_components`` is reported as a diagnostic for the latter.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components as _csgraph_components
from sklearn.base import BaseEstimator, ClusterMixin

from . import nn
from ._validation import check_label_map, check_rgb_image
from .image_io import normalize_inputs
from .objective import LossBreakdown, compute_edge_weights, total_loss
from .tensor import Tape, Tensor


@dataclass
class RunConfig:
    """All hyperparameters of one optimization run.

    ``n_superpixels`` is an upper bound: the optimizer is free to leave
    labels unused. ``lambda_`` trades assignment confidence against
    uniform superpixel sizes and behaves well in [0, 3]; ``alpha`` scales
    the edge-aware smoothness, ``beta`` the reconstruction cost (0 turns
    it off), ``sigma`` the edge sensitivity.
    """

    n_superpixels: int = 500
    lambda_: float = 2.0
    alpha: float = 2.0
    beta: float = 10.0
    sigma: float = 8.0
    iterations: int = 1000
    learning_rate: float = 0.01
    seed: int = 0
    width_mult: float = 1.0
    log_every: int = 50

    def validate(self):
        if self.n_superpixels < 2:
            raise ValueError(f"n_superpixels must be >= 2, got {self.n_superpixels}")
        if self.lambda_ < 0:
            raise ValueError(f"lambda_ must be non-negative, got {self.lambda_}")
        if self.lambda_ > 3:
            warnings.warn(
                f"lambda_={self.lambda_} is outside the well-behaved range [0, 3]",
                stacklevel=3,
            )
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.width_mult <= 0:
            raise ValueError(f"width_mult must be positive, got {self.width_mult}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")


@dataclass
class SegmentationResult:
    """Output of one optimization run plus diagnostics."""

    labels: np.ndarray  # (H, W) int label map
    n_superpixels_used: int
    n_connected_components: int
    loss_history: list[LossBreakdown]
    history_iterations: list[int]
    recon: np.ndarray | None  # (H, W, 3) in normalized units
    elapsed: float
    config: RunConfig


class SegmentationDiverged(RuntimeError):
    """Raised when the objective becomes non-finite during optimization."""

    def __init__(self, iteration: int, breakdown: LossBreakdown):
        self.iteration = iteration
        self.breakdown = breakdown
        super().__init__(
            f"non-finite objective at iteration {iteration}: "
            f"clustering={breakdown.clustering!r} smoothness={breakdown.smoothness!r} "
            f"recons={breakdown.recons!r} total={breakdown.total!r}"
        )


def segment(i_norm, x_norm, cfg: RunConfig) -> SegmentationResult:
    """Optimize a fresh model on one image and extract its superpixels.

    ``i_norm`` (H, W, 3) and ``x_norm`` (H, W, 2) must already be
    normalized to zero mean, unit variance per channel. The run is fully
    determined by ``cfg`` (including the seed) and the inputs.
    """
    cfg.validate()
    i_arr = (i_norm.data if isinstance(i_norm, Tensor) else np.asarray(i_norm)).astype(
        np.float32, copy=False
    )
    x_arr = (x_norm.data if isinstance(x_norm, Tensor) else np.asarray(x_norm)).astype(
        np.float32, copy=False
    )
    if i_arr.ndim != 3 or i_arr.shape[2] != 3:
        raise ValueError(f"segment: i_norm must be (H, W, 3), got {i_arr.shape}")
    if x_arr.shape != i_arr.shape[:2] + (2,):
        raise ValueError(
            f"segment: x_norm must be {i_arr.shape[:2] + (2,)}, got {x_arr.shape}"
        )

    start = time.perf_counter()
    params = nn.init_model(cfg.n_superpixels, cfg.width_mult, cfg.seed)
    adam = nn.init_adam(params, cfg.learning_rate)
    weights = compute_edge_weights(i_arr, cfg.sigma)
    net_input = Tensor(np.concatenate([i_arr, x_arr], axis=2))
    image_t = Tensor(i_arr)

    history: list[LossBreakdown] = []
    logged: list[int] = []
    tape = Tape()
    for it in range(1, cfg.iterations + 1):
        with tape:
            out = nn.forward(params, net_input)
            breakdown = total_loss(out.p, out.recon, image_t, weights, cfg)
        if not np.isfinite(breakdown.total):
            raise SegmentationDiverged(it, breakdown)
        loss_tensor = breakdown.tensor
        if it == 1 or it % cfg.log_every == 0 or it == cfg.iterations:
            breakdown.tensor = None  # keep the log detached from the tape
            history.append(breakdown)
            logged.append(it)
        params.zero_grads()
        tape.backward(loss_tensor)
        nn.adam_step(params, adam)
        tape.reset()

    final = nn.forward(params, net_input)  # assignment after the last update
    labels = extract_labels(final.p)
    recon = np.array(final.recon.data, dtype=np.float32)
    elapsed = time.perf_counter() - start
    return SegmentationResult(
        labels=labels,
        n_superpixels_used=count_superpixels(labels),
        n_connected_components=count_connected_components(labels),
        loss_history=history,
        history_iterations=logged,
        recon=recon,
        elapsed=elapsed,
        config=cfg,
    )


def extract_labels(p) -> np.ndarray:
    """Per-pixel argmax of an (H, W, N) soft assignment; ties pick the lowest index."""
    arr = p.data if isinstance(p, Tensor) else np.asarray(p)
    if arr.ndim != 3:
        raise ValueError(f"extract_labels: expected (H, W, N), got {arr.shape}")
    return np.argmax(arr, axis=2).astype(np.int64)


def count_superpixels(labels) -> int:
    """Number of distinct labels present in the map."""
    return int(np.unique(check_label_map(labels)).size)


def _component_ids(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected same-label components via a sparse union of grid edges."""
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    right = labels[:, :-1] == labels[:, 1:]
    down = labels[:-1, :] == labels[1:, :]
    rows = np.concatenate([idx[:, :-1][right], idx[:-1, :][down]])
    cols = np.concatenate([idx[:, 1:][right], idx[1:, :][down]])
    graph = sparse.coo_matrix(
        (np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(h * w, h * w)
    )
    n, comp = _csgraph_components(graph, directed=False)
    return comp.reshape(h, w), n


def count_connected_components(labels) -> int:
    """Number of 4-connected same-label regions (>= number of labels used)."""
    arr = check_label_map(labels)
    return _component_ids(arr)[1]


def compact_labels(labels) -> np.ndarray:
    """Renumber the labels present to 0..K-1, keeping their sorted order."""
    arr = check_label_map(labels)
    _, inverse = np.unique(arr, return_inverse=True)
    return inverse.reshape(arr.shape).astype(np.int64)


class DeepSuperpixels(ClusterMixin, BaseEstimator):
    """Superpixel segmentation by optimizing a random CNN on the input image.

    No training data is involved: ``fit(image)`` optimizes a freshly
    initialized network on that single image and stores the resulting
    label map in ``labels_``. Parameters mirror :class:`RunConfig`.

    Attributes set by ``fit``: ``labels_``, ``n_superpixels_used_``,
    ``n_connected_components_``, ``loss_history_``, ``reconstruction_``
    (in original [0, 1] units), ``elapsed_``.
    """

    def __init__(
        self,
        n_superpixels: int = 500,
        lambda_: float = 2.0,
        alpha: float = 2.0,
        beta: float = 10.0,
        sigma: float = 8.0,
        iterations: int = 1000,
        learning_rate: float = 0.01,
        seed: int = 0,
        width_mult: float = 1.0,
        log_every: int = 50,
    ):
        self.n_superpixels = n_superpixels
        self.lambda_ = lambda_
        self.alpha = alpha
        self.beta = beta
        self.sigma = sigma
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.seed = seed
        self.width_mult = width_mult
        self.log_every = log_every

    def run_config(self) -> RunConfig:
        return RunConfig(**self.get_params())

    def fit(self, X, y=None):
        """Segment one RGB image (H, W, 3), uint8 or floats in [0, 1]."""
        image = check_rgb_image(X)
        norm = normalize_inputs(image)
        result = segment(norm.i_norm, norm.x_norm, self.run_config())
        self.labels_ = result.labels
        self.n_superpixels_used_ = result.n_superpixels_used
        self.n_connected_components_ = result.n_connected_components
        self.loss_history_ = result.loss_history
        self.history_iterations_ = result.history_iterations
        self.elapsed_ = result.elapsed
        self.reconstruction_ = norm.denormalize_image(result.recon)
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_
