"""Superpixel quality metrics against ground-truth segmentations.

``asa`` (achievable segmentation accuracy) is the fraction of pixels that
would be correctly labeled if every superpixel were assigned to the
ground-truth segment it overlaps most. ``boundary_recall`` is the fraction
of ground-truth boundary pixels that have a predicted boundary pixel
within a (2*epsilon+1)^2 window.

A pixel is a boundary pixel iff any of its 4-neighbors carries a different
label, so both sides of every label edge are marked and identical maps
have recall exactly 1. Image border pixels are not boundaries by default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from ._validation import check_boundary_mask, check_label_map, check_same_shape


@dataclass
class MetricsReport:
    """ASA/BR of one segmentation, averaged over the available annotations."""

    asa: float
    br: float
    n_superpixels: int
    asa_per_gt: list[float]
    br_per_gt: list[float]


def asa(labels, gt) -> float:
    """Achievable segmentation accuracy of ``labels`` against one ground truth.

    sum_i max_j |s_i intersect g_j| / (number of pixels); in (0, 1], and 1
    exactly when every superpixel lies inside a single ground-truth segment.
    """
    s = check_label_map(labels, "labels")
    g = check_label_map(gt, "gt")
    check_same_shape(s, g, "asa")
    _, s_idx = np.unique(s, return_inverse=True)
    g_vals, g_idx = np.unique(g, return_inverse=True)
    n_s = int(s_idx.max()) + 1
    n_g = g_vals.size
    overlap = np.bincount(
        s_idx.ravel() * n_g + g_idx.ravel(), minlength=n_s * n_g
    ).reshape(n_s, n_g)
    return float(overlap.max(axis=1).sum() / s.size)


def extract_boundary(labels) -> np.ndarray:
    """Boolean mask of pixels whose label differs from a 4-neighbor."""
    arr = check_label_map(labels)
    mask = np.zeros(arr.shape, dtype=bool)
    horiz = arr[:, :-1] != arr[:, 1:]
    mask[:, :-1] |= horiz
    mask[:, 1:] |= horiz
    vert = arr[:-1, :] != arr[1:, :]
    mask[:-1, :] |= vert
    mask[1:, :] |= vert
    return mask


def boundary_recall(pred_boundary, gt_boundary, epsilon: int = 1) -> float:
    """Recall of ground-truth boundary pixels within an epsilon window.

    A ground-truth boundary pixel counts as recalled when at least one
    predicted boundary pixel lies in the (2*epsilon+1)^2 patch centered on
    it. An empty ground-truth boundary has nothing to recall and scores 1.
    """
    bs = check_boundary_mask(pred_boundary, "pred_boundary")
    bg = check_boundary_mask(gt_boundary, "gt_boundary")
    check_same_shape(bs, bg, "boundary_recall")
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    total = int(bg.sum())
    if total == 0:
        return 1.0
    if epsilon == 0:
        hits = bs
    else:
        hits = maximum_filter(bs, size=2 * epsilon + 1, mode="constant", cval=False)
    tp = int((bg & hits).sum())
    return tp / total


def evaluate(labels, gts, epsilon: int = 1) -> MetricsReport:
    """ASA and BR against one or more ground-truth annotations.

    Per-annotation values are kept; the headline numbers are arithmetic
    means across annotations.
    """
    if not isinstance(gts, (list, tuple)):
        gts = [gts]
    if len(gts) == 0:
        raise ValueError("evaluate: need at least one ground-truth label map")
    s = check_label_map(labels, "labels")
    pred_b = extract_boundary(s)
    asa_values, br_values = [], []
    for gt in gts:
        g = check_label_map(gt, "gt")
        check_same_shape(s, g, "evaluate")
        asa_values.append(asa(s, g))
        br_values.append(boundary_recall(pred_b, extract_boundary(g), epsilon))
    return MetricsReport(
        asa=float(np.mean(asa_values)),
        br=float(np.mean(br_values)),
        n_superpixels=int(np.unique(s).size),
        asa_per_gt=asa_values,
        br_per_gt=br_values,
    )
