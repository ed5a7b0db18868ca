"""From-scratch SLIC superpixels, used as the comparison baseline.

Standard recipe: convert to CIELAB, seed cluster centers on a regular grid
with spacing S = sqrt(H*W/k), then alternate localized assignment (each
center claims pixels in its 2S x 2S window by combined color/space
distance) and center updates. Optionally merge undersized connected
components into their largest neighbor so every label is one 4-connected
region.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_rgb_image
from .segmenter import _component_ids

# sRGB -> XYZ (D65 white point), rows X/Y/Z
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65 = np.array([0.95047, 1.0, 1.08883])


def rgb_to_lab(image) -> np.ndarray:
    """Convert (..., 3) sRGB in [0, 1] to CIELAB (D65)."""
    rgb = np.asarray(image, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ValueError(f"rgb_to_lab: expected a trailing RGB axis, got {rgb.shape}")
    linear = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _RGB_TO_XYZ.T
    t = xyz / _D65
    delta = 6.0 / 29.0
    f = np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def _seed_centers(h: int, w: int, k: int) -> tuple[np.ndarray, int, int]:
    """Regular grid of at most k seed positions, (n, 2) float rows (y, x)."""
    ny = max(1, min(h, int(round(np.sqrt(k * h / w)))))
    nx = max(1, min(w, k // ny))
    # cell centers in pixel coordinates (pixel (0,0) sits at coordinate 0)
    ys = (np.arange(ny) + 0.5) * (h / ny) - 0.5
    xs = (np.arange(nx) + 0.5) * (w / nx) - 0.5
    grid = np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    return grid, ny, nx


def slic(
    image,
    n_segments: int = 100,
    compactness: float = 10.0,
    max_iters: int = 10,
    enforce_connectivity: bool = True,
) -> np.ndarray:
    """Segment an RGB image into about ``n_segments`` superpixels.

    ``compactness`` trades color fidelity for spatial regularity (larger
    means squarer segments). Returns an (H, W) int label map; labels
    partition the image and, with ``enforce_connectivity``, each label is
    a single 4-connected region.
    """
    rgb = check_rgb_image(image)
    h, w, _ = rgb.shape
    if n_segments < 2:
        raise ValueError(f"n_segments must be >= 2, got {n_segments}")
    if n_segments > h * w:
        raise ValueError(f"n_segments={n_segments} exceeds the {h * w} pixels available")
    if compactness <= 0:
        raise ValueError(f"compactness must be positive, got {compactness}")

    lab = rgb_to_lab(rgb)
    spacing = np.sqrt(h * w / n_segments)
    centers_yx, ny, nx = _seed_centers(h, w, n_segments)
    n = centers_yx.shape[0]
    iy = np.clip(np.round(centers_yx[:, 0]).astype(int), 0, h - 1)
    ix = np.clip(np.round(centers_yx[:, 1]).astype(int), 0, w - 1)
    centers = np.concatenate([centers_yx, lab[iy, ix]], axis=1)  # (n, 5): y, x, L, a, b

    ratio2 = (compactness / spacing) ** 2
    # windows must cover the image even when the seed grid is coarser than
    # the nominal spacing (n can be < n_segments)
    window = int(np.ceil(max(2 * spacing, h / ny, w / nx)))
    ys_full, xs_full = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    labels = np.zeros((h, w), dtype=np.int64)

    for _ in range(max_iters):
        best = np.full((h, w), np.inf)
        labels.fill(0)
        for ci in range(n):
            cy, cx = centers[ci, 0], centers[ci, 1]
            y0, y1 = max(int(cy) - window, 0), min(int(cy) + window + 1, h)
            x0, x1 = max(int(cx) - window, 0), min(int(cx) + window + 1, w)
            if y0 >= y1 or x0 >= x1:
                continue
            dlab = lab[y0:y1, x0:x1] - centers[ci, 2:]
            d2 = (dlab * dlab).sum(axis=-1)
            d2 += ratio2 * (
                (ys_full[y0:y1, x0:x1] - cy) ** 2 + (xs_full[y0:y1, x0:x1] - cx) ** 2
            )
            closer = d2 < best[y0:y1, x0:x1]
            best[y0:y1, x0:x1][closer] = d2[closer]
            labels[y0:y1, x0:x1][closer] = ci
        # move each center to the mean of its pixels (empty centers stay put)
        flat = labels.ravel()
        count = np.bincount(flat, minlength=n).astype(np.float64)
        feats = np.stack(
            [ys_full.ravel(), xs_full.ravel()]
            + [lab[..., c].ravel() for c in range(3)],
            axis=1,
        )
        sums = np.zeros((n, 5))
        for c in range(5):
            sums[:, c] = np.bincount(flat, weights=feats[:, c], minlength=n)
        nonempty = count > 0
        centers[nonempty] = sums[nonempty] / count[nonempty, None]

    if enforce_connectivity:
        labels = _merge_small_components(labels, min_size=max(1, int(spacing * spacing / 4)))
    return labels


def _merge_small_components(labels: np.ndarray, min_size: int) -> np.ndarray:
    """Relabel 4-connected components smaller than ``min_size`` into their
    largest adjacent component, so each remaining label is one region."""
    comp, n_comp = _component_ids(labels)
    sizes = np.bincount(comp.ravel(), minlength=n_comp)

    # adjacency between distinct components (4-neighborhood)
    mism_h = comp[:, :-1] != comp[:, 1:]
    mism_v = comp[:-1, :] != comp[1:, :]
    u = np.concatenate([comp[:, :-1][mism_h], comp[:-1, :][mism_v]])
    v = np.concatenate([comp[:, 1:][mism_h], comp[1:, :][mism_v]])
    packed = np.unique(
        np.concatenate([u, v]).astype(np.int64) * n_comp
        + np.concatenate([v, u]).astype(np.int64)
    )
    neighbors: dict[int, list[int]] = {}
    for key in packed:
        neighbors.setdefault(int(key // n_comp), []).append(int(key % n_comp))

    # union-find; merge small components into their currently largest neighbor
    parent = np.arange(n_comp)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    sizes = sizes.astype(np.int64)
    for ci in sorted(range(n_comp), key=lambda i: (sizes[i], i)):
        if sizes[find(ci)] >= min_size:
            continue
        cands = {find(nb) for nb in neighbors.get(ci, ())} - {find(ci)}
        if not cands:
            continue
        target = max(cands, key=lambda r: (sizes[r], -r))
        root = find(ci)
        parent[root] = target
        sizes[target] += sizes[root]

    # every union is a connected set of components, so root id = one region
    roots = np.array([find(i) for i in range(n_comp)])
    _, compact = np.unique(roots, return_inverse=True)
    return compact[comp].astype(np.int64)


class Slic(ClusterMixin, BaseEstimator):
    """SLIC superpixels with the scikit-learn estimator interface.

    ``fit(image)`` stores the label map in ``labels_``.
    """

    def __init__(
        self,
        n_segments: int = 100,
        compactness: float = 10.0,
        max_iters: int = 10,
        enforce_connectivity: bool = True,
    ):
        self.n_segments = n_segments
        self.compactness = compactness
        self.max_iters = max_iters
        self.enforce_connectivity = enforce_connectivity

    def fit(self, X, y=None):
        self.labels_ = slic(
            X,
            n_segments=self.n_segments,
            compactness=self.compactness,
            max_iters=self.max_iters,
            enforce_connectivity=self.enforce_connectivity,
        )
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_
