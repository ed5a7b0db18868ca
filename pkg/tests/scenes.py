"""Synthetic piecewise-smooth scenes with exact ground-truth segmentations.

Regions are level sets of a smooth random field with a few blobs overlaid,
so boundaries are long, wavy and organic rather than compact cells; colors
are only moderately separated and sit under shading and blurred texture.
That combination is what makes low-superpixel-count segmentation hard:
compact color clustering leaks across the weak wavy boundaries.
"""

import numpy as np
from scipy.ndimage import gaussian_filter


def make_scene(seed: int, size: int = 96, n_regions: int = 8):
    """Return (image in [0,1] float (H,W,3), ground-truth labels (H,W) int)."""
    rng = np.random.default_rng(seed)
    h = w = size
    n_bands = max(2, n_regions - 2)

    # wavy strata: quantile bands of a smooth random field, with structure
    # at roughly the superpixel scale so compact cells cannot hug them
    field = gaussian_filter(rng.standard_normal((h, w)), size / 16)
    edges = np.quantile(field, np.linspace(0, 1, n_bands + 1)[1:-1])
    labels = np.digitize(field, edges)

    ys, xs = np.mgrid[0:h, 0:w]
    extra = n_regions - n_bands
    # a thin curved ribbon (level set of a second field)
    if extra >= 1:
        ribbon_field = gaussian_filter(rng.standard_normal((h, w)), size / 6)
        ribbon_field -= ribbon_field.mean()
        width = 0.12 * ribbon_field.std()
        labels = np.where(np.abs(ribbon_field) < width, n_bands, labels)
    # blob regions with wobbling outlines
    for b in range(1, extra):
        cy, cx = rng.uniform(0.2 * size, 0.8 * size, size=2)
        radius = rng.uniform(0.12, 0.22) * size
        wobble = gaussian_filter(rng.standard_normal((h, w)), size / 12) * size * 0.1
        blob = (ys - cy) ** 2 + (xs - cx) ** 2 < (radius + wobble) ** 2
        labels = np.where(blob, n_bands + b, labels)

    # moderately separated colors under shading and texture
    n_labels = labels.max() + 1
    colors = rng.uniform(0.2, 0.8, size=(n_labels, 3))
    image = colors[labels]
    ramp = (0.5 * xs / w + 0.5 * ys / h - 0.5) * 0.25
    image += ramp[..., None]
    noise = np.stack(
        [gaussian_filter(rng.standard_normal((h, w)), 1.2) for _ in range(3)], axis=-1
    )
    image += noise * 0.05
    return np.clip(image, 0.0, 1.0), labels.astype(np.int64)


def make_benchmark_corpus(tmp_path, n_images: int = 10, size: int = 96, seed0: int = 100):
    """Write a paired image/ground-truth corpus; returns (img_dir, gt_dir)."""
    from unsupix.image_io import save_image, save_labelmap

    img_dir = tmp_path / "images"
    gt_dir = tmp_path / "gt"
    img_dir.mkdir(parents=True, exist_ok=True)
    gt_dir.mkdir(parents=True, exist_ok=True)
    for i in range(n_images):
        image, labels = make_scene(seed0 + i, size=size, n_regions=6 + (i % 5))
        save_image(img_dir / f"scene{i:02d}.png", image)
        save_labelmap(gt_dir / f"scene{i:02d}.png", labels)
    return img_dir, gt_dir
