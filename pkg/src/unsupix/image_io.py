"""Image and label-map files, and input normalization for the model.

Images come in as 8-bit RGB PNG or PPM (grayscale is promoted to RGB by
replication). Label maps travel as 16-bit single-channel PNG or as
plain-text CSV of integers; CSV has no value ceiling, PNG is limited to
65535. Ground truth from external datasets is expected to be converted to
one of these formats beforehand.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ._validation import check_label_map, check_rgb_image

_STD_FLOOR = 1e-12  # constant channels normalize to zero instead of dividing by ~0


def load_image(path) -> np.ndarray:
    """Read an 8-bit RGB (or grayscale) PNG/PPM as (H, W, 3) floats in [0, 1]."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode == "P":
                img = img.convert("RGB")
            if img.mode == "L":
                arr = np.asarray(img, dtype=np.uint8)
                arr = np.repeat(arr[:, :, None], 3, axis=2)
            elif img.mode == "RGB":
                arr = np.asarray(img, dtype=np.uint8)
            else:
                raise ValueError(
                    f"{path}: unsupported image mode {img.mode!r}; expected 8-bit RGB or grayscale"
                )
    except (UnidentifiedImageError, OSError) as err:
        raise ValueError(f"{path}: cannot read image ({err})") from err
    return arr.astype(np.float64) / 255.0


def save_image(path, image):
    """Write an (H, W, 3) float image in [0, 1] as an 8-bit RGB PNG."""
    arr = check_rgb_image(np.clip(np.asarray(image), 0.0, 1.0))
    data = (arr * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(Path(path))


def load_labelmap(path) -> np.ndarray:
    """Read a label map from a 16-bit grayscale PNG or an integer CSV."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        try:
            rows = [
                [int(cell) for cell in line.split(",")]
                for line in path.read_text().strip().splitlines()
                if line.strip()
            ]
        except ValueError as err:
            raise ValueError(f"{path}: CSV label maps must contain integers ({err})") from err
        if not rows:
            raise ValueError(f"{path}: empty label map")
        if len({len(r) for r in rows}) != 1:
            raise ValueError(f"{path}: ragged CSV rows")
        return check_label_map(np.array(rows, dtype=np.int64), name=str(path))
    try:
        with Image.open(path) as img:
            if img.mode not in ("I", "I;16", "L"):
                raise ValueError(
                    f"{path}: unsupported label-map mode {img.mode!r}; "
                    "expected 16-bit (or 8-bit) grayscale PNG"
                )
            arr = np.asarray(img, dtype=np.int64)
    except (UnidentifiedImageError, OSError) as err:
        raise ValueError(f"{path}: cannot read label map ({err})") from err
    return check_label_map(arr, name=str(path))


def save_labelmap(path, labels):
    """Write a label map as 16-bit grayscale PNG (.png) or integer CSV (.csv)."""
    arr = check_label_map(labels)
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w") as fh:
            for row in arr:
                fh.write(",".join(str(int(v)) for v in row))
                fh.write("\n")
        return
    if arr.max(initial=0) > 65535:
        raise ValueError(
            f"{path}: labels up to {arr.max()} do not fit 16-bit PNG; use .csv instead"
        )
    Image.fromarray(arr.astype(np.uint16)).save(path)


@dataclass
class NormalizedInput:
    """Per-channel standardized model input, with the statistics kept around.

    ``i_norm`` holds the 3 color channels and ``x_norm`` the 2 pixel
    coordinate channels (column index, then row index), each standardized
    to mean 0 and unit population variance. ``means``/``stds`` are the raw
    statistics of all 5 channels in that order (color first), so the
    reconstruction can be mapped back to display units.
    """

    i_norm: np.ndarray
    x_norm: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def denormalize_image(self, recon: np.ndarray) -> np.ndarray:
        """Map a reconstruction from normalized units back to [0, 1]."""
        out = recon * self.stds[:3] + self.means[:3]
        return np.clip(out, 0.0, 1.0)


def normalize_inputs(image) -> NormalizedInput:
    """Standardize the color channels and pixel-coordinate channels.

    Each of the 5 channels (R, G, B, x, y) independently gets mean 0 and
    population variance 1; a constant channel becomes all zeros.
    """
    arr = check_rgb_image(image)
    h, w, _ = arr.shape
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    stacked = np.concatenate([arr, xs[:, :, None], ys[:, :, None]], axis=2)
    means = stacked.mean(axis=(0, 1))
    stds = stacked.std(axis=(0, 1))
    safe = np.where(stds > _STD_FLOOR, stds, 1.0)
    normed = (stacked - means) / safe
    normed[:, :, stds <= _STD_FLOOR] = 0.0
    return NormalizedInput(
        i_norm=np.ascontiguousarray(normed[:, :, :3], dtype=np.float32),
        x_norm=np.ascontiguousarray(normed[:, :, 3:], dtype=np.float32),
        means=means,
        stds=stds,
    )
