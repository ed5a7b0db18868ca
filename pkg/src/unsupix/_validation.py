"""Input validation helpers shared by the estimators, metrics and I/O."""

from __future__ import annotations

import numpy as np


def check_rgb_image(image, name: str = "image") -> np.ndarray:
    """Coerce to an (H, W, 3) float64 array with values in [0, 1].

    Accepts uint8 (rescaled by 1/255), floats in [0, 1], and single-channel
    arrays (replicated to 3 channels).
    """
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(
            f"{name}: expected (H, W, 3) or (H, W) array, got shape {np.asarray(image).shape}"
        )
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ValueError(f"{name}: image must be at least 2x2, got {arr.shape[:2]}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64)
        if arr.size and (arr.min() < -1e-6 or arr.max() > 1 + 1e-6):
            raise ValueError(
                f"{name}: float images must lie in [0, 1], got range "
                f"[{arr.min():.4g}, {arr.max():.4g}]"
            )
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    return arr


def check_label_map(labels, name: str = "labels") -> np.ndarray:
    """Coerce to a 2-D array of non-negative integer labels."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D label map, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if np.issubdtype(arr.dtype, np.floating) and np.all(arr == np.round(arr)):
            arr = arr.astype(np.int64)
        else:
            raise ValueError(f"{name}: labels must be integers, got dtype {arr.dtype}")
    if arr.size and arr.min() < 0:
        raise ValueError(f"{name}: labels must be non-negative, min is {arr.min()}")
    return arr.astype(np.int64, copy=False)


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str):
    if a.shape != b.shape:
        raise ValueError(f"{what}: dimension mismatch {a.shape} vs {b.shape}")


def check_boundary_mask(mask, name: str = "mask") -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D boolean mask, got shape {arr.shape}")
    return arr.astype(bool, copy=False)
