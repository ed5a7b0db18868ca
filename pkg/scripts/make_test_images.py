#!/usr/bin/env python3
"""Regenerate the committed natural test images in tests/data/.

Center-crops five photographs bundled with scikit-image and downscales
them to 128x128. Run once; the PNGs are committed so the test suite does
not depend on scikit-image.
"""

from pathlib import Path

import numpy as np
from PIL import Image
from skimage import data

OUT = Path(__file__).resolve().parent.parent / "tests" / "data"
SIZE = 128

SOURCES = {
    "astronaut": data.astronaut,
    "chelsea": data.chelsea,
    "coffee": data.coffee,
    "rocket": data.rocket,
    "ihc": data.immunohistochemistry,
}


def center_square(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[:2]
    side = min(h, w)
    y0 = (h - side) // 2
    x0 = (w - side) // 2
    return arr[y0 : y0 + side, x0 : x0 + side]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, fn in SOURCES.items():
        img = center_square(fn())
        small = Image.fromarray(img).resize((SIZE, SIZE), Image.LANCZOS)
        path = OUT / f"{name}.png"
        small.save(path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
