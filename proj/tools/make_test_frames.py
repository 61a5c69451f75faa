#!/usr/bin/env python3
"""Writes the 256x256 luma test frames under tests/data from scikit-image's bundled images."""
import pathlib
import sys

import numpy as np
from skimage import data

# (name, loader, top, left)
SOURCES = [
    ("camera", data.camera, 100, 128),
    ("astronaut", data.astronaut, 0, 128),
    ("coins", data.coins, 24, 64),
    ("moon", data.moon, 128, 128),
    ("brick", data.brick, 128, 128),
    ("grass", data.grass, 128, 128),
    ("gravel", data.gravel, 128, 128),
    ("rocket", data.rocket, 100, 192),
    ("coffee", data.coffee, 72, 172),
    ("chelsea", data.chelsea, 22, 98),
    ("clock", data.clock, 22, 72),
    ("hubble", data.hubble_deep_field, 300, 372),
    ("ihc", data.immunohistochemistry, 128, 128),
    ("retina", data.retina, 578, 578),
    ("cell", data.cell, 202, 147),
    ("astronaut_face", data.astronaut, 40, 150),
]


def luma(img):
    if img.ndim == 2:
        return img.astype(np.float64)
    rgb = img[..., :3].astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def main(out_dir):
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, (name, loader, top, left) in enumerate(SOURCES):
        y = luma(loader())[top:top + 256, left:left + 256]
        assert y.shape == (256, 256), (name, y.shape)
        y = np.clip(np.rint(y), 0, 255).astype(np.uint8)
        path = out / f"{i:02d}_{name}.pgm"
        with open(path, "wb") as f:
            f.write(b"P5\n256 256\n255\n")
            f.write(y.tobytes())
        print(path)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
