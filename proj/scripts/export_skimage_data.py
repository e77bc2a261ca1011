"""Writes the bundled images under data/ from scikit-image's offline samples.

data/photos/    five 256x256 RGB test photos
data/lowlight/  the same photos darkened (x0.25 after a 1.5 gamma), used as a tiny training set
data/pristine/  other scikit-image samples for fitting the NIQE model
"""

import argparse
from pathlib import Path

import numpy as np
import skimage.data as sd
from skimage.io import imsave
from skimage.transform import resize

PHOTOS = ["astronaut", "coffee", "chelsea", "rocket", "stereo_motorcycle"]
PRISTINE = ["camera", "brick", "grass", "gravel", "moon", "coins", "cell", "clock",
            "retina", "hubble_deep_field", "immunohistochemistry"]


def load(name):
    img = getattr(sd, name)()
    if isinstance(img, tuple):
        img = img[0]
    return img


def square_256(img):
    h, w = img.shape[:2]
    s = min(h, w)
    y0, x0 = (h - s) // 2, (w - s) // 2
    crop = img[y0:y0 + s, x0:x0 + s]
    out = resize(crop, (256, 256), order=3, anti_aliasing=True, preserve_range=True)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    args = ap.parse_args()
    for sub in ("photos", "lowlight", "pristine"):
        (args.out / sub).mkdir(parents=True, exist_ok=True)
    for name in PHOTOS:
        img = square_256(load(name))
        imsave(args.out / "photos" / f"{name}.png", img, check_contrast=False)
        dark = 0.25 * (img / 255.0) ** 1.5
        imsave(args.out / "lowlight" / f"{name}.png", np.rint(dark * 255).astype(np.uint8), check_contrast=False)
    for name in PRISTINE:
        img = load(name)
        if img.ndim == 3 and img.shape[2] == 4:
            img = img[..., :3]
        imsave(args.out / "pristine" / f"{name}.png", img.astype(np.uint8), check_contrast=False)


if __name__ == "__main__":
    main()
