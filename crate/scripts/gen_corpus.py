#!/usr/bin/env python3
"""Generate the committed JPEG test corpus under crates/core/tests/fixtures/.

Synthetic photo-like images (gradient background, ellipses, rectangles,
sinusoidal texture, mild sensor noise) encoded with Pillow/libjpeg as
baseline JPEG, quality 80, no optimized Huffman tables.

Deterministic: fixed seeds, no timestamps. Re-running overwrites the same
files; the fixtures are committed so the test suite does not depend on
Python or Pillow at test time.
"""

import os

import numpy as np
from PIL import Image

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "crates", "core", "tests", "fixtures")

# (width, height); mostly the 512x384 / 384x512 shapes, a few odd sizes so
# partial MCUs are covered, and a few small ones to keep tests quick.
SIZES = [
    (512, 384), (384, 512), (512, 384), (384, 512), (512, 384),
    (384, 512), (512, 384), (384, 512), (512, 384), (384, 512),
    (256, 192), (192, 256), (256, 192), (192, 256),
    (200, 150), (150, 200), (168, 120), (120, 168),
    (176, 144), (144, 176),
]


def make_image(seed, w, h):
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)

    c0 = rng.uniform(30, 220, 3)
    c1 = rng.uniform(30, 220, 3)
    ang = rng.uniform(0, 2 * np.pi)
    t = xx * np.cos(ang) + yy * np.sin(ang)
    t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
    img = c0 + (c1 - c0) * t[..., None]

    fx, fy = rng.uniform(0.005, 0.06, 2)
    tex = np.sin(2 * np.pi * (fx * xx + fy * yy))
    img += rng.uniform(3, 15) * tex[..., None] * rng.uniform(0.3, 1.0, 3)

    for _ in range(int(rng.integers(4, 10))):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        rx = rng.uniform(w * 0.05, w * 0.30)
        ry = rng.uniform(h * 0.05, h * 0.30)
        col = rng.uniform(0, 255, 3)
        alpha = rng.uniform(0.5, 1.0)
        mask = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        img[mask] = (1 - alpha) * img[mask] + alpha * col

    for _ in range(int(rng.integers(2, 6))):
        x0 = int(rng.uniform(0, w * 0.8))
        y0 = int(rng.uniform(0, h * 0.8))
        x1 = min(w, x0 + int(rng.uniform(12, w * 0.25)))
        y1 = min(h, y0 + int(rng.uniform(12, h * 0.25)))
        img[y0:y1, x0:x1] = rng.uniform(0, 255, 3)

    img += rng.normal(0, rng.uniform(1.0, 3.5), img.shape)
    return Image.fromarray(np.clip(img, 0, 255).astype(np.uint8), "RGB")


def save(im, name, **kw):
    path = os.path.join(OUT, name)
    im.save(path, "JPEG", quality=80, optimize=False, **kw)
    print(name, os.path.getsize(path))


def main():
    os.makedirs(OUT, exist_ok=True)

    for i, (w, h) in enumerate(SIZES, start=1):
        im = make_image(1000 + i, w, h)
        save(im, f"desk_{i:02d}.jpg", subsampling=2)
        if i <= 4:
            save(im, f"desk444_{i:02d}.jpg", subsampling=0)

    # Single-MCU images.
    flat = Image.new("RGB", (16, 16), (128, 128, 128))
    save(flat, "flat_16x16_420.jpg", subsampling=2)
    flat8 = Image.new("RGB", (8, 8), (90, 160, 200))
    save(flat8, "flat_8x8_444.jpg", subsampling=0)

    # Unsupported codings, used by rejection tests.
    gray = make_image(77, 64, 48).convert("L")
    save(gray, "unsupported_gray.jpg", subsampling=0)
    prog = make_image(78, 64, 48)
    path = os.path.join(OUT, "unsupported_progressive.jpg")
    prog.save(path, "JPEG", quality=80, progressive=True)
    print("unsupported_progressive.jpg", os.path.getsize(path))


if __name__ == "__main__":
    main()
