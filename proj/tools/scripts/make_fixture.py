"""Generates the synthetic camouflage fixture: textured backgrounds with
low-contrast textured blobs.

usage: python make_fixture.py OUT_DIR [--count 8] [--size 64] [--seed 7]
"""
import argparse
from pathlib import Path

import cv2
import numpy as np


def texture(rng, size, scale, channels=3):
    noise = rng.random((size // scale + 2, size // scale + 2, channels))
    big = cv2.resize(noise, (size, size), interpolation=cv2.INTER_CUBIC)
    return cv2.GaussianBlur(big, (0, 0), 1.0)


def blob_mask(rng, size):
    mask = np.zeros((size, size), np.uint8)
    cx, cy = rng.integers(size // 4, 3 * size // 4, size=2)
    ax, ay = rng.integers(size // 8, size // 4, size=2)
    angle = float(rng.uniform(0, 180))
    cv2.ellipse(mask, (int(cx), int(cy)), (int(ax), int(ay)), angle, 0, 360, 255, -1)
    # a lobe so shapes are not all ellipses
    ox, oy = rng.integers(-ax // 2, ax // 2 + 1), rng.integers(-ay // 2, ay // 2 + 1)
    cv2.circle(mask, (int(cx + ox), int(cy + oy)), int(min(ax, ay) * 0.8), 255, -1)
    return mask


def sample(rng, size):
    base = rng.uniform(0.3, 0.6, size=3)
    bg = base + 0.25 * (texture(rng, size, 8) - 0.5)
    fg = base + 0.12 + 0.25 * (texture(rng, size, 3) - 0.5)
    mask = blob_mask(rng, size)
    alpha = cv2.GaussianBlur(mask.astype(np.float64) / 255.0, (0, 0), 0.8)[..., None]
    img = np.clip(alpha * fg + (1 - alpha) * bg, 0, 1)
    return (img * 255).round().astype(np.uint8), mask


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--count", type=int, default=8)
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for i in range(args.count):
        img, mask = sample(rng, args.size)
        stem = f"toy_{i:02d}"
        cv2.imwrite(str(out / "images" / f"{stem}.png"), cv2.cvtColor(img, cv2.COLOR_RGB2BGR))
        cv2.imwrite(str(out / "masks" / f"{stem}.png"), mask)


if __name__ == "__main__":
    main()
