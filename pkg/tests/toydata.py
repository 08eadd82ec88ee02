"""Synthetic unpaired driving-like scenes for smoke tests."""

import numpy as np
from PIL import Image


def _scene(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w] / np.array([h, w])[:, None, None]
    horizon = rng.uniform(0.35, 0.55)
    sky = np.stack([0.55 + 0.3 * yy, 0.7 + 0.2 * yy, np.full_like(yy, 0.95)], -1)
    road = np.stack([np.full_like(yy, 0.35), np.full_like(yy, 0.35), np.full_like(yy, 0.38)], -1)
    img = np.where((yy < horizon)[..., None], sky, road)
    for _ in range(3):
        cx, cy = rng.uniform(0.1, 0.9), rng.uniform(horizon - 0.1, horizon + 0.25)
        bw, bh = rng.uniform(0.05, 0.15), rng.uniform(0.08, 0.2)
        box = (abs(xx - cx) < bw) & (abs(yy - cy) < bh)
        img[box] = rng.uniform(0.1, 0.9, size=3)
    return img


def make_domain_images(n, h=64, w=128, adverse=False, seed=0):
    """uint8 (n, h, w, 3) images; the adverse domain is dark with glare blobs."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        img = _scene(rng, h, w)
        if adverse:
            img = 0.3 * img
            yy, xx = np.mgrid[0:h, 0:w]
            for _ in range(2):
                cy, cx = rng.uniform(0, h), rng.uniform(0, w)
                r = rng.uniform(3, 8)
                glare = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
                img = img + 0.6 * glare[..., None] * np.array([1.0, 0.9, 0.6])
        out.append(np.clip(img * 255, 0, 255).round().astype(np.uint8))
    return np.stack(out)


def write_domain_dir(path, n, h=64, w=128, adverse=False, seed=0):
    path.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(make_domain_images(n, h, w, adverse, seed)):
        Image.fromarray(img).save(path / f"img_{i:03d}.png")
    return path
