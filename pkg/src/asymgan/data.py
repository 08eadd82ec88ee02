"""Unpaired two-domain image loading.

Dataset directories follow ``<root>/trainA``, ``<root>/trainB``,
``<root>/testA``, ``<root>/testB`` (A = adverse, B = normal). Images are
scaled to cover the target size, cropped (centre, or random when
``random_crop``) and mapped from ``[0, 255]`` to ``[-1, 1]``.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .config import Domain

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp", ".ppm"}


class DatasetError(OSError):
    pass


@dataclass
class DomainDataset:
    root: Path
    domain: Domain
    file_list: list[Path]
    target_size: tuple[int, int]

    def __len__(self):
        return len(self.file_list)


def split_dirs(root: str | os.PathLike, split: str = "train") -> tuple[Path, Path]:
    root = Path(root)
    return root / f"{split}A", root / f"{split}B"


def list_images(root: str | os.PathLike) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"not a readable directory: {root}")
    return sorted(
        p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )


def scan_dataset(root, domain: Domain, target_size=(256, 512)) -> DomainDataset:
    files = list_images(root)
    if not files:
        raise DatasetError(f"no images found under {root}")
    return DomainDataset(Path(root), domain, files, tuple(target_size))


def to_unit_range(pixels: np.ndarray) -> np.ndarray:
    """uint8 ``[0, 255]`` -> float32 ``[-1, 1]``."""
    return pixels.astype(np.float32) / 127.5 - 1.0


def to_uint8(images: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((np.asarray(images) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def resize_crop(img: Image.Image, size, rng: np.random.Generator | None = None) -> Image.Image:
    """Scale so ``img`` covers ``size`` (h, w), then crop.

    The crop is centred unless ``rng`` is given.
    """
    th, tw = size
    w, h = img.size
    scale = max(th / h, tw / w)
    nw, nh = max(tw, round(w * scale)), max(th, round(h * scale))
    if (nw, nh) != (w, h):
        img = img.resize((nw, nh), Image.BICUBIC)
    if rng is None:
        left, top = (nw - tw) // 2, (nh - th) // 2
    else:
        left = int(rng.integers(0, nw - tw + 1))
        top = int(rng.integers(0, nh - th + 1))
    return img.crop((left, top, left + tw, top + th))


def load_image(path, size, rng=None) -> np.ndarray:
    """Decode one file to a float32 ``(H, W, 3)`` array in ``[-1, 1]``."""
    with Image.open(path) as img:
        img = resize_crop(img.convert("RGB"), size, rng)
        return to_unit_range(np.asarray(img))


def _decode_many(paths, size, crop_seeds, pool=None):
    def one(args):
        path, seed = args
        rng = None if seed is None else np.random.default_rng(seed)
        try:
            return load_image(path, size, rng)
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            logger.warning("skipping undecodable image %s: %s", path, exc)
            return None

    jobs = list(zip(paths, crop_seeds))
    out = list(pool.map(one, jobs)) if pool else [one(j) for j in jobs]
    return [o for o in out if o is not None]


def load_batch(ds_a: DomainDataset, ds_b: DomainDataset, batch_size: int, rng: np.random.Generator,
               random_crop: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Draw an unpaired batch, sampling each domain independently.

    Returns two ``(batch, H, W, 3)`` arrays. Files that fail to decode are
    skipped with a warning, so a batch may come back short; it is never
    padded.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    batches = []
    for ds in (ds_a, ds_b):
        idx = rng.choice(len(ds), size=batch_size, replace=len(ds) < batch_size)
        seeds = rng.integers(0, 2**63, size=batch_size) if random_crop else [None] * batch_size
        images = _decode_many([ds.file_list[i] for i in idx], ds.target_size, list(seeds))
        if not images:
            raise DatasetError(f"every image in the batch failed to decode ({ds.root})")
        batches.append(np.stack(images))
    return batches[0], batches[1]


class EpochSampler:
    """Shuffled index stream that visits every item once per epoch."""

    def __init__(self, n: int, rng: np.random.Generator):
        if n < 1:
            raise ValueError("cannot sample from an empty dataset")
        self.n = n
        self.rng = rng
        self.perm = rng.permutation(n)
        self.cursor = 0

    def take(self, k: int) -> list[int]:
        out = []
        while len(out) < k:
            if self.cursor == self.n:
                self.perm = self.rng.permutation(self.n)
                self.cursor = 0
            step = min(k - len(out), self.n - self.cursor)
            out.extend(int(i) for i in self.perm[self.cursor:self.cursor + step])
            self.cursor += step
        return out

    def state_dict(self) -> dict:
        return {"rng": self.rng.bit_generator.state, "perm": self.perm.tolist(), "cursor": self.cursor}

    def load_state_dict(self, state: dict) -> None:
        self.rng.bit_generator.state = state["rng"]
        self.perm = np.asarray(state["perm"], dtype=np.int64)
        self.cursor = int(state["cursor"])


class _PairedSamplers:
    def __init__(self, n_a: int, n_b: int, batch_size: int, seed: int):
        seq = np.random.SeedSequence(seed)
        sa, sb, sc = seq.spawn(3)
        self.batch_size = batch_size
        self.sampler_a = EpochSampler(n_a, np.random.default_rng(sa))
        self.sampler_b = EpochSampler(n_b, np.random.default_rng(sb))
        self.crop_rng = np.random.default_rng(sc)

    def state_dict(self) -> dict:
        return {
            "a": self.sampler_a.state_dict(),
            "b": self.sampler_b.state_dict(),
            "crop": self.crop_rng.bit_generator.state,
        }

    def load_state_dict(self, state: dict) -> None:
        self.sampler_a.load_state_dict(state["a"])
        self.sampler_b.load_state_dict(state["b"])
        self.crop_rng.bit_generator.state = state["crop"]


class ArrayLoader(_PairedSamplers):
    """In-memory unpaired loader over two ``(N, H, W, 3)`` arrays in ``[-1, 1]``."""

    def __init__(self, images_a: np.ndarray, images_b: np.ndarray, batch_size: int, seed: int = 0):
        super().__init__(len(images_a), len(images_b), batch_size, seed)
        self.images_a = torch.from_numpy(np.ascontiguousarray(np.asarray(images_a, np.float32).transpose(0, 3, 1, 2)))
        self.images_b = torch.from_numpy(np.ascontiguousarray(np.asarray(images_b, np.float32).transpose(0, 3, 1, 2)))

    def next_batch(self) -> tuple[torch.Tensor, torch.Tensor]:
        ia = self.sampler_a.take(self.batch_size)
        ib = self.sampler_b.take(self.batch_size)
        return self.images_a[ia], self.images_b[ib]

    def close(self):
        pass


class UnpairedLoader(_PairedSamplers):
    """File-backed unpaired loader with optional threaded decoding.

    Indices and crop offsets are drawn on the calling thread, so the batch
    sequence depends only on ``seed`` regardless of ``workers``.
    """

    def __init__(self, ds_a: DomainDataset, ds_b: DomainDataset, batch_size: int, seed: int = 0,
                 random_crop: bool = False, workers: int = 0):
        super().__init__(len(ds_a), len(ds_b), batch_size, seed)
        self.ds_a, self.ds_b = ds_a, ds_b
        self.random_crop = random_crop
        self.pool = ThreadPoolExecutor(workers) if workers > 0 else None

    def _domain_batch(self, ds, sampler):
        idx = sampler.take(self.batch_size)
        seeds = (
            [int(s) for s in self.crop_rng.integers(0, 2**63, size=len(idx))]
            if self.random_crop else [None] * len(idx)
        )
        images = _decode_many([ds.file_list[i] for i in idx], ds.target_size, seeds, self.pool)
        if not images:
            raise DatasetError(f"every image in the batch failed to decode ({ds.root})")
        return torch.from_numpy(np.ascontiguousarray(np.stack(images).transpose(0, 3, 1, 2)))

    def next_batch(self) -> tuple[torch.Tensor, torch.Tensor]:
        xa = self._domain_batch(self.ds_a, self.sampler_a)
        xb = self._domain_batch(self.ds_b, self.sampler_b)
        n = min(len(xa), len(xb))
        return xa[:n], xb[:n]

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()
