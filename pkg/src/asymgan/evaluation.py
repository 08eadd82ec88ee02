"""Fréchet distance over embeddings, segmentation mIoU and uncertainty export."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from PIL import Image

from .data import to_uint8
from .graph import translate_a_to_b

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingSet:
    """``(N, D)`` embeddings of an image set plus the name of the extractor."""

    features: np.ndarray
    extractor_id: str = "unknown"

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim == 1:
            f = f[:, None]
        if f.ndim != 2 or f.shape[0] < 2 or f.shape[1] < 1:
            raise ValueError(f"need an (N >= 2, D >= 1) array, got shape {f.shape}")
        self.features = f

    @property
    def dim(self) -> int:
        return self.features.shape[1]


# image batch (N, H, W, 3) in [-1, 1] -> (N, D) features
Extractor = Callable[[np.ndarray], np.ndarray]


def channel_moments(images: np.ndarray) -> np.ndarray:
    """Toy extractor: per-channel mean and standard deviation (D = 6)."""
    images = np.asarray(images, dtype=np.float64)
    return np.concatenate([images.mean(axis=(1, 2)), images.std(axis=(1, 2))], axis=1)


def embed(images: np.ndarray, extractor: Extractor = channel_moments,
          extractor_id: str | None = None) -> EmbeddingSet:
    return EmbeddingSet(extractor(images), extractor_id or getattr(extractor, "__name__", "custom"))


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def frechet_distance(a: EmbeddingSet, b: EmbeddingSet) -> float:
    """Fréchet distance between Gaussian fits of two embedding sets.

    ``Tr sqrt(Ca Cb)`` is evaluated as ``Tr sqrt(Ca^1/2 Cb Ca^1/2)``, whose
    argument is symmetric PSD, with negative eigenvalues clamped to zero.
    """
    if a.dim != b.dim:
        raise ValueError(f"embedding dimensions differ: {a.dim} vs {b.dim}")
    mu_a, mu_b = a.features.mean(0), b.features.mean(0)
    cov_a = np.atleast_2d(np.cov(a.features, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b.features, rowvar=False))
    try:
        root_a = _psd_sqrt(cov_a)
        inner = root_a @ cov_b @ root_a
        eig = np.linalg.eigvalsh((inner + inner.T) / 2)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"matrix square root did not converge: {exc}") from exc
    tr_covmean = np.sqrt(np.clip(eig, 0, None)).sum()
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2 * tr_covmean)


def load_embeddings(path: str | os.PathLike) -> EmbeddingSet:
    """Read an ``(N, D)`` array saved with :func:`numpy.save`."""
    arr = np.load(path, allow_pickle=False)
    return EmbeddingSet(arr, Path(path).stem)


@dataclass
class LabelMap:
    classes: np.ndarray
    num_classes: int
    ignore_index: int = 255

    def __post_init__(self):
        c = np.asarray(self.classes)
        if not np.issubdtype(c.dtype, np.integer):
            raise ValueError("label maps must be integer arrays")
        bad = (c != self.ignore_index) & ((c < 0) | (c >= self.num_classes))
        if bad.any():
            raise ValueError(f"labels outside [0, {self.num_classes}) and not ignore_index")
        self.classes = c


def confusion_matrix(pred: LabelMap, gt: LabelMap) -> np.ndarray:
    """``(K, K)`` counts indexed ``[gt, pred]`` over non-ignored gt pixels."""
    if pred.classes.shape != gt.classes.shape:
        raise ValueError(f"shape mismatch {pred.classes.shape} vs {gt.classes.shape}")
    if pred.num_classes != gt.num_classes:
        raise ValueError("num_classes differs between prediction and ground truth")
    k = gt.num_classes
    valid = (gt.classes != gt.ignore_index) & (pred.classes != pred.ignore_index)
    g = gt.classes[valid].astype(np.int64)
    p = pred.classes[valid].astype(np.int64)
    return np.bincount(g * k + p, minlength=k * k).reshape(k, k)


def miou_from_confusion(conf: np.ndarray) -> float:
    """Mean IoU over classes that occur in the ground truth."""
    inter = np.diag(conf).astype(np.float64)
    gt_count = conf.sum(1)
    union = gt_count + conf.sum(0) - inter
    present = gt_count > 0
    if not present.any():
        return float("nan")
    return float((inter[present] / union[present]).mean())


def mean_iou(pred: LabelMap, gt: LabelMap) -> float:
    return miou_from_confusion(confusion_matrix(pred, gt))


def heat_image(sigma: np.ndarray, cmap: str = "viridis") -> np.ndarray:
    """Min-max normalise a 2-d map and colour it; constant maps come out uniform."""
    from matplotlib import colormaps

    lo, hi = float(sigma.min()), float(sigma.max())
    norm = (sigma - lo) / (hi - lo) if hi > lo else np.zeros_like(sigma)
    rgba = colormaps[cmap](norm)
    return (rgba[..., :3] * 255).round().astype(np.uint8)


@torch.no_grad()
def export_uncertainty(x_a, bundle, out_dir: str | os.PathLike,
                       names: Sequence[str] | None = None) -> dict[str, float]:
    """Write translated images and uncertainty heat maps for an adverse batch.

    ``x_a`` is ``(N, H, W, 3)`` in ``[-1, 1]``. Files are
    ``<name>_translated.png`` and ``<name>_sigma.png``. Returns min/mean/max
    of the predicted uncertainty.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    x = torch.from_numpy(np.ascontiguousarray(np.asarray(x_a, np.float32).transpose(0, 3, 1, 2)))
    image, sigma = translate_a_to_b(bundle, x)
    image = image.numpy().transpose(0, 2, 3, 1)
    sigma = sigma.numpy()
    names = list(names) if names is not None else [f"{i:05d}" for i in range(len(sigma))]
    for name, img, sig in zip(names, image, sigma):
        Image.fromarray(to_uint8(img)).save(out / f"{name}_translated.png")
        Image.fromarray(heat_image(sig)).save(out / f"{name}_sigma.png")
    stats = {"min": float(sigma.min()), "mean": float(sigma.mean()), "max": float(sigma.max())}
    logger.info("sigma min %.4g mean %.4g max %.4g", stats["min"], stats["mean"], stats["max"])
    return stats
