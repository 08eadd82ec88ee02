"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np


def check_images(X, *, multiple: int = 4, name: str = "X") -> np.ndarray:
    """Validate an image array and return it as float32 in ``[-1, 1]``.

    Accepts ``(N, H, W, 3)`` or a single ``(H, W, 3)`` image. ``uint8`` input
    is rescaled from ``[0, 255]``; float input must already be in ``[-1, 1]``.
    """
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[-1] != 3:
        raise ValueError(f"{name} must have shape (n_images, height, width, 3), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} contains no images")
    h, w = X.shape[1:3]
    if h % multiple or w % multiple:
        raise ValueError(f"{name}: height and width must be multiples of {multiple}, got {h}x{w}")
    if X.dtype == np.uint8:
        return X.astype(np.float32) / 127.5 - 1.0
    if not np.issubdtype(X.dtype, np.floating):
        raise TypeError(f"{name} must be uint8 or floating point, got {X.dtype}")
    X = X.astype(np.float32, copy=False)
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains NaN or infinity")
    if X.min() < -1.0 or X.max() > 1.0:
        raise ValueError(f"{name} values must lie in [-1, 1]")
    return X


def check_same_size(X, Y) -> None:
    if X.shape[1:3] != Y.shape[1:3]:
        raise ValueError(f"image sizes differ: {X.shape[1:3]} vs {Y.shape[1:3]}")
