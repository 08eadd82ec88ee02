"""scikit-learn compatible wrapper around the training engine."""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import TrainConfig
from .data import ArrayLoader
from .engine import train
from .graph import translate_a_to_b, translate_b_to_a
from .validation import check_images, check_same_size


class AsymmetricTranslator(TransformerMixin, BaseEstimator):
    """Unpaired adverse -> normal image translator.

    ``fit(X, y)`` takes adverse images ``X`` and an *unpaired* set of normal
    images ``y`` (any count, same spatial size). ``transform`` maps adverse
    images to the normal domain, ``inverse_transform`` goes the other way and
    ``predict_uncertainty`` returns the per-pixel uncertainty map. Images are
    ``(N, H, W, 3)``, either ``uint8`` or float in ``[-1, 1]``; outputs are
    float in ``[-1, 1]``.

    Parameters mirror :class:`~asymgan.config.TrainConfig`.
    """

    def __init__(
        self,
        lambda_rec=10.0,
        lambda_feat=1.0,
        lambda_cyc=10.0,
        learning_rate=2e-4,
        adam_beta1=0.5,
        adam_beta2=0.999,
        batch_size=4,
        iterations=1000,
        sigma_floor=1e-2,
        use_tnet=True,
        use_uncertainty_loss=True,
        apply_tnet_in_cycle_B=True,
        base_channels=64,
        lr_decay=False,
        random_state=0,
    ):
        self.lambda_rec = lambda_rec
        self.lambda_feat = lambda_feat
        self.lambda_cyc = lambda_cyc
        self.learning_rate = learning_rate
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.batch_size = batch_size
        self.iterations = iterations
        self.sigma_floor = sigma_floor
        self.use_tnet = use_tnet
        self.use_uncertainty_loss = use_uncertainty_loss
        self.apply_tnet_in_cycle_B = apply_tnet_in_cycle_B
        self.base_channels = base_channels
        self.lr_decay = lr_decay
        self.random_state = random_state

    def _config(self, image_size) -> TrainConfig:
        params = self.get_params()
        seed = params.pop("random_state")
        return TrainConfig(**params, seed=0 if seed is None else int(seed),
                           image_size=tuple(image_size))

    def fit(self, X, y):
        X = check_images(X, multiple=32, name="X")
        Y = check_images(y, multiple=32, name="y")
        check_same_size(X, Y)
        cfg = self._config(X.shape[1:3])
        loader = ArrayLoader(X, Y, cfg.batch_size, seed=cfg.seed)
        history = []
        state = train(cfg, loader=loader, output_dir=False,
                      callback=lambda s, r: history.append(r))
        state.bundle.eval()
        self.bundle_ = state.bundle
        self.config_ = cfg
        self.loss_history_ = history
        self.n_iter_ = state.iteration
        return self

    def _run(self, X, fn):
        check_is_fitted(self, "bundle_")
        X = check_images(X)
        x = torch.from_numpy(np.ascontiguousarray(X.transpose(0, 3, 1, 2)))
        with torch.no_grad():
            return fn(x)

    def transform(self, X):
        image, _ = self._run(X, lambda x: translate_a_to_b(self.bundle_, x))
        return image.numpy().transpose(0, 2, 3, 1)

    def inverse_transform(self, X):
        image = self._run(X, lambda x: translate_b_to_a(self.bundle_, x))
        return image.numpy().transpose(0, 2, 3, 1)

    def predict_uncertainty(self, X):
        _, sigma = self._run(X, lambda x: translate_a_to_b(self.bundle_, x))
        return sigma.numpy()

    def fit_transform(self, X, y=None, **fit_params):
        if y is None:
            raise ValueError("fit requires an unpaired set of normal-domain images as y")
        return self.fit(X, y).transform(X)
