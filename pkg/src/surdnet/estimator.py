"""Scikit-learn style front end for the residual network.

ResidualDenoiserSR is a regressor over (N, 3, 32, 32)-shaped arrays: fit()
learns the residual mapping with minibatch SGD, predict() returns predicted
residuals, and enhance() applies the full x2 super-resolution pipeline to a
single (3, h, w) image.  Parameters follow the get_params/set_params
convention so the model composes with pipelines and search utilities.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import ShapeError
from .layers import SgdOptimizer, mse_loss
from .model import SurdcnnConfig, build_surdcnn, count_params
from .rng import SeededRng
from .training import enhance_image


def _check_patch_array(X, name="X"):
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 4 or X.shape[1] != 3:
        raise ShapeError("%s must have shape (n_samples, 3, h, w), got %s"
                         % (name, (X.shape,)))
    return X


class ResidualDenoiserSR(BaseEstimator, RegressorMixin):
    """Joint super-resolution + denoising residual CNN.

    Parameters mirror the training defaults: 20 conv layers of width 64,
    batch norm on layers 2..19, tanh on layers 1..10, SGD with gradient-norm
    clipping.
    """

    def __init__(self, depth=20, width=64, learning_rate=0.1, clip_norm=0.1,
                 epochs=15, batch_size=64, seed=0, init="scaled", verbose=False):
        self.depth = depth
        self.width = width
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.init = init
        self.verbose = verbose

    def _build(self):
        config = SurdcnnConfig(
            depth=self.depth, width=self.width,
            bn_layers=frozenset(range(2, self.depth)),
            tanh_layers=frozenset(range(1, min(10, self.depth) + 1)),
            init=self.init)
        return build_surdcnn(config, SeededRng(self.seed))

    def fit(self, X, y):
        X = _check_patch_array(X)
        y = _check_patch_array(y, "y")
        if X.shape != y.shape:
            raise ShapeError("X and y shapes differ: %s vs %s" % (X.shape, y.shape))
        self.network_ = self._build()
        opt = SgdOptimizer(self.learning_rate, clip_norm=self.clip_norm)
        n = len(X)
        for epoch in range(1, self.epochs + 1):
            order = np.argsort(SeededRng(self.seed).split(epoch).uniform(n),
                               kind="stable")
            self.network_.train_mode()
            total = 0.0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                pred = self.network_.forward(X[idx])
                loss, grad = mse_loss(pred, y[idx])
                self.network_.backward(grad)
                opt.step(self.network_)
                total += loss * len(idx)
            if self.verbose:
                print("epoch %d: loss %.6g" % (epoch, total / n), flush=True)
        return self

    def predict(self, X):
        """Predicted residuals for degraded inputs of shape (n, 3, h, w)."""
        X = _check_patch_array(X)
        self.network_.infer_mode()
        return self.network_.forward(X)

    def enhance(self, lr_image):
        """Super-resolve and denoise one (3, h, w) image to (3, 2h, 2w)."""
        return enhance_image(self.network_, np.asarray(lr_image, dtype=np.float64))

    def parameter_counts(self):
        return count_params(self.network_ if hasattr(self, "network_")
                            else self._build())
