"""scikit-learn compatible wrappers around the ray-basis models.

``fit(X, y)`` trains on positions ``X`` (n, 3) and amplitudes ``y``; an
explicit validation set may be passed as ``X_val``/``y_val``, otherwise
``validation_fraction`` of the records is held out at random.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import InvalidArgumentError, LearnedRcnn, Rayleigh, RcnnWeights
from .data import Dataset, random_split
from .metrics import idw_baseline
from .model import GeometryAidedModel, ImageSourceModel, PlaneWaveModel
from .train import TrainConfig, multi_restart_train


def _wavenumber(frequency, sound_speed):
    if not (frequency > 0 and sound_speed > 0):
        raise InvalidArgumentError("frequency and sound speed must be positive")
    return 2.0 * math.pi * frequency / sound_speed


class _RBNNBase(RegressorMixin, BaseEstimator):
    def _dataset(self, X, y, X_val, y_val):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 3:
            raise InvalidArgumentError("positions must have three columns")
        if X_val is not None:
            X_val, y_val = check_X_y(X_val, y_val, y_numeric=True)
            pos = np.vstack([X, X_val])
            amp = np.concatenate([y, y_val])
            split = np.array(["train"] * len(y) + ["validation"] * len(y_val), dtype=object)
        else:
            f = float(self.validation_fraction)
            pos, amp = X, y
            split = random_split(len(y), (1.0 - f, f, 0.0), self.random_state)
        return Dataset(pos, amp, split)

    def _config(self, **extra):
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            restarts=self.restarts,
            seed=self.random_state,
            loss=self.loss,
            n_jobs=self.n_jobs,
            **extra,
        )

    def _fit(self, factory, X, y, X_val, y_val, **extra):
        ds = self._dataset(X, y, X_val, y_val)
        self.model_, self.report_ = multi_restart_train(factory, ds, self._config(**extra))
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        return self.model_.predict(X)


class PlaneWaveRBNN(_RBNNBase):
    """Sum of ``n_rays`` plane waves fitted to amplitude data.

    Parameters
    ----------
    n_rays : int
    frequency, sound_speed : float
        Fix the wavenumber.
    alpha : float
        L1 weight on the amplitudes.
    amplitude_scale : float
        Initial amplitudes are uniform in ``[0, amplitude_scale * max(y) / n_rays]``.
    """

    def __init__(self, n_rays=60, frequency=1000.0, sound_speed=1500.0, alpha=0.0, amplitude_scale=3.0,
                 learning_rate=1e-2, batch_size=32, max_epochs=5000, patience=500, restarts=1, loss="squared",
                 validation_fraction=0.3, random_state=0, n_jobs=1):
        self.n_rays = n_rays
        self.frequency = frequency
        self.sound_speed = sound_speed
        self.alpha = alpha
        self.amplitude_scale = amplitude_scale
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.restarts = restarts
        self.loss = loss
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y, X_val=None, y_val=None):
        k = _wavenumber(self.frequency, self.sound_speed)
        scale = self.amplitude_scale * float(np.max(y))
        n = int(self.n_rays)

        def factory(seed):
            return PlaneWaveModel.random(n, k, amplitude_scale=scale, rng=seed)

        return self._fit(factory, X, y, X_val, y_val, alpha=self.alpha)


class ImageSourceRBNN(_RBNNBase):
    """Free image sources around ``reference`` (defaults to the data centroid)."""

    def __init__(self, n_rays=60, frequency=1000.0, sound_speed=1500.0, reference=None, distance_range=(1.0, 100.0),
                 absorption=0.0, alpha=0.0, amplitude_scale=3.0, learning_rate=1e-2, batch_size=32, max_epochs=5000,
                 patience=500, restarts=1, loss="squared", validation_fraction=0.3, random_state=0, n_jobs=1):
        self.n_rays = n_rays
        self.frequency = frequency
        self.sound_speed = sound_speed
        self.reference = reference
        self.distance_range = distance_range
        self.absorption = absorption
        self.alpha = alpha
        self.amplitude_scale = amplitude_scale
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.restarts = restarts
        self.loss = loss
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y, X_val=None, y_val=None):
        k = _wavenumber(self.frequency, self.sound_speed)
        ref = np.mean(np.asarray(X, dtype=float), axis=0) if self.reference is None else self.reference
        lo, hi = self.distance_range
        scale = self.amplitude_scale * float(np.max(y)) * lo
        n = int(self.n_rays)

        def factory(seed):
            return ImageSourceModel.random(n, k, ref, (lo, hi), scale, self.absorption, rng=seed)

        return self._fit(factory, X, y, X_val, y_val, alpha=self.alpha)


class GeometryAidedRBNN(_RBNNBase):
    """Nominal eigenrays of an approximate environment with a learned reflection layer.

    Parameters
    ----------
    environment : FreeField, Waveguide or Box
        Approximate geometry used for ray tracing.
    source, reference : array_like
        Source position and the reference point inside the area of interest.
    reflection : {"rcnn", "rayleigh"} or reflection model
        Layer shared by all non-pressure-release faces. Strings select a
        random RCNN or ``Rayleigh(*rayleigh_init)``.
    """

    def __init__(self, environment=None, source=None, reference=None, frequency=1000.0, reflection="rcnn",
                 max_order=None, hidden_size=16, rayleigh_init=(1.2, 1.0, 0.01), zeta0=1.0, beta=1.0, eta=100.0,
                 learning_rate=1e-2, batch_size=32, max_epochs=5000, patience=500, restarts=1, loss="squared",
                 validation_fraction=0.3, random_state=0, n_jobs=1):
        self.environment = environment
        self.source = source
        self.reference = reference
        self.frequency = frequency
        self.reflection = reflection
        self.max_order = max_order
        self.hidden_size = hidden_size
        self.rayleigh_init = rayleigh_init
        self.zeta0 = zeta0
        self.beta = beta
        self.eta = eta
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.restarts = restarts
        self.loss = loss
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _reflection(self, seed):
        if self.reflection == "rcnn":
            return LearnedRcnn(RcnnWeights.random(self.hidden_size, seed))
        if self.reflection == "rayleigh":
            return Rayleigh(*self.rayleigh_init)
        return self.reflection

    def fit(self, X, y, X_val=None, y_val=None):
        if self.environment is None or self.source is None:
            raise InvalidArgumentError("environment and source are required")
        ref = np.mean(np.asarray(X, dtype=float), axis=0) if self.reference is None else self.reference

        def factory(seed):
            return GeometryAidedModel.from_scene(self.environment, self.source, ref, self.frequency,
                                                 self._reflection(seed), self.max_order)

        return self._fit(factory, X, y, X_val, y_val, zeta0=self.zeta0, beta=self.beta, eta=self.eta)


class IDWRegressor(RegressorMixin, BaseEstimator):
    """Inverse-distance-weighted interpolation of training amplitudes."""

    def __init__(self, power=2.0):
        self.power = power

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 3:
            raise InvalidArgumentError("positions must have three columns")
        self.X_, self.y_ = X, y
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        check_is_fitted(self, "X_")
        return idw_baseline(self.X_, self.y_, check_array(X), self.power)
