"""Losses, exact gradients, Adam training with restarts, and position refinement."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import DivergenceError, InvalidArgumentError, RBNNError
from .model import GeometryAidedModel, ImageSourceModel, PlaneWaveModel, _positions
from .reflection import HALF_PI, magnitude_phase

LOSS_KINDS = ("squared", "absolute")


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loss settings.

    ``learning_rates`` overrides ``learning_rate`` per parameter name.
    ``trainable`` selects the parameters to update; ``None`` uses the model's
    defaults (plus the reflection-layer parameters for geometry-aided models).
    ``zeta`` is a per-ray vector; when ``None`` it defaults to
    ``zeta0 / (1 + n_s + n_b)``.
    """

    learning_rate: float = 1e-2
    learning_rates: dict = field(default_factory=dict)
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 5000
    patience: int = 500
    restarts: int = 1
    seed: int = 0
    loss: str = "squared"
    alpha: float = 0.0
    zeta: tuple | None = None
    zeta0: float = 1.0
    beta: float = 1.0
    eta: float = 100.0
    quadrature: int = 64
    trainable: tuple | None = None
    n_jobs: int = 1
    verbose: bool = False

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise InvalidArgumentError(f"loss must be one of {LOSS_KINDS}")
        weights = [self.alpha, self.zeta0, self.beta, self.eta, self.learning_rate, *self.learning_rates.values()]
        if self.zeta is not None:
            weights.extend(self.zeta)
        if any(not (w >= 0) for w in weights):
            raise InvalidArgumentError("learning rates and penalty weights must be non-negative")
        if self.batch_size < 1 or self.restarts < 1 or self.max_epochs < 0 or self.patience < 1:
            raise InvalidArgumentError("batch_size, restarts and patience must be >= 1; max_epochs >= 0")
        if self.quadrature < 2:
            raise InvalidArgumentError("quadrature needs at least 2 points")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1 and self.adam_eps > 0):
            raise InvalidArgumentError("Adam betas must lie in [0, 1) and epsilon must be positive")

    def penalty_free(self):
        return replace(self, alpha=0.0, zeta0=0.0, zeta=None, beta=0.0, eta=0.0)

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["zeta"] = None if self.zeta is None else list(self.zeta)
        d["trainable"] = None if self.trainable is None else list(self.trainable)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidArgumentError(f"unknown training options {sorted(unknown)}")
        for key in ("betas", "zeta", "trainable"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class TrainReport:
    train_loss: list
    validation_loss: list
    best_validation_loss: float
    best_epoch: int
    restart_index: int
    epochs_run: int
    model: dict
    restart_losses: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


# -- losses -------------------------------------------------------------------


def _data_adjoint(kind, y):
    """Closure mapping the complex field to ``(data loss, dL/dP)``."""
    y = np.asarray(y, dtype=float)
    n = len(y)

    def adjoint(P):
        a = np.abs(P)
        r = a - y
        if kind == "squared":
            value = float(np.mean(r * r))
            da = 2.0 * r / n
        else:
            value = float(np.mean(np.abs(r)))
            da = np.sign(r) / n
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(a > 0, P / np.where(a > 0, a, 1.0), 0.0)
        return value, da * unit

    return adjoint


def data_loss(model, X, y, kind="squared"):
    """Mean squared (or absolute) amplitude error."""
    X = _positions(X)
    y = np.asarray(y, dtype=float)
    if len(y) != len(X) or len(y) == 0:
        raise InvalidArgumentError("batch must be non-empty with one amplitude per position")
    if kind not in LOSS_KINDS:
        raise InvalidArgumentError(f"loss must be one of {LOSS_KINDS}")
    return _data_adjoint(kind, y)(model.field(X))[0]


def loss_plane(model, X, y, alpha, kind="squared"):
    """Data term plus ``alpha * ||A||_1``."""
    return data_loss(model, X, y, kind) + alpha * float(np.sum(np.abs(model.params["amplitude"])))


def _quadrature(q):
    gamma = np.linspace(0.0, HALF_PI, q)
    w = np.full(q, gamma[1] - gamma[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return gamma, w


def energy_integral(reflection, quadrature=64):
    """Trapezoidal estimate of the integral of ``eps(gamma)**2`` over ``[0, pi/2]``."""
    if quadrature < 2:
        raise InvalidArgumentError("quadrature needs at least 2 points")
    gamma, w = _quadrature(quadrature)
    eps = np.broadcast_to(magnitude_phase(reflection, gamma)[0], gamma.shape)
    return float(np.sum(w * eps * eps))


def energy_penalty(reflection, eta, quadrature=64):
    """``eta * max(0, integral(eps**2) - 1)``."""
    if eta < 0:
        raise InvalidArgumentError("eta must be non-negative")
    if eta == 0:
        return 0.0
    return eta * max(0.0, energy_integral(reflection, quadrature) - 1.0)


def default_zeta(model, zeta0=1.0):
    """Per-ray angular penalty weights, smaller for higher reflection orders."""
    orders = np.array([r.n_s + r.n_b for r in model.nominal], dtype=float)
    return zeta0 / (1.0 + orders)


def _zeta(model, zeta, zeta0):
    z = default_zeta(model, zeta0) if zeta is None else np.asarray(zeta, dtype=float).reshape(-1)
    if z.shape != (model.n_rays,):
        raise InvalidArgumentError(f"zeta must have one entry per ray ({model.n_rays}), got {z.size}")
    return z


def geometry_penalty(model, zeta, beta, eta, quadrature=64, zeta0=1.0):
    """Angular, distance and energy penalties of a geometry-aided model."""
    return _geometry_penalty(model, _zeta(model, zeta, zeta0), beta, eta, quadrature, grads=False)[0]


def _geometry_penalty(model, zeta, beta, eta, quadrature, grads=True):
    p = model.params
    q = p["e_theta"] ** 2 + p["e_psi"] ** 2
    zq = zeta * q
    norm = float(np.sqrt(np.sum(zq * zq)))
    value = norm + beta * float(np.sum(p["e_d"] ** 2))
    g = {}
    if grads:
        coef = zeta * zq / norm if norm > 0 else np.zeros_like(q)
        g["e_theta"] = coef * 2.0 * p["e_theta"]
        g["e_psi"] = coef * 2.0 * p["e_psi"]
        g["e_d"] = 2.0 * beta * p["e_d"]
    if eta > 0 and model.reflection_param_names:
        gamma, w = _quadrature(quadrature)
        layer = model._layer
        with np.errstate(divide="ignore", invalid="ignore"):
            r, _, cache = layer.evaluate(np.cos(gamma), p)
        excess = float(np.sum(w * np.abs(r) ** 2)) - 1.0
        if excess > 0:
            value += eta * excess
            if grads:
                with np.errstate(divide="ignore", invalid="ignore"):
                    g.update(layer.vjp(cache, eta * w * 2.0 * np.conj(r), p))
    return value, g


def loss_geometry(model, X, y, zeta=None, beta=1.0, eta=100.0, quadrature=64, kind="squared", zeta0=1.0):
    """Data term plus the geometry-aided penalties."""
    z = _zeta(model, zeta, zeta0)
    return data_loss(model, X, y, kind) + _geometry_penalty(model, z, beta, eta, quadrature, grads=False)[0]


def objective(model, X, y, config, penalties=True):
    """Configured loss and its gradients: ``(value, param_grads, position_grads)``."""
    X = _positions(X)
    y = np.asarray(y, dtype=float)
    if len(y) != len(X) or len(y) == 0:
        raise InvalidArgumentError("batch must be non-empty with one amplitude per position")
    value, grads, gx = model.value_and_grad(X, _data_adjoint(config.loss, y))
    if not penalties:
        return value, grads, gx
    if isinstance(model, (PlaneWaveModel, ImageSourceModel)) and config.alpha > 0:
        a = model.params["amplitude"]
        value += config.alpha * float(np.sum(np.abs(a)))
        grads["amplitude"] = grads["amplitude"] + config.alpha * np.sign(a)
    if isinstance(model, GeometryAidedModel):
        z = _zeta(model, config.zeta, config.zeta0)
        pv, pg = _geometry_penalty(model, z, config.beta, config.eta, config.quadrature)
        value += pv
        for k, v in pg.items():
            grads[k] = grads[k] + v
    return value, grads, gx


def trainable_names(model, config):
    if config.trainable is not None:
        missing = set(config.trainable) - set(model.params)
        if missing:
            raise InvalidArgumentError(f"unknown trainable parameters {sorted(missing)}")
        return tuple(config.trainable)
    names = tuple(model.default_trainable)
    if isinstance(model, GeometryAidedModel):
        names += model.reflection_param_names
    return names


def gradients(model, X, y, config):
    """Exact gradients of the configured loss for the trainable parameters."""
    _, grads, _ = objective(model, X, y, config)
    return {n: grads[n] for n in trainable_names(model, config)}


# -- optimizer ----------------------------------------------------------------


class Adam:
    def __init__(self, params, lr, lrs=None, betas=(0.9, 0.999), eps=1e-8):
        self.lr = {n: float((lrs or {}).get(n, lr)) for n in params}
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = {n: np.zeros_like(v) for n, v in params.items()}
        self.v = {n: np.zeros_like(v) for n, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        out = {}
        for n, p in params.items():
            g = grads[n]
            self.m[n] = self.b1 * self.m[n] + (1.0 - self.b1) * g
            self.v[n] = self.b2 * self.v[n] + (1.0 - self.b2) * g * g
            out[n] = p - self.lr[n] * (self.m[n] / c1) / (np.sqrt(self.v[n] / c2) + self.eps)
        return out


_MIN_POSITIVE = 1e-6


def _project(model, params):
    """Keep physically constrained parameters feasible after an update."""
    out = dict(params)
    for n in ("rho_r", "c_r", "distance", "wavenumber"):
        if n in out:
            out[n] = np.maximum(out[n], _MIN_POSITIVE)
    if "delta" in out:
        out["delta"] = np.maximum(out["delta"], 0.0)
    if "e_d" in out and isinstance(model, GeometryAidedModel):
        out["e_d"] = np.maximum(out["e_d"], _MIN_POSITIVE - model.d0)
    return out


# -- training -----------------------------------------------------------------


def _split_xy(dataset):
    X, y = dataset.subset("train")
    if len(y) == 0:
        raise InvalidArgumentError("training split is empty")
    Xv, yv = dataset.subset("validation")
    if len(yv) == 0:
        Xv, yv = X, y
    return X, y, Xv, yv


def train(model, dataset, config=None, restart_index=0):
    """Adam over shuffled mini-batches; returns the best-validation snapshot.

    Validation uses the pure data term. Without validation records the
    training records stand in.

    Raises
    ------
    DivergenceError
        If the loss or any gradient becomes non-finite.
    """
    config = config or TrainConfig()
    X, y, Xv, yv = _split_xy(dataset)
    names = trainable_names(model, config)
    rng = np.random.default_rng(config.seed)
    opt = Adam({n: model.params[n] for n in names}, config.learning_rate, config.learning_rates,
               config.betas, config.adam_eps)
    best_val = data_loss(model, Xv, yv, config.loss)
    if not math.isfinite(best_val):
        raise DivergenceError("initial validation loss is not finite")
    best_model, best_epoch = model, 0
    train_hist, val_hist = [], []
    stale = 0
    n = len(y)
    bs = min(config.batch_size, n)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            value, grads, _ = objective(model, X[idx], y[idx], config)
            if not math.isfinite(value) or not all(np.all(np.isfinite(grads[k])) for k in names):
                raise DivergenceError(f"non-finite loss or gradient at epoch {epoch}")
            total += value * len(idx)
            new = opt.step({k: model.params[k] for k in names}, grads)
            model = model.with_params(_project(model, new))
        val = data_loss(model, Xv, yv, config.loss)
        if not math.isfinite(val):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        train_hist.append(total / n)
        val_hist.append(val)
        if config.verbose:
            print(f"restart {restart_index} epoch {epoch} train {total / n:.6g} validation {val:.6g}", flush=True)
        if val < best_val:
            best_val, best_model, best_epoch, stale = val, model, epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    report = TrainReport(train_hist, val_hist, float(best_val), best_epoch, restart_index, len(train_hist),
                         best_model.to_dict())
    return best_model, report


def _run_restart(factory, dataset, config, i):
    seed = config.seed + i
    try:
        return train(factory(seed), dataset, replace(config, seed=seed), restart_index=i)
    except DivergenceError as exc:
        return exc


def multi_restart_train(factory, dataset, config=None):
    """Train ``config.restarts`` models built by ``factory(seed)`` and keep the best.

    Restart ``i`` uses seed ``config.seed + i`` for both initialization and
    batching, so the selected run does not depend on ``n_jobs``. Ties go to the
    lowest restart index.
    """
    config = config or TrainConfig()
    if config.n_jobs != 1 and config.restarts > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=config.n_jobs)(
            delayed(_run_restart)(factory, dataset, config, i) for i in range(config.restarts))
    else:
        results = [_run_restart(factory, dataset, config, i) for i in range(config.restarts)]
    losses = [None if isinstance(r, Exception) else r[1].best_validation_loss for r in results]
    ok = [i for i, v in enumerate(losses) if v is not None]
    if not ok:
        raise DivergenceError("all restarts diverged: " + "; ".join(str(r) for r in results))
    best = min(ok, key=lambda i: (losses[i], i))
    model, report = results[best]
    report.restart_losses = losses
    return model, report


def select_best(losses):
    """Index of the smallest loss, ignoring ``None`` entries; lowest index on ties."""
    ok = [(v, i) for i, v in enumerate(losses) if v is not None]
    if not ok:
        raise RBNNError("no successful runs")
    return min(ok)[1]


# -- two-stage refinement ---------------------------------------------------


def refine_positions(model, dataset, weight, config=None, split="train"):
    """Estimate per-record position corrections with the model frozen.

    Minimizes ``mean(data loss at X + offset) + weight * sum(||offset||**2)``
    with full-batch Adam. Returns ``(offsets, history)`` where ``offsets`` has
    one row per record of ``split``.
    """
    config = config or TrainConfig()
    if not weight >= 0:
        raise InvalidArgumentError("position penalty weight must be non-negative")
    X, y = dataset.subset(split)
    if len(y) == 0:
        raise InvalidArgumentError(f"split {split!r} is empty")
    offsets = np.zeros_like(X)
    opt = Adam({"offset": offsets}, config.learning_rates.get("offset", config.learning_rate),
               betas=config.betas, eps=config.adam_eps)
    adjoint = _data_adjoint(config.loss, y)
    history = []
    best, best_value, stale = offsets, math.inf, 0
    for epoch in range(config.max_epochs):
        value, _, gx = model.value_and_grad(X + offsets, adjoint)
        value += weight * float(np.sum(offsets * offsets))
        if not math.isfinite(value) or not np.all(np.isfinite(gx)):
            raise DivergenceError(f"non-finite refinement objective at step {epoch}")
        history.append(value)
        if value < best_value:
            best, best_value, stale = offsets, value, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
        offsets = opt.step({"offset": offsets}, {"offset": gx + 2.0 * weight * offsets})["offset"]
    return best, history
