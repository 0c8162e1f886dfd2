"""Error metrics for predicted amplitude fields and the IDW baseline."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .core import DB_FLOOR, InvalidArgumentError, RBNNError


class UndefinedCorrelationError(RBNNError, ValueError):
    """Raised when a rank correlation is requested for a constant vector."""


def _pair(predicted, truth, min_len=1):
    p = np.asarray(predicted, dtype=float).reshape(-1)
    t = np.asarray(truth, dtype=float).reshape(-1)
    if p.shape != t.shape:
        raise InvalidArgumentError(f"length mismatch: {p.size} predictions vs {t.size} truth values")
    if p.size < min_len:
        raise InvalidArgumentError(f"need at least {min_len} values")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise InvalidArgumentError("values must be finite")
    return p, t


def _db(a):
    return 20.0 * np.log10(np.maximum(a, DB_FLOOR))


def rms_error_db(predicted, truth):
    """Root-mean-square difference in dB; amplitudes are clamped at 1e-30 first."""
    p, t = _pair(predicted, truth)
    if np.any(t < 0) or np.any(p < 0):
        raise InvalidArgumentError("amplitudes must be non-negative")
    d = _db(p) - _db(t)
    return float(np.sqrt(np.mean(d * d)))


def mate(predicted, truth):
    """Mean absolute error in linear units."""
    p, t = _pair(predicted, truth)
    return float(np.mean(np.abs(p - t)))


def mate_db(predicted, truth):
    p, t = _pair(predicted, truth)
    if np.any(t < 0) or np.any(p < 0):
        raise InvalidArgumentError("amplitudes must be non-negative")
    return float(np.mean(np.abs(_db(p) - _db(t))))


def spearman(predicted, truth):
    """Spearman rank correlation with average ranks for ties.

    Raises
    ------
    UndefinedCorrelationError
        If either input is constant.
    """
    p, t = _pair(predicted, truth, min_len=2)
    rp, rt = rankdata(p), rankdata(t)
    rp -= rp.mean()
    rt -= rt.mean()
    den = np.sqrt(np.sum(rp * rp) * np.sum(rt * rt))
    if den == 0:
        raise UndefinedCorrelationError("rank correlation is undefined for a constant vector")
    return float(np.clip(np.sum(rp * rt) / den, -1.0, 1.0))


@dataclass
class MetricsReport:
    rms_error_db: float
    mate_linear: float
    mate_db: float
    spearman_rho: float | None
    counts: int

    def to_dict(self):
        return asdict(self)


def evaluate(predicted, truth):
    """All metrics at once; the rank correlation is ``None`` when undefined."""
    p, t = _pair(predicted, truth)
    try:
        rho = spearman(p, t)
    except (UndefinedCorrelationError, InvalidArgumentError):
        rho = None
    return MetricsReport(rms_error_db(p, t), mate(p, t), mate_db(p, t), rho, int(p.size))


def idw_baseline(X_train, y_train, X_query, power=2.0):
    """Inverse-distance-weighted mean of training amplitudes.

    A query that coincides with training points returns their mean amplitude.
    """
    X = np.asarray(X_train, dtype=float).reshape(-1, 3)
    y = np.asarray(y_train, dtype=float).reshape(-1)
    Q = np.asarray(X_query, dtype=float).reshape(-1, 3)
    if len(X) == 0 or len(X) != len(y):
        raise InvalidArgumentError("training set must be non-empty with one amplitude per position")
    if not power > 0:
        raise InvalidArgumentError("power must be positive")
    out = np.empty(len(Q))
    for start in range(0, len(Q), 2048):
        q = Q[start:start + 2048]
        d = np.sqrt(((q[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1))
        exact = d == 0
        with np.errstate(divide="ignore"):
            w = d ** (-power)
        hit = exact.any(axis=1)
        w[hit] = exact[hit].astype(float)
        out[start:start + len(q)] = (w @ y) / w.sum(axis=1)
    return out
