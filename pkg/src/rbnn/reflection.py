"""Boundary reflection layers: Rayleigh half-space and the RCNN.

Both layers are evaluated on ``mu = cos(gamma)`` internally because the model
computes incidence from direction cosines; derivatives with respect to ``mu``
stay finite at normal incidence for the Rayleigh formula.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

from .core import (
    FixedCoeff,
    InvalidArgumentError,
    LearnedRcnn,
    PressureRelease,
    Rayleigh,
    RcnnWeights,
)

HALF_PI = 0.5 * math.pi
_ANGLE_TOL = 1e-12


def _check_gamma(gamma):
    g = np.asarray(gamma, dtype=float)
    if np.any(~np.isfinite(g)) or np.any(g < -_ANGLE_TOL) or np.any(g > HALF_PI + _ANGLE_TOL):
        raise InvalidArgumentError("incidence angle must lie in [0, pi/2]")
    return np.clip(g, 0.0, HALF_PI)


def _rayleigh_sqrt(cos2, c_r, delta):
    # Principal branch; imag part of the argument is +0.0 when delta == 0 so the
    # evanescent branch comes out as +i*sqrt(.). Written as cos^2 + (1/c^2 - 1)
    # to avoid cancellation near grazing incidence.
    re = cos2 + ((1.0 - delta * delta) / (c_r * c_r) - 1.0)
    im = np.full_like(re, 2.0 * delta / (c_r * c_r))
    return np.sqrt(re + 1j * im)


def rayleigh_coeff(gamma, rho_r, c_r, delta=0.0):
    """Complex Rayleigh reflection coefficient at incidence ``gamma`` (from normal).

    Parameters
    ----------
    gamma : float or array
        Incidence angle(s) in ``[0, pi/2]``.
    rho_r, c_r : float
        Seabed-to-water density and sound-speed ratios.
    delta : float
        Dimensionless seabed loss; the complex speed ratio uses ``1 + i*delta``.
    """
    if not (rho_r > 0 and c_r > 0 and delta >= 0):
        raise InvalidArgumentError("Rayleigh model requires rho_r > 0, c_r > 0, delta >= 0")
    g = _check_gamma(gamma)
    cos_g = np.cos(g)
    s = _rayleigh_sqrt(cos_g * cos_g, c_r, delta)
    out = (rho_r * cos_g - s) / (rho_r * cos_g + s)
    return complex(out) if out.ndim == 0 else out


def rcnn_forward(weights, gamma):
    """Evaluate the RCNN: returns ``(eps, kappa)`` with ``eps >= 0``, ``|kappa| < pi``."""
    g = _check_gamma(gamma)
    eps, kappa, _ = _rcnn_core(weights.w1, weights.b1, weights.w2, weights.b2, g)
    if eps.ndim == 0:
        return float(eps), float(kappa)
    return eps, kappa


def _rcnn_core(w1, b1, w2, b2, gamma):
    x = np.asarray(gamma, dtype=float)[..., None] / HALF_PI
    h = np.tanh(x * w1 + b1)
    o = h @ np.asarray(w2).T + b2
    eps = np.logaddexp(0.0, o[..., 0])
    t = np.tanh(o[..., 1])
    kappa = math.pi * t
    return eps, kappa, (x, h, o, t)


class ReflectionLayer:
    """Reflection coefficient as a differentiable function of ``cos(gamma)``.

    ``evaluate`` returns ``(R, dR/dmu, cache)``; ``vjp`` maps a complex
    adjoint ``W`` (same shape as ``mu``) to ``sum(Re(W * dR/dparam))``.
    """

    param_names: tuple = ()

    def evaluate(self, mu, params):
        raise NotImplementedError

    def vjp(self, cache, weight, params):
        return {}


class ConstantLayer(ReflectionLayer):
    def __init__(self, value):
        self.value = complex(value)

    def evaluate(self, mu, params):
        r = np.full(np.shape(mu), self.value)
        return r, np.zeros_like(r), None


class RayleighLayer(ReflectionLayer):
    param_names = ("rho_r", "c_r", "delta")

    def evaluate(self, mu, params):
        rho = float(params["rho_r"][0])
        c = float(params["c_r"][0])
        delta = float(params["delta"][0])
        mu = np.asarray(mu, dtype=float)
        s = _rayleigh_sqrt(mu * mu, c, delta)
        den = rho * mu + s
        r = (rho * mu - s) / den
        with np.errstate(divide="ignore", invalid="ignore"):
            d_s = -2.0 * rho * mu / den**2
            d_mu = 2.0 * rho * s / den**2 + d_s * mu / s
        return r, d_mu, (mu, s, den, d_s, rho, c, delta)

    def vjp(self, cache, weight, params):
        mu, s, den, d_s, rho, c, delta = cache
        dbar = 1.0 + 1j * delta
        with np.errstate(divide="ignore", invalid="ignore"):
            d_rho = 2.0 * mu * s / den**2
            d_c = d_s * (-(dbar**2) / (c**3 * s))
            d_delta = d_s * (1j * dbar / (c**2 * s))
        w = np.asarray(weight)
        return {
            "rho_r": np.array([np.sum((w * d_rho).real)]),
            "c_r": np.array([np.sum((w * d_c).real)]),
            "delta": np.array([np.sum((w * d_delta).real)]),
        }


class RcnnLayer(ReflectionLayer):
    param_names = ("rcnn_w1", "rcnn_b1", "rcnn_w2", "rcnn_b2")

    def evaluate(self, mu, params):
        mu = np.asarray(mu, dtype=float)
        gamma = np.arccos(np.clip(mu, -1.0, 1.0))
        w1, b1, w2, b2 = (params[n] for n in self.param_names)
        eps, kappa, (x, h, o, t) = _rcnn_core(w1, b1, w2, b2, gamma)
        phase = np.exp(1j * kappa)
        r = eps * phase
        # d/dgamma through the network, then chain to mu
        do_dx = ((1.0 - h * h) * w1) @ np.asarray(w2).T
        d_eps = expit(o[..., 0]) * do_dx[..., 0] / HALF_PI
        d_kappa = math.pi * (1.0 - t * t) * do_dx[..., 1] / HALF_PI
        d_gamma = (d_eps + 1j * eps * d_kappa) * phase
        sin_g = np.sqrt(np.maximum(1.0 - mu * mu, 1e-30))
        d_mu = -d_gamma / sin_g
        return r, d_mu, (x, h, o, t, eps, phase)

    def vjp(self, cache, weight, params):
        x, h, o, t, eps, phase = cache
        w2 = np.asarray(params["rcnn_w2"])
        wp = np.asarray(weight) * phase
        g_eps = wp.real
        g_kappa = -(wp * eps).imag
        g_o = np.stack([g_eps * expit(o[..., 0]), g_kappa * math.pi * (1.0 - t * t)], axis=-1)
        g_o = g_o.reshape(-1, 2)
        hh = h.reshape(-1, h.shape[-1])
        xx = x.reshape(-1, 1)
        g_h = g_o @ w2
        g_pre = g_h * (1.0 - hh * hh)
        return {
            "rcnn_w1": np.sum(g_pre * xx, axis=0),
            "rcnn_b1": np.sum(g_pre, axis=0),
            "rcnn_w2": g_o.T @ hh,
            "rcnn_b2": np.sum(g_o, axis=0),
        }


def layer_params(reflection):
    """Trainable parameter dict for a reflection model (empty when fixed)."""
    if isinstance(reflection, Rayleigh):
        return {
            "rho_r": np.array([float(reflection.rho_r)]),
            "c_r": np.array([float(reflection.c_r)]),
            "delta": np.array([float(reflection.delta)]),
        }
    if isinstance(reflection, LearnedRcnn):
        w = reflection.weights
        return {
            "rcnn_w1": np.array(w.w1, dtype=float),
            "rcnn_b1": np.array(w.b1, dtype=float),
            "rcnn_w2": np.array(w.w2, dtype=float),
            "rcnn_b2": np.array(w.b2, dtype=float),
        }
    return {}


def make_layer(reflection):
    if isinstance(reflection, Rayleigh):
        return RayleighLayer()
    if isinstance(reflection, LearnedRcnn):
        return RcnnLayer()
    if isinstance(reflection, PressureRelease):
        return ConstantLayer(-1.0)
    if isinstance(reflection, FixedCoeff):
        return ConstantLayer(reflection.gamma_coeff)
    raise InvalidArgumentError(f"unsupported reflection model {reflection!r}")


def reflection_with_params(reflection, params):
    """Rebuild a reflection model from (possibly updated) parameter values."""
    if isinstance(reflection, Rayleigh):
        return Rayleigh(float(params["rho_r"][0]), float(params["c_r"][0]), float(params["delta"][0]))
    if isinstance(reflection, LearnedRcnn):
        return LearnedRcnn(RcnnWeights(*(np.array(params[n]) for n in RcnnLayer.param_names)))
    return reflection


def magnitude_phase(reflection, gamma):
    """``(eps, kappa)`` of any reflection model at incidence ``gamma``."""
    g = _check_gamma(gamma)
    if isinstance(reflection, LearnedRcnn):
        return rcnn_forward(reflection.weights, g)
    r = np.asarray(reflection.coefficient(g))
    eps, kappa = np.abs(r), np.angle(r)
    if eps.ndim == 0:
        return float(eps), float(kappa)
    return eps, kappa
