"""Ray-basis models: plane-wave, image-source and geometry-aided.

Every model is a finite sum of exact Helmholtz solutions (plane waves or
point-source spherical waves). Models are immutable; trainable values live in
``model.params`` (name -> float array) and :meth:`with_params` builds a new
model from updated values.

``backward(X, adj)`` implements reverse-mode differentiation for a real loss
``L`` that depends on the complex field ``P``: ``adj`` holds
``dL/dRe(P) + 1j * dL/dIm(P)`` per receiver, and the return value is
``(param_grads, position_grads)``.
"""

from __future__ import annotations

import math

import numpy as np

from .core import (
    InvalidArgumentError,
    LearnedRcnn,
    SingularityError,
    absorption_rate,
    as_vec3,
    direction_from_angles,
    reflection_from_dict,
)
from .raytrace import NominalRay
from .reflection import layer_params, make_layer, reflection_with_params

_SINGULAR_DISTANCE = 1e-12


def _positions(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, 3)
    if X.ndim != 2 or X.shape[1] != 3:
        raise InvalidArgumentError(f"positions must have shape (n, 3), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("positions must be finite")
    return X


def _dir_derivs(theta, psi):
    ct, st, cp, sp = np.cos(theta), np.sin(theta), np.cos(psi), np.sin(psi)
    u = np.stack([ct * sp, st * sp, cp], axis=-1)
    du_t = np.stack([-st * sp, ct * sp, np.zeros_like(theta)], axis=-1)
    du_p = np.stack([ct * cp, st * cp, -sp], axis=-1)
    return u, du_t, du_p


def _arr(v, n=None, name="parameter"):
    a = np.array(v, dtype=float).reshape(-1)
    if n is not None and a.shape != (n,):
        raise InvalidArgumentError(f"{name} must have {n} entries")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} must be finite")
    return a


class RayModel:
    kind = "abstract"
    # parameters updated by default during training
    default_trainable = ()

    params: dict

    @property
    def n_rays(self):
        raise NotImplementedError

    @property
    def wavenumber(self):
        return float(self.params["wavenumber"][0])

    @property
    def n_parameters(self):
        return int(sum(v.size for v in self.params.values()))

    def with_params(self, params):
        raise NotImplementedError

    def backward(self, X, adj):
        X = _positions(X)
        return self._backward(X, self._forward(X), adj)

    def value_and_grad(self, X, adjoint):
        """Evaluate the field once and backpropagate ``adjoint(P) -> (value, adj)``.

        Returns ``(value, param_grads, position_grads)``.
        """
        X = _positions(X)
        cache = self._forward(X)
        value, adj = adjoint(cache["P"])
        grads, gx = self._backward(X, cache, adj)
        return value, grads, gx

    def field(self, X):
        return self._forward(_positions(X))["P"]

    def _forward(self, X):
        raise NotImplementedError

    def _backward(self, X, cache, adj):
        raise NotImplementedError

    def predict(self, X):
        """Predicted pressure amplitude ``|P|`` at each row of ``X``."""
        return np.abs(self.field(X))

    def image_positions(self):
        return np.empty((0, 3))

    def to_dict(self):
        raise NotImplementedError


def _spherical_backward(g_d, v, d_len, w_adj=None):
    """Chain dL/dD (and optionally dL/dw, w = v/D) back to dL/dv."""
    w = v / d_len[..., None]
    g_v = g_d[..., None] * w
    if w_adj is not None:
        radial = np.sum(w_adj * w, axis=-1, keepdims=True)
        g_v = g_v + (w_adj - radial * w) / d_len[..., None]
    return g_v


def _distances(X, s):
    v = X[:, None, :] - s[None, :, :]
    d = np.sqrt(np.einsum("nmk,nmk->nm", v, v))
    if np.any(d < _SINGULAR_DISTANCE):
        raise SingularityError("receiver coincides with an image source")
    return v, d


# -- plane waves --------------------------------------------------------------


class PlaneWaveModel(RayModel):
    """Sum of ``n_rays`` plane waves with trainable amplitude, phase and direction."""

    kind = "plane"
    default_trainable = ("amplitude", "phase", "theta", "psi")

    def __init__(self, amplitude, phase, theta, psi, wavenumber):
        a = _arr(amplitude, name="amplitude")
        n = a.size
        if n < 1:
            raise InvalidArgumentError("a plane-wave model needs at least one ray")
        if not wavenumber > 0:
            raise InvalidArgumentError("wavenumber must be positive")
        self.params = {
            "amplitude": a,
            "phase": _arr(phase, n, "phase"),
            "theta": _arr(theta, n, "theta"),
            "psi": _arr(psi, n, "psi"),
            "wavenumber": np.array([float(wavenumber)]),
        }

    @classmethod
    def random(cls, n_rays, wavenumber, amplitude_scale=1.0, rng=None):
        """Uniform random directions and phases; amplitudes in ``[0, scale/n_rays]``."""
        rng = np.random.default_rng(rng)
        return cls(
            rng.uniform(0.0, amplitude_scale / n_rays, n_rays),
            rng.uniform(0.0, 2 * math.pi, n_rays),
            rng.uniform(0.0, 2 * math.pi, n_rays),
            rng.uniform(0.0, math.pi, n_rays),
            wavenumber,
        )

    @property
    def n_rays(self):
        return self.params["amplitude"].size

    def with_params(self, params):
        p = {**self.params, **params}
        return PlaneWaveModel(p["amplitude"], p["phase"], p["theta"], p["psi"], float(p["wavenumber"][0]))

    def _forward(self, X):
        p = self.params
        u, du_t, du_p = _dir_derivs(p["theta"], p["psi"])
        proj = X @ u.T
        e = np.exp(1j * (p["phase"][None, :] + self.wavenumber * proj))
        return dict(P=e @ p["amplitude"].astype(complex), e=e, proj=proj, u=u, du_t=du_t, du_p=du_p)

    def _backward(self, X, cache, adj):
        p = self.params
        k = self.wavenumber
        e, proj, u, du_t, du_p = (cache[n] for n in ("e", "proj", "u", "du_t", "du_p"))
        ce = np.conj(np.asarray(adj, dtype=complex))[:, None] * e
        ac = ce * p["amplitude"][None, :]
        im = -ac.imag  # Re(i * ac)
        grads = {
            "amplitude": ce.real.sum(axis=0),
            "phase": im.sum(axis=0),
            "theta": k * np.sum(im * (X @ du_t.T), axis=0),
            "psi": k * np.sum(im * (X @ du_p.T), axis=0),
            "wavenumber": np.array([np.sum(im * proj)]),
        }
        return grads, k * (im @ u)

    def to_dict(self):
        return {"kind": self.kind, "params": {k: v.tolist() for k, v in self.params.items()}}


# -- image sources without geometry -----------------------------------------


class ImageSourceModel(RayModel):
    """Point sources placed at ``reference - d * u(theta, psi)`` with free amplitude and phase."""

    kind = "image_source"
    default_trainable = ("amplitude", "phase", "theta", "psi", "distance")

    def __init__(self, amplitude, phase, theta, psi, distance, wavenumber, reference, absorption=0.0):
        a = _arr(amplitude, name="amplitude")
        n = a.size
        if n < 1:
            raise InvalidArgumentError("an image-source model needs at least one ray")
        if not wavenumber > 0:
            raise InvalidArgumentError("wavenumber must be positive")
        if absorption < 0:
            raise InvalidArgumentError("absorption must be non-negative")
        self.params = {
            "amplitude": a,
            "phase": _arr(phase, n, "phase"),
            "theta": _arr(theta, n, "theta"),
            "psi": _arr(psi, n, "psi"),
            "distance": _arr(distance, n, "distance"),
            "wavenumber": np.array([float(wavenumber)]),
        }
        if np.any(self.params["distance"] <= 0):
            raise InvalidArgumentError("image distances must be positive")
        self.reference = as_vec3(reference, "reference")
        self.absorption = float(absorption)

    @classmethod
    def random(cls, n_rays, wavenumber, reference, distance_range=(1.0, 100.0), amplitude_scale=1.0,
               absorption=0.0, rng=None):
        rng = np.random.default_rng(rng)
        lo, hi = distance_range
        return cls(
            rng.uniform(0.0, amplitude_scale / n_rays, n_rays),
            rng.uniform(0.0, 2 * math.pi, n_rays),
            rng.uniform(0.0, 2 * math.pi, n_rays),
            rng.uniform(0.0, math.pi, n_rays),
            rng.uniform(lo, hi, n_rays),
            wavenumber,
            reference,
            absorption,
        )

    @classmethod
    def from_nominal(cls, rays, wavenumber, amplitude=None, phase=None, absorption=0.0):
        """Anchor the image sources at nominal ray positions (near-field use)."""
        rays = list(rays)
        n = len(rays)
        if amplitude is None:
            amplitude = np.ones(n)
        if phase is None:
            phase = np.zeros(n)
        return cls(
            amplitude,
            phase,
            [r.theta for r in rays],
            [r.psi for r in rays],
            [r.distance for r in rays],
            wavenumber,
            rays[0].reference,
            absorption,
        )

    @property
    def n_rays(self):
        return self.params["amplitude"].size

    def with_params(self, params):
        p = {**self.params, **params}
        return ImageSourceModel(p["amplitude"], p["phase"], p["theta"], p["psi"], p["distance"],
                                float(p["wavenumber"][0]), self.reference, self.absorption)

    def image_positions(self):
        p = self.params
        u = direction_from_angles(p["theta"], p["psi"])
        return self.reference - p["distance"][:, None] * u

    def _forward(self, X):
        p = self.params
        u, du_t, du_p = _dir_derivs(p["theta"], p["psi"])
        s = self.reference - p["distance"][:, None] * u
        v, d = _distances(X, s)
        g = absorption_rate(self.absorption)
        base = np.exp(-g * d + 1j * self.wavenumber * d) / d
        e = np.exp(1j * p["phase"])[None, :] * base
        return dict(P=e @ p["amplitude"].astype(complex), e=e, v=v, d=d, u=u, du_t=du_t, du_p=du_p)

    def _backward(self, X, cache, adj):
        p = self.params
        k = self.wavenumber
        g = absorption_rate(self.absorption)
        e, v, d, u, du_t, du_p = (cache[n] for n in ("e", "v", "d", "u", "du_t", "du_p"))
        ce = np.conj(np.asarray(adj, dtype=complex))[:, None] * e
        ac = ce * p["amplitude"][None, :]
        g_d = (ac * (-g - 1.0 / d + 1j * k)).real
        g_v = _spherical_backward(g_d, v, d)
        g_s = -g_v.sum(axis=0)
        dist = p["distance"]
        grads = {
            "amplitude": ce.real.sum(axis=0),
            "phase": -ac.imag.sum(axis=0),
            "theta": -dist * np.sum(g_s * du_t, axis=-1),
            "psi": -dist * np.sum(g_s * du_p, axis=-1),
            "distance": -np.sum(g_s * u, axis=-1),
            "wavenumber": np.array([np.sum(-ac.imag * d)]),
        }
        return grads, g_v.sum(axis=1)

    def to_dict(self):
        return {
            "kind": self.kind,
            "params": {k: v.tolist() for k, v in self.params.items()},
            "reference": self.reference.tolist(),
            "absorption": self.absorption,
        }


# -- geometry-aided ---------------------------------------------------------


class GeometryAidedModel(RayModel):
    """Nominal eigenrays with trainable direction/distance errors and a shared
    reflection layer for every non-pressure-release bounce.

    Pressure-release bounces contribute a phase of ``pi`` each. ``source_level``
    scales the whole field (1 for a unit source) and is not trained by default.
    """

    kind = "geometry"
    default_trainable = ("e_theta", "e_psi", "e_d")

    def __init__(self, nominal, wavenumber, reflection, e_theta=None, e_psi=None, e_d=None,
                 absorption=0.0, source_level=1.0):
        self.nominal = tuple(nominal)
        n = len(self.nominal)
        if n < 1:
            raise InvalidArgumentError("a geometry-aided model needs at least one nominal ray")
        if not wavenumber > 0:
            raise InvalidArgumentError("wavenumber must be positive")
        if absorption < 0:
            raise InvalidArgumentError("absorption must be non-negative")
        refs = {r.reference for r in self.nominal}
        if len(refs) != 1:
            raise InvalidArgumentError("nominal rays must share one reference point")
        self.reference = np.array(self.nominal[0].reference, dtype=float)
        self.absorption = float(absorption)
        self.reflection = reflection
        self._layer = make_layer(reflection)
        self.theta0 = np.array([r.theta for r in self.nominal])
        self.psi0 = np.array([r.psi for r in self.nominal])
        self.d0 = np.array([r.distance for r in self.nominal])
        self.n_s = np.array([r.n_s for r in self.nominal], dtype=int)
        self.lossy = np.array([r.lossy_counts for r in self.nominal], dtype=int).reshape(n, 3)
        zeros = np.zeros(n)
        self.params = {
            "e_theta": _arr(zeros if e_theta is None else e_theta, n, "e_theta"),
            "e_psi": _arr(zeros if e_psi is None else e_psi, n, "e_psi"),
            "e_d": _arr(zeros if e_d is None else e_d, n, "e_d"),
            "wavenumber": np.array([float(wavenumber)]),
            "source_level": np.array([float(source_level)]),
            **layer_params(reflection),
        }
        if np.any(self.d0 + self.params["e_d"] <= 0):
            raise InvalidArgumentError("effective image distances must stay positive")

    @classmethod
    def from_scene(cls, env, source, reference, frequency, reflection, max_order=None, source_level=1.0):
        """Nominal rays traced in the (approximate) environment ``env``."""
        from .raytrace import nominal_rays

        k = 2.0 * math.pi * frequency / env.sound_speed
        rays = nominal_rays(env, source, reference, max_order)
        return cls(rays, k, reflection, absorption=env.absorption, source_level=source_level)

    @property
    def n_rays(self):
        return len(self.nominal)

    @property
    def reflection_param_names(self):
        return tuple(self._layer.param_names)

    def with_params(self, params):
        p = {**self.params, **params}
        refl = reflection_with_params(self.reflection, p)
        return GeometryAidedModel(self.nominal, float(p["wavenumber"][0]), refl, p["e_theta"], p["e_psi"],
                                  p["e_d"], self.absorption, float(p["source_level"][0]))

    def current_reflection(self):
        return reflection_with_params(self.reflection, self.params)

    def _geometry(self):
        p = self.params
        u, du_t, du_p = _dir_derivs(self.theta0 + p["e_theta"], self.psi0 + p["e_psi"])
        dist = self.d0 + p["e_d"]
        s = self.reference - dist[:, None] * u
        return s, u, du_t, du_p, dist

    def image_positions(self):
        return self._geometry()[0]

    def _forward(self, X):
        s, u, du_t, du_p, dist = self._geometry()
        v, d = _distances(X, s)
        g = absorption_rate(self.absorption)
        base = np.exp(-g * d + 1j * self.wavenumber * d) / d
        sign = np.where(self.n_s % 2 == 0, 1.0, -1.0)
        w = v / d[..., None]
        mu = np.abs(w)
        powers, dpowers, layer_out = {}, {}, {}
        for a in range(3):
            cols = np.nonzero(self.lossy[:, a])[0]
            if cols.size == 0:
                continue
            r, dr, cache = self._layer.evaluate(mu[:, cols, a], self.params)
            counts = self.lossy[cols, a]
            pw = np.ones_like(r)
            prev = np.zeros_like(r)
            for j in range(int(counts.max())):
                active = j < counts
                prev = np.where(active, pw, prev)
                pw = np.where(active, pw * r, pw)
            powers[a] = (cols, pw)
            dpowers[a] = counts * prev
            layer_out[a] = (dr, cache)
        refl = np.ones_like(base)
        for cols, pw in powers.values():
            refl[:, cols] *= pw
        c0 = sign * refl * base
        P = self.params["source_level"][0] * c0.sum(axis=1)
        return dict(P=P, s=s, u=u, du_t=du_t, du_p=du_p, dist=dist, v=v, d=d, w=w, base=base, sign=sign,
                    powers=powers, dpowers=dpowers, layer_out=layer_out, c0=c0)

    def _backward(self, X, f, adj):
        p = self.params
        k = self.wavenumber
        level = p["source_level"][0]
        g = absorption_rate(self.absorption)
        cg = np.conj(np.asarray(adj, dtype=complex))[:, None]
        ac = cg * level * f["c0"]
        d = f["d"]
        g_d = (ac * (-g - 1.0 / d + 1j * k)).real
        g_w = np.zeros_like(f["v"])
        layer_grads = {name: np.zeros_like(p[name]) for name in self._layer.param_names}
        for a, (cols, _) in f["powers"].items():
            others = f["sign"][None, cols] * f["base"][:, cols] * level
            for b, (cols_b, pw_b) in f["powers"].items():
                if b == a:
                    continue
                full = np.ones_like(f["base"])
                full[:, cols_b] = pw_b
                others = others * full[:, cols]
            weight = cg * others * f["dpowers"][a]
            dr, cache = f["layer_out"][a]
            g_mu = (weight * dr).real
            g_w[:, cols, a] += g_mu * np.sign(f["w"][:, cols, a])
            for name, val in self._layer.vjp(cache, weight, p).items():
                layer_grads[name] += val
        g_v = _spherical_backward(g_d, f["v"], d, g_w)
        g_s = -g_v.sum(axis=0)
        grads = {
            "e_theta": -f["dist"] * np.sum(g_s * f["du_t"], axis=-1),
            "e_psi": -f["dist"] * np.sum(g_s * f["du_p"], axis=-1),
            "e_d": -np.sum(g_s * f["u"], axis=-1),
            "wavenumber": np.array([np.sum(-ac.imag * d)]),
            "source_level": np.array([np.sum((cg * f["c0"]).real)]),
            **layer_grads,
        }
        return grads, g_v.sum(axis=1)

    def to_dict(self):
        return {
            "kind": self.kind,
            "params": {k: v.tolist() for k, v in self.params.items()},
            "reference": self.reference.tolist(),
            "absorption": self.absorption,
            "nominal": [r.to_dict() for r in self.nominal],
            "reflection": self.current_reflection().to_dict(),
        }


# -- public prediction helpers -----------------------------------------------


def predict_plane(model, r):
    return _scalar_or_array(model.predict(r), r)


def predict_image_source(model, r):
    return _scalar_or_array(model.predict(r), r)


def predict_geometry(model, r):
    return _scalar_or_array(model.predict(r), r)


def _scalar_or_array(out, r):
    return float(out[0]) if np.asarray(r).ndim == 1 else out


def reflection_product(ray, reflection, receiver, e_theta=0.0, e_psi=0.0, e_d=0.0):
    """Cumulative reflection magnitude and phase ``(l_rc, phi_rc)`` along one ray.

    The magnitude multiplies ``eps`` over the ray's lossy bounces; the phase
    adds ``pi`` per pressure-release bounce plus ``kappa`` per lossy bounce.
    """
    from .raytrace import incidence_angles
    from .reflection import magnitude_phase

    gammas = incidence_angles(ray, receiver, e_theta, e_psi, e_d)
    mag, phase = 1.0, ray.n_s * math.pi
    for gamma in gammas:
        eps, kappa = magnitude_phase(reflection, gamma)
        mag *= eps
        phase += kappa
    return mag, phase


# -- serialization ----------------------------------------------------------


def model_from_dict(d):
    kind = d.get("kind")
    p = {k: np.asarray(v, dtype=float) for k, v in d["params"].items()}
    if kind == "plane":
        return PlaneWaveModel(p["amplitude"], p["phase"], p["theta"], p["psi"], float(p["wavenumber"][0]))
    if kind == "image_source":
        return ImageSourceModel(p["amplitude"], p["phase"], p["theta"], p["psi"], p["distance"],
                                float(p["wavenumber"][0]), d["reference"], float(d.get("absorption", 0.0)))
    if kind == "geometry":
        ref = tuple(float(v) for v in d["reference"])
        nominal = [NominalRay.from_dict(r, ref) for r in d["nominal"]]
        refl = reflection_from_dict(d["reflection"])
        return GeometryAidedModel(nominal, float(p["wavenumber"][0]), refl, p["e_theta"], p["e_psi"], p["e_d"],
                                  float(d.get("absorption", 0.0)), float(p["source_level"][0]))
    raise InvalidArgumentError(f"unknown model kind {kind!r}")


def uses_rcnn(model):
    return isinstance(model, GeometryAidedModel) and isinstance(model.reflection, LearnedRcnn)
