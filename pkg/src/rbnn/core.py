"""Shared geometry, environment and reflection types.

Coordinates are metres with ``z`` measured as depth (positive downward), so a
flat waveguide occupies ``0 < z < depth`` with the sea surface at ``z = 0``.
Vectors are plain ``numpy`` arrays of shape ``(3,)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "RBNNError",
    "InvalidArgumentError",
    "SingularityError",
    "DivergenceError",
    "as_vec3",
    "direction_from_angles",
    "angles_from_direction",
    "to_db",
    "absorption_loss",
    "absorption_rate",
    "WaveSpec",
    "PressureRelease",
    "FixedCoeff",
    "Rayleigh",
    "RcnnWeights",
    "LearnedRcnn",
    "ReflectionModel",
    "FreeField",
    "Waveguide",
    "Box",
    "Environment",
    "BOX_FACES",
    "DB_FLOOR",
]

DB_FLOOR = 1e-30

# Face order used by Box.walls and by per-face reflection counts.
BOX_FACES = ("x_min", "x_max", "y_min", "y_max", "z_min", "z_max")


class RBNNError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(RBNNError, ValueError):
    pass


class SingularityError(RBNNError, ZeroDivisionError):
    """A receiver coincides with a (virtual) source position."""


class DivergenceError(RBNNError, ArithmeticError):
    """Training produced a non-finite loss."""


Vec3 = np.ndarray


def as_vec3(v, name="vector"):
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise InvalidArgumentError(f"{name} must have 3 components, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} must be finite")
    return a


def direction_from_angles(theta, psi):
    """Unit vector for azimuth ``theta`` and elevation ``psi`` (from +z).

    Works elementwise on arrays; the result has a trailing axis of length 3.
    """
    theta = np.asarray(theta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(psi))):
        raise InvalidArgumentError("angles must be finite")
    sp = np.sin(psi)
    return np.stack([np.cos(theta) * sp, np.sin(theta) * sp, np.cos(psi) * np.ones_like(theta)], axis=-1)


def angles_from_direction(u, tol=1e-9):
    """Inverse of :func:`direction_from_angles` for a single unit vector.

    Returns ``(theta, psi)`` with ``theta`` in ``[0, 2*pi)`` and ``psi`` in
    ``[0, pi]``. At the poles ``theta`` is 0.
    """
    u = as_vec3(u, "direction")
    norm = float(np.linalg.norm(u))
    if abs(norm - 1.0) > tol:
        raise InvalidArgumentError(f"direction must be a unit vector (norm={norm!r})")
    rho = math.hypot(u[0], u[1])
    psi = math.atan2(rho, u[2])
    if rho == 0.0:
        return 0.0, psi
    theta = math.atan2(u[1], u[0])
    if theta < 0.0:
        theta += 2.0 * math.pi
        if theta >= 2.0 * math.pi:
            theta = 0.0
    return theta, psi


def to_db(amplitude):
    """``20 log10(amplitude)``; raises for non-positive input."""
    a = np.asarray(amplitude, dtype=float)
    if np.any(~(a > 0)):
        raise InvalidArgumentError("to_db requires strictly positive amplitudes; clamp first")
    out = 20.0 * np.log10(a)
    return float(out) if out.ndim == 0 else out


def absorption_rate(absorption_db_per_m):
    """Natural-log decay rate (1/m) equivalent to an absorption in dB/m."""
    return absorption_db_per_m * math.log(10.0) / 20.0


def absorption_loss(distance, absorption):
    """Linear amplitude factor ``10**(-absorption * distance / 20)``."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0) or absorption < 0:
        raise InvalidArgumentError("distance and absorption must be non-negative")
    out = np.power(10.0, -absorption * d / 20.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WaveSpec:
    frequency: float
    sound_speed: float

    def __post_init__(self):
        if not (self.frequency > 0 and self.sound_speed > 0):
            raise InvalidArgumentError("frequency and sound speed must be positive")

    @property
    def wavenumber(self):
        return 2.0 * math.pi * self.frequency / self.sound_speed

    @property
    def wavelength(self):
        return self.sound_speed / self.frequency


# -- reflection models ------------------------------------------------------


@dataclass(frozen=True)
class PressureRelease:
    """Ideal air-water interface, coefficient -1 at every angle."""

    def coefficient(self, gamma):
        return -np.ones_like(np.asarray(gamma, dtype=float), dtype=complex)

    def to_dict(self):
        return {"type": "pressure_release"}


@dataclass(frozen=True)
class FixedCoeff:
    gamma_coeff: complex

    def __post_init__(self):
        if not np.isfinite(complex(self.gamma_coeff)):
            raise InvalidArgumentError("fixed reflection coefficient must be finite")

    def coefficient(self, gamma):
        return np.full(np.shape(gamma), complex(self.gamma_coeff))

    def to_dict(self):
        c = complex(self.gamma_coeff)
        return {"type": "fixed", "re": c.real, "im": c.imag}


@dataclass(frozen=True)
class Rayleigh:
    """Two-fluid half-space reflection (relative density, relative speed, loss)."""

    rho_r: float
    c_r: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.rho_r > 0 and self.c_r > 0 and self.delta >= 0):
            raise InvalidArgumentError("Rayleigh model requires rho_r > 0, c_r > 0, delta >= 0")

    def coefficient(self, gamma):
        from .reflection import rayleigh_coeff

        return rayleigh_coeff(gamma, self.rho_r, self.c_r, self.delta)

    def to_dict(self):
        return {"type": "rayleigh", "rho_r": self.rho_r, "c_r": self.c_r, "delta": self.delta}


@dataclass(frozen=True, eq=False)
class RcnnWeights:
    """Single-hidden-layer network mapping incidence angle to (magnitude, phase).

    ``w1``/``b1`` have shape ``(H,)``; ``w2`` is ``(2, H)`` and ``b2`` is ``(2,)``.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.w1).shape
        if len(h) != 1 or h[0] < 1:
            raise InvalidArgumentError("RCNN hidden size must be >= 1")
        if np.shape(self.b1) != h or np.shape(self.w2) != (2, h[0]) or np.shape(self.b2) != (2,):
            raise InvalidArgumentError("inconsistent RCNN weight shapes")
        for a in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(a)):
                raise InvalidArgumentError("RCNN weights must be finite")

    @property
    def hidden_size(self):
        return int(np.shape(self.w1)[0])

    @classmethod
    def zeros(cls, hidden_size=16):
        h = int(hidden_size)
        return cls(np.zeros(h), np.zeros(h), np.zeros((2, h)), np.zeros(2))

    @classmethod
    def random(cls, hidden_size=16, rng=None):
        """Uniform [-0.5, 0.5] scaled by 1/sqrt(fan-in)."""
        rng = np.random.default_rng(rng)
        h = int(hidden_size)
        w1 = rng.uniform(-0.5, 0.5, h)
        b1 = rng.uniform(-0.5, 0.5, h)
        w2 = rng.uniform(-0.5, 0.5, (2, h)) / math.sqrt(h)
        b2 = rng.uniform(-0.5, 0.5, 2) / math.sqrt(h)
        return cls(w1, b1, w2, b2)

    def to_dict(self):
        return {
            "w1": np.asarray(self.w1).tolist(),
            "b1": np.asarray(self.b1).tolist(),
            "w2": np.asarray(self.w2).tolist(),
            "b2": np.asarray(self.b2).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.asarray(d[k], dtype=float) for k in ("w1", "b1", "w2", "b2")))


@dataclass(frozen=True, eq=False)
class LearnedRcnn:
    weights: RcnnWeights

    def coefficient(self, gamma):
        from .reflection import rcnn_forward

        eps, kappa = rcnn_forward(self.weights, gamma)
        return eps * np.exp(1j * kappa)

    def to_dict(self):
        return {"type": "rcnn", **self.weights.to_dict()}


ReflectionModel = Union[PressureRelease, FixedCoeff, Rayleigh, LearnedRcnn]


def reflection_from_dict(d):
    kind = d.get("type")
    if kind == "pressure_release":
        return PressureRelease()
    if kind == "fixed":
        return FixedCoeff(complex(d.get("re", 0.0), d.get("im", 0.0)))
    if kind == "rayleigh":
        return Rayleigh(float(d["rho_r"]), float(d["c_r"]), float(d.get("delta", 0.0)))
    if kind == "rcnn":
        return LearnedRcnn(RcnnWeights.from_dict(d))
    raise InvalidArgumentError(f"unknown reflection model type {kind!r}")


# -- environments -----------------------------------------------------------


def _check_speed(c):
    if not c > 0:
        raise InvalidArgumentError("sound speed must be positive")


@dataclass(frozen=True)
class FreeField:
    sound_speed: float = 1500.0
    absorption: float = 0.0

    def __post_init__(self):
        _check_speed(self.sound_speed)
        if self.absorption < 0:
            raise InvalidArgumentError("absorption must be non-negative")

    def contains(self, p, strict=True):
        return bool(np.all(np.isfinite(p)))

    def to_dict(self):
        return {"type": "free_field", "sound_speed": self.sound_speed, "absorption": self.absorption}


@dataclass(frozen=True)
class Waveguide:
    """Flat waveguide between the surface (z=0) and the bottom (z=depth)."""

    depth: float
    sound_speed: float = 1500.0
    surface: ReflectionModel = field(default_factory=PressureRelease)
    bottom: ReflectionModel = field(default_factory=lambda: FixedCoeff(0.0))
    absorption: float = 0.0

    def __post_init__(self):
        _check_speed(self.sound_speed)
        if not self.depth > 0:
            raise InvalidArgumentError("waveguide depth must be positive")
        if self.absorption < 0:
            raise InvalidArgumentError("absorption must be non-negative")

    def contains(self, p, strict=True):
        z = np.asarray(p, dtype=float)[..., 2]
        if strict:
            return bool(np.all((z > 0) & (z < self.depth)))
        return bool(np.all((z >= 0) & (z <= self.depth)))

    def to_dict(self):
        return {
            "type": "waveguide",
            "depth": self.depth,
            "sound_speed": self.sound_speed,
            "surface": self.surface.to_dict(),
            "bottom": self.bottom.to_dict(),
            "absorption": self.absorption,
        }


@dataclass(frozen=True)
class Box:
    """Rectangular tank ``[0,Lx] x [0,Ly] x [0,Lz]``; walls follow ``BOX_FACES``."""

    dims: tuple
    sound_speed: float = 1500.0
    walls: tuple = field(default_factory=lambda: (PressureRelease(),) * 6)
    absorption: float = 0.0

    def __post_init__(self):
        _check_speed(self.sound_speed)
        dims = tuple(float(v) for v in self.dims)
        if len(dims) != 3 or not all(v > 0 for v in dims):
            raise InvalidArgumentError("box dimensions must be three positive lengths")
        object.__setattr__(self, "dims", dims)
        if len(self.walls) != 6:
            raise InvalidArgumentError("a box needs one reflection model per face (6)")
        object.__setattr__(self, "walls", tuple(self.walls))
        if self.absorption < 0:
            raise InvalidArgumentError("absorption must be non-negative")

    @classmethod
    def tank(cls, dims, sound_speed, walls, surface=None, absorption=0.0):
        """Box with one model on the sides and bottom and a pressure-release top (z=0)."""
        surface = PressureRelease() if surface is None else surface
        return cls(dims, sound_speed, (walls, walls, walls, walls, surface, walls), absorption)

    def contains(self, p, strict=True):
        p = np.asarray(p, dtype=float)
        lo, hi = np.zeros(3), np.asarray(self.dims)
        if strict:
            return bool(np.all((p > lo) & (p < hi)))
        return bool(np.all((p >= lo) & (p <= hi)))

    def to_dict(self):
        return {
            "type": "box",
            "dims": list(self.dims),
            "sound_speed": self.sound_speed,
            "walls": {name: w.to_dict() for name, w in zip(BOX_FACES, self.walls)},
            "absorption": self.absorption,
        }


Environment = Union[FreeField, Waveguide, Box]


def environment_from_dict(d):
    kind = d.get("type")
    c = float(d.get("sound_speed", 1500.0))
    a = float(d.get("absorption", 0.0))
    if kind == "free_field":
        return FreeField(c, a)
    if kind == "waveguide":
        surface = reflection_from_dict(d.get("surface", {"type": "pressure_release"}))
        bottom = reflection_from_dict(d.get("bottom", {"type": "fixed", "re": 0.0}))
        return Waveguide(float(d["depth"]), c, surface, bottom, a)
    if kind == "box":
        walls = d.get("walls")
        if isinstance(walls, dict):
            walls = tuple(reflection_from_dict(walls[name]) for name in BOX_FACES)
        elif isinstance(walls, list):
            walls = tuple(reflection_from_dict(w) for w in walls)
        else:
            raise InvalidArgumentError("box walls must be a mapping or a list of 6 models")
        return Box(tuple(d["dims"]), c, walls, a)
    raise InvalidArgumentError(f"unknown environment type {kind!r}")
