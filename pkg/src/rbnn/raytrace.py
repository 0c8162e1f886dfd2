"""Nominal eigenray descriptors computed from approximate geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    InvalidArgumentError,
    PressureRelease,
    SingularityError,
    angles_from_direction,
    as_vec3,
    direction_from_angles,
)
from .data import write_table
from .oracle import _faces, enumerate_images


@dataclass(frozen=True)
class NominalRay:
    """Image source seen from the reference point ``reference``.

    The image sits at ``reference - distance * u(theta, psi)``. ``lossy_counts``
    gives the non-pressure-release bounces per axis (x, y, z); their sum is
    ``n_b``.
    """

    theta: float
    psi: float
    distance: float
    n_s: int
    n_b: int
    reference: tuple
    lossy_counts: tuple = (0, 0, 0)

    def __post_init__(self):
        if not self.distance > 0:
            raise InvalidArgumentError("nominal distance must be positive")
        if self.n_s < 0 or self.n_b < 0 or sum(self.lossy_counts) != self.n_b:
            raise InvalidArgumentError("inconsistent bounce counts")

    def image_position(self, e_theta=0.0, e_psi=0.0, e_d=0.0):
        u = direction_from_angles(self.theta + e_theta, self.psi + e_psi)
        return np.asarray(self.reference) - (self.distance + e_d) * u

    def to_dict(self):
        return {
            "theta": self.theta,
            "psi": self.psi,
            "d": self.distance,
            "n_s": self.n_s,
            "n_b": self.n_b,
            "lossy_counts": list(self.lossy_counts),
        }

    @classmethod
    def from_dict(cls, d, reference):
        counts = tuple(int(v) for v in d.get("lossy_counts", (0, 0, d["n_b"])))
        return cls(float(d["theta"]), float(d["psi"]), float(d["d"]), int(d["n_s"]), int(d["n_b"]),
                   tuple(float(v) for v in reference), counts)


def _lossy_counts(env, image):
    faces = _faces(env)
    counts = [0, 0, 0]
    for f, c in enumerate(image.face_counts):
        if c and not isinstance(faces[f], PressureRelease):
            counts[f // 2] += c
    return tuple(counts)


def nominal_rays(env, source, reference, max_order=None):
    """One :class:`NominalRay` per image of ``source``, sorted by distance.

    ``env`` and ``source`` are the *approximate* geometry; nothing here needs
    the true boundary properties beyond which faces are pressure-release.
    """
    ref = as_vec3(reference, "reference")
    if not env.contains(ref, strict=False):
        raise InvalidArgumentError("reference point must lie inside the environment")
    rays = []
    for im in enumerate_images(env, source, max_order):
        v = ref - im.position
        d = float(np.linalg.norm(v))
        if d == 0.0:
            raise SingularityError("reference point coincides with an image source")
        theta, psi = angles_from_direction(v / d)
        counts = _lossy_counts(env, im)
        rays.append(NominalRay(theta, psi, d, im.n_s, sum(counts), tuple(float(x) for x in ref), counts))
    rays.sort(key=lambda r: r.distance)
    return rays


def incidence_angles(ray, receiver, e_theta=0.0, e_psi=0.0, e_d=0.0):
    """Incidence angles (from the boundary normal) of each lossy bounce of ``ray``.

    All bounces on one axis share the angle ``arccos(|u_axis|)`` where ``u`` is
    the unit direction from the effective image toward ``receiver``; the list
    holds the x-angles, then y, then z.
    """
    r = as_vec3(receiver, "receiver")
    v = r - ray.image_position(e_theta, e_psi, e_d)
    d = float(np.linalg.norm(v))
    if d == 0.0:
        raise SingularityError("receiver coincides with the effective image position")
    u = v / d
    out = []
    for axis, count in enumerate(ray.lossy_counts):
        out.extend([math.acos(min(1.0, abs(float(u[axis]))))] * count)
    return out


def rays_table(rays):
    return [(r.theta, r.psi, r.distance, r.n_s, r.n_b) for r in rays]


def write_rays_csv(path_or_buf, rays):
    write_table(path_or_buf, ("theta", "psi", "d", "n_s", "n_b"), rays_table(rays))
