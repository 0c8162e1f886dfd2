"""Ground-truth fields from the image source method, plane-wave synthesis and
profiling-float sampling.

The image enumerators unfold the domain along each axis: lattice cell ``j``
holds the source mirrored ``|j|`` times, and the planes crossed on the way
tell which faces the corresponding ray bounced off.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BOX_FACES,
    Box,
    FreeField,
    InvalidArgumentError,
    PressureRelease,
    SingularityError,
    Waveguide,
    absorption_rate,
    as_vec3,
    direction_from_angles,
)
from .data import Dataset, random_split

DEFAULT_MAX_ORDER = {"waveguide": 6, "box": 4, "free_field": 0}
_SINGULAR_DISTANCE = 1e-12


@dataclass(frozen=True, eq=False)
class ImageSource:
    """One virtual source.

    ``n_s`` counts bounces on pressure-release faces (pure sign flips) and
    ``n_b`` bounces on every other face. ``face_counts`` follows ``BOX_FACES``
    (a waveguide uses the ``z_min`` slot for the surface and ``z_max`` for the
    bottom); ``per_axis_counts`` totals them per axis.
    """

    position: np.ndarray
    n_s: int
    n_b: int
    face_counts: tuple
    cell: tuple

    @property
    def per_axis_counts(self):
        f = self.face_counts
        return (f[0] + f[1], f[2] + f[3], f[4] + f[5])

    @property
    def order(self):
        return sum(self.face_counts)


def default_max_order(env):
    if isinstance(env, Waveguide):
        return DEFAULT_MAX_ORDER["waveguide"]
    if isinstance(env, Box):
        return DEFAULT_MAX_ORDER["box"]
    return 0


def _unfold(j, length, x):
    """Position and (min-face, max-face) bounce counts for lattice cell ``j``."""
    pos = j * length + (x if j % 2 == 0 else length - x)
    if j >= 0:
        n_min = j // 2
    else:
        n_min = -(j // 2)
    return pos, (n_min, abs(j) - n_min)


def _faces(env):
    if isinstance(env, FreeField):
        return (None,) * 6
    if isinstance(env, Waveguide):
        return (None, None, None, None, env.surface, env.bottom)
    return env.walls


def _make_image(env, source, cell):
    faces = _faces(env)
    pos = source.copy()
    counts = [0] * 6
    if isinstance(env, Waveguide):
        pos[2], (counts[4], counts[5]) = _unfold(cell[2], env.depth, source[2])
    else:
        for a in range(3):
            pos[a], (counts[2 * a], counts[2 * a + 1]) = _unfold(cell[a], env.dims[a], source[a])
    n_s = sum(c for c, f in zip(counts, faces) if c and isinstance(f, PressureRelease))
    return ImageSource(pos, n_s, sum(counts) - n_s, tuple(counts), tuple(cell))


def _check_order(max_order):
    if int(max_order) != max_order or max_order < 0:
        raise InvalidArgumentError("max_order must be a non-negative integer")
    return int(max_order)


def _with_surface_partners(env, source, images):
    # close the set under mirroring in the z=0 plane so receivers on that plane
    # see every image paired with its sign-flipped twin
    cells = {im.cell for im in images}
    extra = []
    for im in images:
        partner = (im.cell[0], im.cell[1], -1 - im.cell[2])
        if partner not in cells:
            cells.add(partner)
            extra.append(_make_image(env, source, partner))
    return images + extra


def enumerate_images_waveguide(env, source, max_order, pair_surface=False):
    """All images of ``source`` with at most ``max_order`` reflections (2N+1 of them).

    With ``pair_surface`` the set is completed so that every image has its
    mirror across the surface plane, which adds the one unpaired image at the
    truncation edge.
    """
    if not isinstance(env, Waveguide):
        raise InvalidArgumentError("expected a Waveguide environment")
    source = as_vec3(source, "source")
    if not env.contains(source):
        raise InvalidArgumentError("source must lie strictly inside the water column")
    n = _check_order(max_order)
    images = [_make_image(env, source, (0, 0, j)) for j in sorted(range(-n, n + 1), key=lambda j: (abs(j), j))]
    if pair_surface:
        images = _with_surface_partners(env, source, images)
    return images


def enumerate_images_box(env, source, max_order, pair_surface=False):
    """Lattice images of ``source`` in a box with ``|jx|+|jy|+|jz| <= max_order``."""
    if not isinstance(env, Box):
        raise InvalidArgumentError("expected a Box environment")
    source = as_vec3(source, "source")
    if not env.contains(source):
        raise InvalidArgumentError("source must lie strictly inside the box")
    n = _check_order(max_order)
    rng = range(-n, n + 1)
    cells = [c for c in itertools.product(rng, rng, rng) if sum(map(abs, c)) <= n]
    cells.sort(key=lambda c: (sum(map(abs, c)), c))
    images = [_make_image(env, source, c) for c in cells]
    if pair_surface:
        images = _with_surface_partners(env, source, images)
    return images


def enumerate_images(env, source, max_order=None, pair_surface=False):
    if max_order is None:
        max_order = default_max_order(env)
    if isinstance(env, Waveguide):
        return enumerate_images_waveguide(env, source, max_order, pair_surface)
    if isinstance(env, Box):
        return enumerate_images_box(env, source, max_order, pair_surface)
    if isinstance(env, FreeField):
        return [ImageSource(as_vec3(source, "source"), 0, 0, (0,) * 6, (0, 0, 0))]
    raise InvalidArgumentError(f"unsupported environment {env!r}")


def image_coefficient(env, image, unit_dirs):
    """Product of boundary coefficients for ``image`` seen along ``unit_dirs`` (n,3)."""
    faces = _faces(env)
    coeff = np.ones(len(unit_dirs), dtype=complex)
    for f, count in enumerate(image.face_counts):
        if count:
            axis = f // 2
            gamma = np.arccos(np.clip(np.abs(unit_dirs[:, axis]), 0.0, 1.0))
            coeff *= np.asarray(faces[f].coefficient(gamma), dtype=complex) ** count
    return coeff


def field_ism(env, source, receivers, frequency, max_order=None, pair_surface=False):
    """Coherent image-source field of a unit point source.

    Parameters
    ----------
    env : FreeField, Waveguide or Box
    source : array_like, shape (3,)
    receivers : array_like, shape (3,) or (n, 3)
    frequency : float
        Hz; the wavenumber is ``2*pi*f/c`` with the environment's sound speed.
    max_order : int, optional
        Reflection order cutoff (defaults: 6 waveguide, 4 box).

    Returns
    -------
    complex or ndarray of complex
    """
    if not frequency > 0:
        raise InvalidArgumentError("frequency must be positive")
    r = np.asarray(receivers, dtype=float)
    single = r.ndim == 1
    r = r.reshape(-1, 3)
    if not np.all(np.isfinite(r)):
        raise InvalidArgumentError("receiver positions must be finite")
    k = 2.0 * math.pi * frequency / env.sound_speed
    g = absorption_rate(env.absorption)
    total = np.zeros(len(r), dtype=complex)
    for im in enumerate_images(env, source, max_order, pair_surface):
        v = r - im.position
        d = np.sqrt(np.einsum("ij,ij->i", v, v))
        if np.any(d < _SINGULAR_DISTANCE):
            raise SingularityError("receiver coincides with an image source")
        term = np.exp(-g * d + 1j * k * d) / d
        if im.order:
            term = term * image_coefficient(env, im, v / d[:, None])
        total += term
    return complex(total[0]) if single else total


def synth_plane_field(rays, k, receivers):
    """Sum of plane waves ``A exp(i phi) exp(i k u(theta, psi) . r)``.

    ``rays`` is a sequence of ``(A, phi, theta, psi)`` tuples.
    """
    if not k > 0:
        raise InvalidArgumentError("wavenumber must be positive")
    rays = np.asarray(rays, dtype=float).reshape(-1, 4)
    r = np.asarray(receivers, dtype=float)
    single = r.ndim == 1
    r = r.reshape(-1, 3)
    if not (np.all(np.isfinite(rays)) and np.all(np.isfinite(r))):
        raise InvalidArgumentError("rays and receivers must be finite")
    u = direction_from_angles(rays[:, 2], rays[:, 3])
    phase = rays[:, 1][None, :] + k * (r @ u.T)
    out = np.exp(1j * phase) @ rays[:, 0]
    return complex(out[0]) if single else out


# -- sampling ---------------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryConfig:
    """Profiling float moving up and down while drifting horizontally.

    ``drift_velocity`` is ``(vx, vy)`` in m/s (a scalar means along x).
    The float starts at ``start`` heading down.
    """

    start: tuple
    drift_velocity: tuple
    vertical_speed: float
    depth_bounds: tuple
    sample_interval: float
    profiles: int = 1

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(float(v) for v in as_vec3(self.start, "start")))
        dv = np.atleast_1d(np.asarray(self.drift_velocity, dtype=float))
        if dv.shape == (1,):
            dv = np.array([dv[0], 0.0])
        if dv.shape != (2,) or not np.all(np.isfinite(dv)):
            raise InvalidArgumentError("drift_velocity must be a number or a pair")
        object.__setattr__(self, "drift_velocity", tuple(float(v) for v in dv))
        lo, hi = (float(v) for v in self.depth_bounds)
        object.__setattr__(self, "depth_bounds", (lo, hi))
        if not hi > lo:
            raise InvalidArgumentError("depth bounds must satisfy top < bottom")
        if not (self.vertical_speed > 0 and self.sample_interval > 0):
            raise InvalidArgumentError("vertical speed and sample interval must be positive")
        if int(self.profiles) != self.profiles or self.profiles < 1:
            raise InvalidArgumentError("profiles must be a positive integer")
        if not lo <= self.start[2] <= hi:
            raise InvalidArgumentError("start depth must lie within the depth bounds")

    def to_dict(self):
        return {
            "start": list(self.start),
            "drift_velocity": list(self.drift_velocity),
            "vertical_speed": self.vertical_speed,
            "depth_bounds": list(self.depth_bounds),
            "sample_interval": self.sample_interval,
            "profiles": int(self.profiles),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["start"],
            d.get("drift_velocity", 0.0),
            float(d["vertical_speed"]),
            d["depth_bounds"],
            float(d["sample_interval"]),
            int(d.get("profiles", 1)),
        )


def gen_zigzag_trajectory(cfg):
    """Sample positions along a sawtooth depth profile, first sample at t=0.

    The sample count is ``floor(profiles * span / (vertical_speed * interval))``.
    """
    lo, hi = cfg.depth_bounds
    span = hi - lo
    step = cfg.vertical_speed * cfg.sample_interval
    n = int(math.floor(cfg.profiles * span / step + 1e-9))
    t = np.arange(n) * cfg.sample_interval
    s = (cfg.start[2] - lo) + cfg.vertical_speed * t
    leg = np.floor(s / span + 1e-12)
    within = s - leg * span
    depth = np.where(leg % 2 == 0, lo + within, hi - within)
    x = cfg.start[0] + cfg.drift_velocity[0] * t
    y = cfg.start[1] + cfg.drift_velocity[1] * t
    return np.column_stack([x, y, np.clip(depth, lo, hi)])


def make_dataset(env, source, positions, frequency, max_order=None, split_fractions=(0.7, 0.3, 0.0), seed=0):
    """Noise-free ISM amplitudes at ``positions`` with a seeded random split."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(pos) == 0:
        raise InvalidArgumentError("trajectory is empty")
    if not env.contains(pos, strict=False):
        raise InvalidArgumentError("trajectory leaves the environment")
    amp = np.abs(field_ism(env, source, pos, frequency, max_order))
    return Dataset(pos, amp, random_split(len(pos), split_fractions, seed))


def add_position_noise(dataset, max_err_per_dim, seed):
    """Perturb recorded positions by independent uniform offsets per dimension.

    ``max_err_per_dim`` may be a scalar or one bound per record. Amplitudes are
    left untouched: they belong to the true positions.
    """
    bound = np.asarray(max_err_per_dim, dtype=float)
    if np.any(bound < 0) or not np.all(np.isfinite(bound)):
        raise InvalidArgumentError("position error bound must be finite and non-negative")
    n = len(dataset)
    if bound.ndim == 1:
        if bound.shape != (n,):
            raise InvalidArgumentError("per-record bounds must match the dataset length")
        bound = bound[:, None]
    u = np.random.default_rng(seed).uniform(-1.0, 1.0, (n, 3))
    return dataset.with_positions(dataset.positions + u * bound)
