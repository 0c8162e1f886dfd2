"""Regular evaluation grids and field tables."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import InvalidArgumentError, SingularityError
from .data import write_table

FIELD_HEADER = ("x", "y", "z", "amplitude")


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned grid; a flat axis (``min == max``) holds a single node.

    Nodes are ``min + i * resolution`` up to ``max`` (inclusive within 1e-9).
    """

    bounds: tuple
    resolution: tuple

    def __post_init__(self):
        b = tuple(tuple(float(v) for v in pair) for pair in self.bounds)
        r = tuple(float(v) for v in self.resolution)
        if len(b) != 3 or any(len(pair) != 2 for pair in b) or len(r) != 3:
            raise InvalidArgumentError("grid needs three (min, max) bounds and three resolutions")
        if not all(np.isfinite(v) for pair in b for v in pair) or not all(np.isfinite(r)):
            raise InvalidArgumentError("grid bounds and resolution must be finite")
        for (lo, hi), res in zip(b, r):
            if hi < lo or res < 0 or (hi > lo and res == 0):
                raise InvalidArgumentError("each axis needs max >= min and a positive resolution when max > min")
        if all(lo == hi for lo, hi in b):
            raise InvalidArgumentError("grid must extend along at least one axis")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "resolution", r)

    def axes(self):
        out = []
        for (lo, hi), res in zip(self.bounds, self.resolution):
            if hi == lo:
                out.append(np.array([lo]))
            else:
                n = int(np.floor((hi - lo) / res + 1e-9)) + 1
                out.append(lo + res * np.arange(n))
        return out

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes())

    def points(self):
        """Node positions in row-major order (z varies fastest)."""
        gx, gy, gz = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def to_dict(self):
        return {"bounds": [list(p) for p in self.bounds], "resolution": list(self.resolution)}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(tuple(tuple(p) for p in d["bounds"]), tuple(d["resolution"]))
        except (KeyError, TypeError) as exc:
            raise InvalidArgumentError(f"malformed grid spec: {exc}") from exc

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def predict_points(model, points, chunk=4096):
    """Amplitudes at ``points``; NaN where a point coincides with an image source."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.empty(len(pts))
    for start in range(0, len(pts), chunk):
        block = pts[start:start + chunk]
        try:
            out[start:start + len(block)] = model.predict(block)
        except SingularityError:
            for i, p in enumerate(block):
                try:
                    out[start + i] = model.predict(p[None])[0]
                except SingularityError:
                    out[start + i] = np.nan
    return out


def predict_grid(model, grid):
    """Evaluate ``model`` at every grid node: ``(points, amplitudes)``."""
    pts = grid.points()
    return pts, predict_points(model, pts)


def write_field_csv(path_or_buf, points, amplitudes):
    """CSV with columns ``x,y,z,amplitude``; singular nodes get an empty amplitude."""
    rows = [(p[0], p[1], p[2], None if not np.isfinite(a) else a) for p, a in zip(points, amplitudes)]
    write_table(path_or_buf, FIELD_HEADER, rows)


def read_field_csv(path_or_buf):
    from .data import read_table

    header, rows = read_table(path_or_buf)
    if tuple(header[:4]) != FIELD_HEADER:
        raise InvalidArgumentError("field CSV must have header x,y,z,amplitude")
    pts = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows]).reshape(-1, 3)
    amp = np.array([float(r[3]) if r[3] != "" else np.nan for r in rows])
    return pts, amp
