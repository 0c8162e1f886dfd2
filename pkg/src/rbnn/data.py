"""Measurement datasets: positions, amplitudes and split labels, plus CSV I/O."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .core import InvalidArgumentError

SPLITS = ("train", "validation", "test")
CSV_HEADER = ("x", "y", "z", "amplitude", "split")


def fmt(v):
    """Shortest round-trip decimal text for a float."""
    return repr(float(v))


@dataclass(frozen=True, eq=False)
class Dataset:
    positions: np.ndarray
    amplitudes: np.ndarray
    split: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        amp = np.array(self.amplitudes, dtype=float).reshape(-1)
        split = np.array(self.split, dtype=object).reshape(-1)
        if not (len(pos) == len(amp) == len(split)):
            raise InvalidArgumentError("positions, amplitudes and split labels must have equal length")
        if not np.all(np.isfinite(pos)):
            raise InvalidArgumentError("positions must be finite")
        if np.any(~(amp >= 0)):
            raise InvalidArgumentError("amplitudes must be finite and non-negative")
        bad = set(split.tolist()) - set(SPLITS)
        if bad:
            raise InvalidArgumentError(f"unknown split labels {sorted(bad)}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "amplitudes", amp)
        object.__setattr__(self, "split", split)

    def __len__(self):
        return len(self.amplitudes)

    def mask(self, label):
        return self.split == label

    def subset(self, label):
        """Positions and amplitudes of one split as ``(X, y)``."""
        m = self.mask(label)
        return self.positions[m], self.amplitudes[m]

    def counts(self):
        return {s: int(np.sum(self.mask(s))) for s in SPLITS}

    def with_positions(self, positions):
        return Dataset(positions, self.amplitudes, self.split)

    def with_split(self, split):
        return Dataset(self.positions, self.amplitudes, split)

    def to_csv(self, path_or_buf):
        rows = [CSV_HEADER]
        for p, a, s in zip(self.positions, self.amplitudes, self.split):
            rows.append((fmt(p[0]), fmt(p[1]), fmt(p[2]), fmt(a), s))
        _write_rows(path_or_buf, rows)

    @classmethod
    def from_csv(cls, path_or_buf):
        rows = _read_rows(path_or_buf)
        if not rows or tuple(rows[0][:4]) != CSV_HEADER[:4]:
            raise InvalidArgumentError("dataset CSV must start with header x,y,z,amplitude[,split]")
        body = rows[1:]
        has_split = len(rows[0]) > 4
        pos = [[float(r[0]), float(r[1]), float(r[2])] for r in body]
        amp = [float(r[3]) for r in body]
        split = [r[4] if has_split and len(r) > 4 and r[4] else "train" for r in body]
        return cls(np.array(pos).reshape(-1, 3), np.array(amp), np.array(split, dtype=object))


def split_counts(n, fractions):
    """Record counts for (train, validation, test).

    Train and test take ``floor(fraction * n)``; validation takes the rest, so
    (0.7, 0.3, 0) on 984 records yields 688/296/0. With a zero validation
    fraction the remainder goes to test instead.
    """
    f = np.asarray(fractions, dtype=float)
    if f.shape != (3,) or np.any(f < 0) or abs(f.sum() - 1.0) > 1e-9:
        raise InvalidArgumentError("split fractions must be three non-negative numbers summing to 1")
    n_train = int(np.floor(f[0] * n + 1e-9))
    n_test = int(np.floor(f[2] * n + 1e-9))
    if f[1] == 0.0 and f[2] > 0.0:
        n_test = n - n_train
    return n_train, n - n_train - n_test, n_test


def random_split(n, fractions, seed):
    n_train, n_val, _ = split_counts(n, fractions)
    order = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=object)
    labels[order[:n_train]] = "train"
    labels[order[n_train:n_train + n_val]] = "validation"
    labels[order[n_train + n_val:]] = "test"
    return labels


def _write_rows(path_or_buf, rows):
    if isinstance(path_or_buf, io.TextIOBase) or hasattr(path_or_buf, "write"):
        csv.writer(path_or_buf, lineterminator="\n").writerows(rows)
        return
    with open(path_or_buf, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _read_rows(path_or_buf):
    if hasattr(path_or_buf, "read"):
        return [r for r in csv.reader(path_or_buf) if r]
    with open(path_or_buf, newline="") as fh:
        return [r for r in csv.reader(fh) if r]


def write_table(path_or_buf, header, rows):
    """Write a CSV with floats in shortest round-trip form; ``None`` becomes empty."""
    out = [tuple(header)]
    for r in rows:
        out.append(tuple("" if v is None else (v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer)) else fmt(v))) for v in r))
    _write_rows(path_or_buf, out)


def read_table(path_or_buf):
    rows = _read_rows(path_or_buf)
    if not rows:
        raise InvalidArgumentError("empty CSV")
    return rows[0], rows[1:]
