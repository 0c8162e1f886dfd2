"""Independent image enumeration by repeated mirroring across the physical walls.

Used only by the tests: breadth-first search over sequences of mirror
operations, recording the first depth at which each image position appears
together with the number of hits on each face.
"""

import numpy as np


def mirror_images(planes, source, max_order):
    """``planes`` is a list of ``(axis, coordinate)``; returns ``{key: (pos, face_counts)}``."""
    src = np.asarray(source, dtype=float)
    key = tuple(np.round(src, 9))
    found = {key: (src, (0,) * len(planes))}
    frontier = [(src, (0,) * len(planes), None)]
    for _ in range(max_order):
        nxt = []
        for pos, counts, last in frontier:
            for f, (axis, c) in enumerate(planes):
                if f == last:
                    continue
                new = pos.copy()
                new[axis] = 2 * c - pos[axis]
                k = tuple(np.round(new, 9))
                if k in found:
                    continue
                cnt = list(counts)
                cnt[f] += 1
                found[k] = (new, tuple(cnt))
                nxt.append((new, tuple(cnt), f))
        frontier = nxt
    return found


def waveguide_planes(depth):
    return [(2, 0.0), (2, depth)]


def box_planes(dims):
    return [(a, c) for a in range(3) for c in (0.0, dims[a])]


def brute_force_field(planes, coeffs, source, receivers, k, max_order):
    """Sum of ``prod(coeff[f] ** n_f) e^{ikd}/d`` with constant per-face coefficients."""
    r = np.asarray(receivers, dtype=float)
    total = np.zeros(len(r), dtype=complex)
    for pos, counts in mirror_images(planes, source, max_order).values():
        c = np.prod([complex(coeffs[f]) ** n for f, n in enumerate(counts)])
        d = np.linalg.norm(r - pos, axis=1)
        total += c * np.exp(1j * k * d) / d
    return total
