"""Numerical oracles shared by the unit and acceptance tests."""

import numpy as np

# one line per acceptance check, printed in the pytest terminal summary
ACCEPTANCE_LINES = []

# fourth-order central second-derivative stencil
_OFFSETS = (-2, -1, 0, 1, 2)
_WEIGHTS = (-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12)


def helmholtz_residual(field, points, k, step):
    """``|lap p + k^2 p| / (k^2 |p|)`` at each point via finite differences."""
    pts = np.asarray(points, dtype=float)
    centre = field(pts)
    lap = np.zeros(len(pts), dtype=complex)
    for axis in range(3):
        for o, w in zip(_OFFSETS, _WEIGHTS):
            shifted = pts.copy()
            shifted[:, axis] += o * step
            lap += w * field(shifted)
    lap /= step * step
    return np.abs(lap + k * k * centre) / (k * k * np.abs(centre)), np.abs(centre)


def finite_difference_check(fun, params, grads, rel=1e-5, abs_tol=1e-7):
    """Compare analytic ``grads`` with central differences of ``fun(params)``.

    Returns the list of ``(name, index, analytic, numeric)`` mismatches.
    """
    bad = []
    for name, value in params.items():
        flat = np.asarray(value, dtype=float).ravel()
        g = np.asarray(grads[name], dtype=float).ravel()
        for i in range(flat.size):
            h = 1e-6 * max(1.0, abs(flat[i]))
            up, dn = flat.copy(), flat.copy()
            up[i] += h
            dn[i] -= h
            shape = np.shape(value)
            num = (fun({**params, name: up.reshape(shape)}) - fun({**params, name: dn.reshape(shape)})) / (2 * h)
            if abs(num - g[i]) > max(rel * max(abs(num), abs(g[i])), abs_tol):
                bad.append((name, i, g[i], num))
    return bad
