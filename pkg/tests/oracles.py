"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import solve_ivp


def low_order_ode(h, d, f, r, t5, dpe, f0=60.0, duration=30.0, dt=1e-4):
    """Integrate the aggregated block diagram directly; returns (t, delta_f Hz).

    States: frequency deviation and the reheat lag ``x`` with
    ``dPm = -(F df + (R - F) x)`` and ``T x' = df - x``.
    """

    def rhs(_t, y):
        df, x = y
        dpm = -(f * df + (r - f) * x)
        return [(dpm - dpe - d * df) / (2.0 * h), (df - x) / t5]

    t = np.arange(0.0, duration + dt / 2, dt)
    sol = solve_ivp(rhs, (0.0, duration), [0.0, 0.0], t_eval=t, method="DOP853",
                    rtol=1e-11, atol=1e-13)
    return sol.t, sol.y[0] * f0


def forward_loop(weights, biases, x):
    """Straight-line scalar forward pass (no vectorisation)."""
    a = [float(v) for v in x]
    n = len(weights)
    for k, (w, b) in enumerate(zip(weights, biases)):
        z = []
        for j in range(len(b)):
            s = float(b[j])
            for i in range(len(a)):
                s += a[i] * float(w[i][j])
            z.append(s)
        a = z if k == n - 1 else [max(v, 0.0) for v in z]
    return np.array(a)


def lp_vertex_enumeration(c, A_ub, b_ub):
    """min c x s.t. A_ub x <= b_ub (bounds included as rows) by brute-force vertices."""
    n = len(c)
    best = math.inf
    for rows in itertools.combinations(range(len(b_ub)), n):
        M = A_ub[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b_ub[list(rows)])
        if np.all(A_ub @ x <= b_ub + 1e-9):
            best = min(best, float(c @ x))
    return best


def pattern_enumeration(solve_fixed, binaries):
    """Minimum over every 0/1 assignment of ``binaries`` of ``solve_fixed(assignment)``.

    ``solve_fixed`` returns the LP optimum for that assignment or ``inf``.
    """
    best = math.inf
    for bits in itertools.product((0.0, 1.0), repeat=len(binaries)):
        best = min(best, solve_fixed(dict(zip(binaries, bits))))
    return best
