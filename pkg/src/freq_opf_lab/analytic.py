"""Low-order aggregated SFR model: worst RoCoF, nadir time and nadir depth.

The fleet is collapsed into one reheat unit

    2 H df/dt = -dPe - D df - dPm,   dPm = (R + F T s)/(1 + T s) * df

with capacity-weighted inertia ``H``, gains ``R`` (sum of K/R) and ``F``
(sum of K F/R) and reheat time constant ``T``.  Per-unit quantities are on
the MVA rating of the participating fleet (``base_mva``); disturbances
given in MW are converted with :func:`disturbance_pu`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .grid import Generator, PowerCase

OSC_MARGIN = 1e-12  # 1 - xi^2 below this counts as not oscillatory


class AnalyticError(ValueError):
    pass


@dataclass(frozen=True)
class LowOrderParams:
    h_sys: float
    d: float
    f_agg: float
    r_agg: float
    t_agg: float
    omega_n: float
    omega_d: float
    xi: float
    phi: float
    base_mva: float
    f0: float = 60.0

    @property
    def oscillatory(self) -> bool:
        return 0.0 < self.xi and 1.0 - self.xi ** 2 > OSC_MARGIN

    def to_json(self) -> str:
        return json.dumps({**asdict(self), "oscillatory": self.oscillatory}, indent=2)


def low_order_from_values(h_sys: float, d: float, f_agg: float, r_agg: float, t_agg: float,
                          base_mva: float = 100.0, f0: float = 60.0) -> LowOrderParams:
    """Derive the second-order characteristics from aggregated constants."""
    if h_sys <= 0 or t_agg <= 0:
        raise AnalyticError("h_sys and t_agg must be positive")
    if r_agg + d <= 0:
        raise AnalyticError("r_agg + d must be positive")
    omega_n = math.sqrt((d + r_agg) / (2.0 * h_sys * t_agg))
    xi = (2.0 * h_sys + t_agg * (d + f_agg)) / (2.0 * math.sqrt(2.0 * h_sys * t_agg * (d + r_agg)))
    if 1.0 - xi * xi > OSC_MARGIN:
        omega_d = omega_n * math.sqrt(1.0 - xi * xi)
        phi = math.asin(math.sqrt(1.0 - xi * xi))
    else:
        omega_d, phi = 0.0, 0.0
    return LowOrderParams(h_sys, d, f_agg, r_agg, t_agg, omega_n, omega_d, xi, phi, base_mva, f0)


def aggregate_low_order(case: PowerCase, exclude_contingency: bool = True,
                        units: Iterable[Generator] | None = None) -> LowOrderParams:
    """Capacity-weighted aggregation of the fleet into one low-order unit.

    By default the contingency unit is left out (it cannot respond to its
    own trip).  Damping is moved from ``p_base`` onto ``base_mva``.
    """
    if units is None:
        units = case.in_service() if exclude_contingency else list(case.generators)
    units = list(units)
    if not units:
        raise AnalyticError("no generators to aggregate")
    pmax = np.array([g.p_max for g in units])
    if pmax.sum() <= 0:
        raise AnalyticError("aggregation weights (p_max) sum to zero")
    w = pmax / pmax.sum()
    h = float(w @ [g.inertia_h for g in units])
    r = float(w @ [g.governor.k / g.governor.r for g in units])
    f = float(w @ [g.governor.k * g.governor.f_hp / g.governor.r for g in units])
    t = float(w @ [g.governor.t5 for g in units])
    base = float(sum(g.mva_base for g in units))
    d = case.damping_d * case.p_base / base
    return low_order_from_values(h, d, f, r, t, base, case.f0)


def disturbance_pu(p: LowOrderParams, p_d_mw: float) -> float:
    return p_d_mw / p.base_mva


def in_service_inertia(case: PowerCase, include_tripped: bool = False) -> float:
    """Sum of inertia constants on the system base, s."""
    gens = case.generators if include_tripped else case.in_service()
    return float(sum(g.h_on_base(case.p_base) for g in gens))


def worst_rocof(case: PowerCase, p_d: float, include_tripped: bool = False) -> float:
    """Initial RoCoF (Hz/s) right after losing ``p_d`` MW, from the swing equation."""
    if p_d < 0:
        raise AnalyticError("p_d must be >= 0")
    h = in_service_inertia(case, include_tripped)
    if h <= 0:
        raise AnalyticError("zero in-service inertia")
    return -case.f0 * (p_d / case.p_base) / (2.0 * h)


def _require_oscillatory(p: LowOrderParams) -> None:
    if not p.oscillatory:
        raise AnalyticError(f"damping ratio xi={p.xi:.6g} is outside (0, 1): "
                            "nadir formulas need an underdamped response")


def nadir_time(p: LowOrderParams) -> float:
    """Time of the frequency nadir, s.

    Zero of the step-response derivative: ``tan(wd t) = wd T / (xi wn T - 1)``.
    """
    _require_oscillatory(p)
    wd, T = p.omega_d, p.t_agg
    t = math.atan2(wd * T, p.xi * p.omega_n * T - 1.0) / wd
    if t <= 0:
        t += math.pi / wd
    return t


def nadir_gain(p: LowOrderParams) -> float:
    """Nadir deviation per pu of disturbance, in Hz (negative)."""
    _require_oscillatory(p)
    if p.r_agg <= p.f_agg:
        raise AnalyticError("r_agg must exceed f_agg (radicand would be negative)")
    tn = nadir_time(p)
    overshoot = math.exp(-p.xi * p.omega_n * tn) * math.sqrt(p.t_agg * (p.r_agg - p.f_agg) / (2.0 * p.h_sys))
    return -p.f0 * (1.0 + overshoot) / (p.r_agg + p.d)


def nadir_deviation(p: LowOrderParams, delta_p_e: float) -> float:
    """Frequency deviation at the nadir (Hz) for a ``delta_p_e`` pu loss."""
    if delta_p_e < 0:
        raise AnalyticError("delta_p_e must be >= 0")
    return nadir_gain(p) * delta_p_e


def time_response(p: LowOrderParams, delta_p_e: float, t) -> np.ndarray:
    """Step response of the low-order model, Hz, at times ``t`` (scalar or array).

    Inverse Laplace of ``-dPe (1 + T s) / (s (2HT s^2 + (2H + T(D+F)) s + D + R))``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise AnalyticError("t must be >= 0")
    _require_oscillatory(p)
    sigma = p.xi * p.omega_n
    wd = p.omega_d
    k = (p.t_agg * p.omega_n ** 2 - sigma) / wd
    y = 1.0 - np.exp(-sigma * t) * (np.cos(wd * t) - k * np.sin(wd * t))
    return -p.f0 * delta_p_e / (p.r_agg + p.d) * y
