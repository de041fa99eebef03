"""Full-order multi-governor system frequency response simulator.

Every in-service unit contributes a reheat-steam governor/turbine branch

    G_i(s) = K_i/R_i * (1 + s T2)/(1 + s T1) * 1/(1 + s T3)
             * (1 + s F T5)/((1 + s T4)(1 + s T5))

driven by the per-unit frequency deviation, scaled onto the system base by
``mva_base / p_base``.  All branches feed one aggregated swing block

    2 H_sum d(df)/dt = sum(dPm) - dPe - D df

and the tripped unit's output is applied as a step ``dPe`` at ``t = 0``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import signal

from .grid import CaseError, PowerCase

DEFAULT_DT = 1e-3
DEFAULT_DURATION = 30.0
SETTLE_SLOPE = 1e-4  # Hz/s


class SimulationError(RuntimeError):
    pass


class UnsettledWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class GovernorBranch:
    gen_id: str
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    scale: float  # mva_base / p_base

    @property
    def order(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class SfrSystem:
    branches: tuple[GovernorBranch, ...]
    h_sum: float  # system-base inertia of the in-service fleet, s
    d: float
    delta_pe: float  # step disturbance, pu on p_base
    f0: float
    tripped: str = ""

    @property
    def n_states(self) -> int:
        return 1 + sum(b.order for b in self.branches)

    @property
    def droop_gain(self) -> float:
        """Aggregate steady-state governor gain on the system base."""
        return float(sum(b.scale * (b.C @ np.linalg.solve(-b.A, b.B)).item() for b in self.branches))

    def matrices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """State matrix, disturbance input vector and the ``[df, dPm]`` output map."""
        n = self.n_states
        A = np.zeros((n, n))
        B = np.zeros(n)
        C = np.zeros((2, n))
        m = 2.0 * self.h_sum
        A[0, 0] = -self.d / m
        B[0] = -1.0 / m
        C[0, 0] = 1.0
        i = 1
        for br in self.branches:
            k = br.order
            A[i:i + k, i:i + k] = br.A
            A[i:i + k, 0] = -br.B[:, 0]  # governor sees -df
            A[0, i:i + k] = br.scale * br.C[0] / m
            C[1, i:i + k] = br.scale * br.C[0]
            i += k
        return A, B, C


@dataclass(frozen=True)
class SfrTrace:
    dt: float
    t: np.ndarray
    delta_f: np.ndarray  # Hz
    delta_pm_total: np.ndarray  # pu on p_base
    settled: bool = True


@dataclass(frozen=True)
class FrequencyMetrics:
    rocof_worst: float  # Hz/s
    fn: float  # Hz
    t_nadir: float  # s
    f_ss: float  # Hz


def governor_transfer(gov, gain_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Numerator/denominator polynomials (descending powers) of one governor branch.

    Zero time constants drop their factor, so ``T4 = 0`` lowers the order by one.
    """
    num = np.array([gov.k / gov.r * gain_scale])
    den = np.array([1.0])
    for t in (gov.t2, gov.f_hp * gov.t5):
        if t > 0:
            num = np.polymul(num, [t, 1.0])
    for t in (gov.t1, gov.t3, gov.t4, gov.t5):
        if t > 0:
            den = np.polymul(den, [t, 1.0])
    return num, den


def _branch(gen, p_base: float) -> GovernorBranch:
    num, den = governor_transfer(gen.governor)
    # controllable canonical form
    A, B, C, D = signal.tf2ss(num, den)
    if np.any(np.abs(D) > 0):
        raise SimulationError(f"governor of {gen.id} is not strictly proper")
    return GovernorBranch(gen.id, A, B, C, gen.mva_base / p_base)


def build_full_order(case: PowerCase, dispatch: Mapping[str, float],
                     tripped: str | None = None) -> SfrSystem:
    """Post-contingency SFR model for ``dispatch`` (MW per generator id)."""
    tripped = case.contingency_unit if tripped is None else tripped
    if tripped not in case.gen_ids:
        raise CaseError(f"unknown generator id {tripped!r}")
    for g in case.generators:
        if g.id not in dispatch:
            raise CaseError(f"dispatch has no entry for generator {g.id}")
        if not math.isfinite(dispatch[g.id]) or dispatch[g.id] < -1e-9:
            raise CaseError(f"dispatch for {g.id} must be finite and >= 0")
    alive = case.in_service(tripped)
    if not alive:
        raise CaseError("no in-service generator left after the trip")
    h_sum = sum(g.h_on_base(case.p_base) for g in alive)
    branches = tuple(_branch(g, case.p_base) for g in alive)
    dpe = max(float(dispatch[tripped]), 0.0) / case.p_base
    return SfrSystem(branches, h_sum, case.damping_d, dpe, case.f0, tripped)


def _rk4_propagator(A: np.ndarray, B: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """One classical RK4 step of ``x' = A x + B u`` with constant ``u`` as matrices.

    For a linear system with constant input the four stages collapse exactly
    to ``x+ = Phi x + Gamma u`` with the 4th-order Taylor polynomials below.
    """
    n = A.shape[0]
    hA = h * A
    I = np.eye(n)
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    phi = I + hA + hA2 / 2.0 + hA3 / 6.0 + hA3 @ hA / 24.0
    gamma = h * (I + hA / 2.0 + hA2 / 6.0 + hA3 / 24.0) @ B
    return phi, gamma


def simulate(system: SfrSystem, duration: float = DEFAULT_DURATION,
             dt: float = DEFAULT_DT, block: int = 500) -> SfrTrace:
    """Fixed-step RK4 response to the step disturbance, sampled every step.

    Steps are evaluated in blocks: within a block of ``L`` steps the iterate
    is ``x[s+i] = Phi^i x[s] + sum_{j<i} Phi^j g``, so the Python loop runs
    once per block rather than once per step.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not duration > dt:
        raise ValueError("duration must exceed dt")
    n_steps = int(round(duration / dt))
    A, B, C = system.matrices()
    phi, gamma = _rk4_propagator(A, B, dt)
    g = gamma * system.delta_pe
    n = A.shape[0]
    L = max(1, min(block, n_steps))
    # CP[i] = C Phi^(i+1);  CS[i] = C sum_{j<=i} Phi^j g
    CP = np.empty((L, 2, n))
    CS = np.empty((L, 2))
    P = np.eye(n)
    S = np.zeros(n)
    for i in range(L):
        S = S + P @ g
        P = phi @ P
        CP[i] = C @ P
        CS[i] = C @ S
    PL, SL = P, S

    y = np.zeros((n_steps + 1, 2))
    x = np.zeros(n)
    k = 0
    while k < n_steps:
        m = min(L, n_steps - k)
        y[k + 1:k + 1 + m] = CP[:m] @ x + CS[:m]
        if m == L:
            x = PL @ x + SL
        k += m
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"non-finite state at step {k}")
    if not np.all(np.isfinite(y)):
        bad = int(np.argmax(~np.all(np.isfinite(y), axis=1)))
        raise SimulationError(f"non-finite state at step {bad}")

    delta_f = y[:, 0] * system.f0
    t = np.arange(n_steps + 1) * dt
    tail = delta_f[int(0.9 * n_steps):]
    slope = np.max(np.abs(np.diff(tail))) / dt if tail.size > 1 else 0.0
    settled = bool(slope < SETTLE_SLOPE)
    if not settled:
        warnings.warn(f"frequency not settled: |df/dt| reaches {slope:.2e} Hz/s in the "
                      f"last 10% of a {duration:g} s horizon", UnsettledWarning, stacklevel=2)
    return SfrTrace(dt, t, delta_f, y[:, 1], settled)


def coi_frequency(traces: Sequence[Sequence[float]], inertias: Sequence[float]) -> np.ndarray:
    """Centre-of-inertia frequency: the inertia-weighted mean of machine frequencies."""
    if len(traces) == 0:
        raise ValueError("no traces given")
    if len(traces) != len(inertias):
        raise ValueError("one inertia per trace is required")
    lengths = {len(tr) for tr in traces}
    if len(lengths) != 1:
        raise ValueError("traces must have equal lengths")
    w = np.asarray(inertias, dtype=float)
    if np.any(w <= 0):
        raise ValueError("inertias must be > 0")
    F = np.asarray(traces, dtype=float)
    return w @ F / w.sum()


def compute_metrics(trace: SfrTrace, f0: float, window: float | None = None) -> FrequencyMetrics:
    """Worst windowed RoCoF, nadir, nadir time and settled frequency of a trace.

    ``window`` defaults to ten cycles of ``f0``.
    """
    window = 10.0 / f0 if window is None else window
    if window < trace.dt * (1 - 1e-9):
        raise ValueError("window must be at least one time step")
    w = max(1, int(round(window / trace.dt)))
    df = np.asarray(trace.delta_f)
    if df.size <= w:
        raise ValueError("trace is shorter than the RoCoF window")
    slopes = (df[w:] - df[:-w]) / (w * trace.dt)
    k = int(np.argmin(df))
    tail = df[-max(1, int(round(0.05 * df.size))):]
    return FrequencyMetrics(
        rocof_worst=float(np.min(slopes)),
        fn=float(f0 + df[k]),
        t_nadir=float(trace.t[k]),
        f_ss=float(f0 + tail.mean()),
    )


def write_trace_csv(trace: SfrTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "delta_f_hz", "delta_pm_pu"])
        for t, f, p in zip(trace.t, trace.delta_f, trace.delta_pm_total):
            w.writerow([f"{t:.6f}", f"{f:.10g}", f"{p:.10g}"])


def write_metrics_csv(rows: Mapping[str, FrequencyMetrics], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario_id", "rocof", "fn", "t_nadir", "f_ss"])
        for sid, m in rows.items():
            w.writerow([sid, f"{m.rocof_worst:.10g}", f"{m.fn:.10g}",
                        f"{m.t_nadir:.6f}", f"{m.f_ss:.10g}"])
