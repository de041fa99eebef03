"""DC optimal power flow in three flavours and closed-loop verification.

* ``T-OPF``: piecewise-linear cost, B-theta flows, balance, limits.
* ``L-FCOPF``: adds the linearised RoCoF and nadir caps on the contingency
  unit's output, from the low-order aggregate model.
* ``DNN-FCOPF``: adds the Big-M encoding of the trained predictor with
  output limits.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import analytic
from .grid import CaseError, PowerCase
from .lpsolve import (MilpConfig, MilpProblem, ModelBuilder, PiecewiseCost, Solution,
                      piecewise_cost, solve_lp, solve_milp)
from .milp_encode import ConstraintBlock, add_block, encode_network, output_limits
from .neural import MlpParams, TrainedModel, activation_pattern, forward
from .sfr_sim import FrequencyMetrics, SfrTrace, build_full_order, compute_metrics, simulate

log = logging.getLogger(__name__)

T_OPF = "T-OPF"
L_FCOPF = "L-FCOPF"
DNN_FCOPF = "DNN-FCOPF"
VARIANTS = (T_OPF, L_FCOPF, DNN_FCOPF)

TIE_BREAK = 1e-5  # $/MWh on |p_i - p_j| between identical units
SEGMENTS = 8


class OpfError(RuntimeError):
    pass


def feature_names(case: PowerCase) -> list[str]:
    """Predictor input layout: generator outputs, loads, contingency one-hot."""
    return ([f"gen_{g}" for g in case.gen_ids] + [f"load_{b}" for b in case.load_buses]
            + [f"ctg_{g}" for g in case.gen_ids])


def features(case: PowerCase, dispatch: dict[str, float], tripped: str) -> np.ndarray:
    return np.array([dispatch[g] for g in case.gen_ids] + [case.loads[b] for b in case.load_buses]
                    + [1.0 if g == tripped else 0.0 for g in case.gen_ids])


@dataclass
class Formulation:
    variant: str
    case: PowerCase
    problem: MilpProblem
    pwl: dict[str, PiecewiseCost]
    contingencies: tuple[str, ...]
    r_lmt: float = -math.inf
    f_lmt: float = -math.inf
    low_order: dict[str, analytic.LowOrderParams] = field(default_factory=dict)
    blocks: dict[str, ConstraintBlock] = field(default_factory=dict)
    net: Optional[MlpParams] = None  # folded, raw units

    def var(self, kind: str, key: str) -> int:
        return self.problem.lp.index(f"{kind}:{key}")


@dataclass
class DispatchSolution:
    variant: str
    status: str
    dispatch: dict[str, float] = field(default_factory=dict)  # MW
    angles: dict[str, float] = field(default_factory=dict)  # rad
    flows: dict[str, float] = field(default_factory=dict)  # MW
    cost: float = math.nan  # piecewise-linear cost actually optimised, $/h
    quadratic_cost: float = math.nan
    pred_rocof: Optional[float] = None
    pred_fn: Optional[float] = None
    solve_ms: float = math.nan
    nodes: int = 0
    iterations: int = 0
    gap: float = 0.0
    tripped: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


# -- building --------------------------------------------------------------------

def _base_model(case: PowerCase, tie_groups: Sequence[Sequence[str]],
                segments: int = SEGMENTS) -> tuple[ModelBuilder, dict[str, PiecewiseCost]]:
    mb = ModelBuilder()
    pwl = {}
    for g in case.generators:
        pc = piecewise_cost(g.c2, g.c1, g.c0, g.p_min, g.p_max, segments)
        pwl[g.id] = pc
        mb.add_var(f"p:{g.id}", g.p_min, g.p_max)
        row = {f"p:{g.id}": 1.0}
        for k, (lo, hi, s) in enumerate(zip(pc.breakpoints[:-1], pc.breakpoints[1:], pc.slopes)):
            name = f"seg:{g.id}:{k}"
            mb.add_var(name, 0.0, hi - lo, cost=s)
            row[name] = -1.0
        mb.add_row(row, "==", g.p_min, f"pwl:{g.id}")
        mb.c0 += pc.base_cost
    for b in case.buses:
        fixed = b == case.reference_bus
        mb.add_var(f"th:{b}", 0.0 if fixed else -math.inf, 0.0 if fixed else math.inf)
    for ln in case.lines:
        mb.add_var(f"f:{ln.id}", -ln.thermal_limit, ln.thermal_limit)
        k = case.p_base / ln.reactance_x
        mb.add_row({f"f:{ln.id}": 1.0, f"th:{ln.from_bus}": -k, f"th:{ln.to_bus}": k}, "==", 0.0,
                   f"flow:{ln.id}")
    for b in case.buses:
        row: dict[str, float] = {}
        for g in case.generators:
            if g.bus == b:
                row[f"p:{g.id}"] = 1.0
        for ln in case.lines:
            if ln.from_bus == b:
                row[f"f:{ln.id}"] = row.get(f"f:{ln.id}", 0.0) - 1.0
            if ln.to_bus == b:
                row[f"f:{ln.id}"] = row.get(f"f:{ln.id}", 0.0) + 1.0
        load = case.loads.get(b, 0.0)
        if not row:
            if abs(load) > 0:
                raise CaseError(f"bus {b} carries load but has no generator or line")
            continue
        mb.add_row(row, "==", load, f"balance:{b}")
    # identical units: a tiny L1 penalty on neighbouring differences makes the
    # equal split the unique optimum among otherwise tied dispatches
    for grp in tie_groups:
        for a, b in zip(grp[:-1], grp[1:]):
            t = f"tie:{a}:{b}"
            mb.add_var(t, 0.0, math.inf, cost=TIE_BREAK)
            mb.add_row({t: 1.0, f"p:{a}": -1.0, f"p:{b}": 1.0}, ">=", 0.0, f"{t}:+")
            mb.add_row({t: 1.0, f"p:{a}": 1.0, f"p:{b}": -1.0}, ">=", 0.0, f"{t}:-")
    return mb, pwl


def _tie_groups(case: PowerCase, exclude: Sequence[str] = ()) -> list[list[str]]:
    out = []
    for grp in case.identical_groups():
        grp = [g for g in grp if g not in exclude]
        if len(grp) > 1:
            out.append(grp)
    return out


def _contingencies(case: PowerCase, contingencies: Sequence[str] | None) -> tuple[str, ...]:
    cts = tuple(contingencies) if contingencies else (case.contingency_unit,)
    for c in cts:
        if c not in case.gen_ids:
            raise CaseError(f"unknown generator id {c!r}")
    return cts


def build_topf(case: PowerCase, segments: int = SEGMENTS) -> Formulation:
    mb, pwl = _base_model(case, _tie_groups(case), segments)
    return Formulation(T_OPF, case, mb.milp(), pwl, (case.contingency_unit,))


def lfcopf_caps(case: PowerCase, unit: str, r_lmt: float, f_lmt: float,
                include_tripped: bool = False) -> tuple[float, float, analytic.LowOrderParams]:
    """Largest contingency-unit output (MW) allowed by the RoCoF and nadir rows."""
    c = case if unit == case.contingency_unit else replace(case, contingency_unit=unit)
    lo = analytic.aggregate_low_order(c)
    rocof_cap = math.inf
    if math.isfinite(r_lmt):
        h = analytic.in_service_inertia(c, include_tripped)
        rocof_cap = -r_lmt * 2.0 * h * c.p_base / c.f0
    fn_cap = math.inf
    if math.isfinite(f_lmt):
        gain = analytic.nadir_gain(lo)  # Hz per pu on base_mva
        fn_cap = (f_lmt - c.f0) / gain * lo.base_mva
    return rocof_cap, fn_cap, lo


def build_lfcopf(case: PowerCase, r_lmt: float, f_lmt: float,
                 contingencies: Sequence[str] | None = None, segments: int = SEGMENTS,
                 include_tripped: bool = False) -> Formulation:
    cts = _contingencies(case, contingencies)
    mb, pwl = _base_model(case, _tie_groups(case, cts), segments)
    lows = {}
    for c in cts:
        rocof_cap, fn_cap, lows[c] = lfcopf_caps(case, c, r_lmt, f_lmt, include_tripped)
        if math.isfinite(rocof_cap):
            mb.add_row({f"p:{c}": 1.0}, "<=", rocof_cap, f"rocof:{c}")
        if math.isfinite(fn_cap):
            mb.add_row({f"p:{c}": 1.0}, "<=", fn_cap, f"nadir:{c}")
    return Formulation(L_FCOPF, case, mb.milp(), pwl, cts, r_lmt, f_lmt, low_order=lows)


def build_dnnfcopf(case: PowerCase, model: TrainedModel, r_lmt: float, f_lmt: float,
                   contingencies: Sequence[str] | None = None,
                   segments: int = SEGMENTS) -> Formulation:
    names = feature_names(case)
    if list(model.feature_names) != names:
        missing = sorted(set(names) - set(model.feature_names))
        raise OpfError(f"model features do not match the case (unmapped: {missing or 'order differs'})")
    cts = _contingencies(case, contingencies)
    mb, pwl = _base_model(case, _tie_groups(case, cts), segments)
    net = model.folded()
    gen_lo = np.array([g.p_min for g in case.generators])
    gen_hi = np.array([g.p_max for g in case.generators])
    blocks = {}
    for c in cts:
        refs = ([f"p:{g}" for g in case.gen_ids] + [case.loads[b] for b in case.load_buses]
                + [1.0 if g == c else 0.0 for g in case.gen_ids])
        n_rest = len(refs) - len(gen_lo)
        box = (np.r_[gen_lo, np.zeros(n_rest)], np.r_[gen_hi, np.zeros(n_rest)])
        blk = encode_network(net, refs, box, prefix=f"nn{c}")
        output_limits(blk, r_lmt, f_lmt)
        add_block(mb, blk)
        blocks[c] = blk
    return Formulation(DNN_FCOPF, case, mb.milp(), pwl, cts, r_lmt, f_lmt, blocks=blocks, net=net)


# -- solving -----------------------------------------------------------------------

def _dispatch_of(form: Formulation, x: np.ndarray) -> dict[str, float]:
    return {g: float(x[form.var("p", g)]) for g in form.case.gen_ids}


def activation_hook(form: Formulation):
    """Incumbent heuristic: fix binaries to the true activation pattern of a relaxed dispatch.

    Patterns already tried are skipped, so each distinct pattern costs one LP.
    """
    lp = form.problem.lp
    binary_index = {lp.names[j]: j for j in form.problem.binaries}
    seen: set[bytes] = set()

    def hook(x_relax: np.ndarray, problem: MilpProblem) -> Optional[np.ndarray]:
        disp = _dispatch_of(form, x_relax)
        lb, ub = lp.lb.copy(), lp.ub.copy()
        key = []
        for c, blk in form.blocks.items():
            pattern = activation_pattern(form.net, features(form.case, disp, c))
            for k, layer in enumerate(pattern):
                for j, on in enumerate(layer):
                    name = f"nn{c}:B{k}_{j}"
                    if name in binary_index:
                        lb[binary_index[name]] = ub[binary_index[name]] = float(on)
                key.append(np.packbits(layer).tobytes())
        sig = b"|".join(key)
        if sig in seen:
            return None
        seen.add(sig)
        sol = solve_lp(lp.with_bounds(lb, ub))
        return sol.x if sol.ok else None

    return hook


def solve_variant(form: Formulation, use_hook: bool = True,
                  config: MilpConfig | None = None) -> DispatchSolution:
    cfg = config or MilpConfig()
    if use_hook and form.variant == DNN_FCOPF and cfg.incumbent_hook is None:
        cfg = replace(cfg, incumbent_hook=activation_hook(form))
    if form.problem.binaries:
        sol = solve_milp(form.problem, cfg)
    else:
        sol = solve_lp(form.problem.lp)
    return _to_dispatch(form, sol)


def _to_dispatch(form: Formulation, sol: Solution) -> DispatchSolution:
    case = form.case
    out = DispatchSolution(form.variant, sol.status, solve_ms=sol.wall_time * 1e3, nodes=sol.nodes,
                           iterations=sol.iterations, gap=sol.gap, tripped=form.contingencies[0])
    if sol.x is None or sol.status not in ("optimal", "node-limit"):
        return out
    x = sol.x
    out.dispatch = _dispatch_of(form, x)
    out.angles = {b: float(x[form.var("th", b)]) for b in case.buses}
    out.flows = {ln.id: float(x[form.var("f", ln.id)]) for ln in case.lines}
    out.cost = float(sum(form.pwl[g](p) for g, p in out.dispatch.items()))
    out.quadratic_cost = float(sum(case.generator(g).cost(p) for g, p in out.dispatch.items()))
    c = form.contingencies[0]
    p_d = out.dispatch[c]
    if form.variant == L_FCOPF:
        ccase = case if c == case.contingency_unit else replace(case, contingency_unit=c)
        out.pred_rocof = analytic.worst_rocof(ccase, p_d)
        lo = form.low_order[c]
        out.pred_fn = case.f0 + analytic.nadir_deviation(lo, analytic.disturbance_pu(lo, p_d))
    elif form.variant == DNN_FCOPF:
        y = forward(form.net, features(case, out.dispatch, c))
        blk = form.blocks[c]
        solver_y = np.array([x[form.problem.lp.index(blk.outputs["rocof"])],
                             x[form.problem.lp.index(blk.outputs["fn"])]])
        if np.max(np.abs(solver_y - y)) > 1e-6:
            raise OpfError(f"encoded outputs {solver_y} differ from the forward pass {y}")
        out.pred_rocof, out.pred_fn = float(y[0]), float(y[1])
    return out


def check_dispatch(case: PowerCase, sol: DispatchSolution, tol: float = 1e-5) -> list[str]:
    """Grid-invariant violations of a solved dispatch (empty when clean)."""
    problems = []
    for g in case.generators:
        p = sol.dispatch[g.id]
        if p < g.p_min - 1e-7 or p > g.p_max + 1e-7:
            problems.append(f"{g.id}: output {p:.6f} outside [{g.p_min}, {g.p_max}]")
    for ln in case.lines:
        f = sol.flows[ln.id]
        if abs(f) > ln.thermal_limit + tol:
            problems.append(f"line {ln.id}: |flow| {abs(f):.6f} exceeds {ln.thermal_limit}")
        expect = case.p_base * (sol.angles[ln.from_bus] - sol.angles[ln.to_bus]) / ln.reactance_x
        if abs(f - expect) > tol:
            problems.append(f"line {ln.id}: flow does not match angles")
    for b in case.buses:
        inj = sum(p for g, p in sol.dispatch.items() if case.generator(g).bus == b)
        inj -= sum(sol.flows[ln.id] for ln in case.lines if ln.from_bus == b)
        inj += sum(sol.flows[ln.id] for ln in case.lines if ln.to_bus == b)
        if abs(inj - case.loads.get(b, 0.0)) > tol:
            problems.append(f"bus {b}: balance residual {inj - case.loads.get(b, 0.0):.3e}")
    return problems


# -- closed-loop verification -----------------------------------------------------------

@dataclass
class Verification:
    metrics: FrequencyMetrics
    trace: SfrTrace
    err_rocof_pct: Optional[float]
    err_fn_pct: Optional[float]


def relative_error_pct(pred: Optional[float], sim: float) -> Optional[float]:
    """``|y_d - y_s| / |y_s| * 100``; ``None`` when there is no prediction."""
    if pred is None:
        return None
    if sim == 0:
        return 0.0 if pred == 0 else math.inf
    return abs(pred - sim) / abs(sim) * 100.0


def verify_dispatch(case: PowerCase, sol: DispatchSolution, tripped: str | None = None,
                    duration: float = 30.0, dt: float = 1e-3) -> Verification:
    if not sol.dispatch:
        raise OpfError(f"{sol.variant}: no dispatch to verify (status {sol.status})")
    tripped = tripped or sol.tripped or case.contingency_unit
    system = build_full_order(case, sol.dispatch, tripped)
    trace = simulate(system, duration, dt)
    m = compute_metrics(trace, case.f0)
    return Verification(m, trace, relative_error_pct(sol.pred_rocof, m.rocof_worst),
                        relative_error_pct(sol.pred_fn, m.fn))


SOLUTION_HEADER = ["hour", "variant", "cost", "solve_ms", "pred_rocof", "pred_fn",
                   "sim_rocof", "sim_fn", "err_rocof_pct", "err_fn_pct"]
