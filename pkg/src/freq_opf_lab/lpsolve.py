"""Linear and mixed-integer linear programming.

* :func:`piecewise_cost` turns a convex quadratic cost into secant segments.
* :func:`solve_lp` is a dense, bounded-variable primal simplex (two-phase,
  Dantzig pricing with a Bland fallback once degenerate pivots stall).
* :func:`solve_milp` is best-first branch-and-bound over binary variables.

Problems are assembled with :class:`ModelBuilder`, which keeps variable
names so solutions can be read back by name.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

FEAS_TOL = 1e-7
INT_TOL = 1e-6
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"
NODE_LIMIT = "node-limit"

_SENSES = ("<=", ">=", "==")


@dataclass
class LpProblem:
    """``minimize c @ x`` subject to ``A x (sense) b`` and ``lb <= x <= ub``."""

    c: np.ndarray
    A: np.ndarray
    senses: list[str]
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    names: list[str]
    c0: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.asarray(self.A, dtype=float).reshape(len(self.senses), len(self.c))
        self.b = np.asarray(self.b, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A))
                and np.all(np.isfinite(self.b))):
            raise ValueError("LP coefficients must be finite")
        if np.any(self.lb > self.ub):
            bad = int(np.argmax(self.lb > self.ub))
            raise ValueError(f"variable {self.names[bad]!r} has lb > ub")
        for s in self.senses:
            if s not in _SENSES:
                raise ValueError(f"unknown row sense {s!r}")

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return len(self.senses)

    def index(self, name: str) -> int:
        pos = self.__dict__.get("_pos")
        if pos is None:
            pos = self.__dict__["_pos"] = {n: j for j, n in enumerate(self.names)}
        return pos[name]

    def with_bounds(self, lb=None, ub=None) -> "LpProblem":
        return LpProblem(self.c, self.A, self.senses, self.b,
                         self.lb if lb is None else lb, self.ub if ub is None else ub,
                         self.names, self.c0)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest row or bound violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        r = self.A @ x - self.b
        viol = 0.0
        for s, ri in zip(self.senses, r):
            if s == "<=":
                viol = max(viol, ri)
            elif s == ">=":
                viol = max(viol, -ri)
            else:
                viol = max(viol, abs(ri))
        viol = max(viol, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))
        return viol

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.c0


@dataclass
class MilpProblem:
    lp: LpProblem
    binaries: list[int]

    def __post_init__(self):
        for j in self.binaries:
            if self.lp.lb[j] < 0 or self.lp.ub[j] > 1:
                raise ValueError(f"binary {self.lp.names[j]!r} must have bounds within [0, 1]")


@dataclass
class Solution:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = math.nan
    names: Sequence[str] = ()
    iterations: int = 0
    nodes: int = 0
    wall_time: float = 0.0
    gap: float = math.nan
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, name: str) -> float:
        return float(self.x[list(self.names).index(name)])

    def values(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.x)}


class ModelBuilder:
    """Incremental construction of an LP/MILP with named variables."""

    def __init__(self):
        self.names: list[str] = []
        self._index: dict[str, int] = {}
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.cost: list[float] = []
        self.rows: list[tuple[dict[int, float], str, float, str]] = []
        self.binaries: list[int] = []
        self.c0 = 0.0

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                cost: float = 0.0, binary: bool = False) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        j = len(self.names)
        self.names.append(name)
        self._index[name] = j
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.cost.append(float(cost))
        if binary:
            self.binaries.append(j)
        return j

    def var(self, name: str) -> int:
        return self._index[name]

    def has_var(self, name: str) -> bool:
        return name in self._index

    def add_cost(self, name: str, coef: float) -> None:
        self.cost[self._index[name]] += coef

    def add_row(self, coefs: Mapping[str, float], sense: str, rhs: float, tag: str = "") -> None:
        if sense not in _SENSES:
            raise ValueError(f"unknown row sense {sense!r}")
        row: dict[int, float] = {}
        for name, a in coefs.items():
            if name not in self._index:
                raise KeyError(f"row {tag!r} references undeclared variable {name!r}")
            j = self._index[name]
            row[j] = row.get(j, 0.0) + float(a)
        self.rows.append((row, sense, float(rhs), tag))

    def lp(self) -> LpProblem:
        A = np.zeros((len(self.rows), len(self.names)))
        for i, (row, _, _, _) in enumerate(self.rows):
            for j, a in row.items():
                A[i, j] = a
        return LpProblem(np.array(self.cost), A, [r[1] for r in self.rows],
                         np.array([r[2] for r in self.rows]), np.array(self.lb),
                         np.array(self.ub), list(self.names), self.c0)

    def milp(self) -> MilpProblem:
        return MilpProblem(self.lp(), sorted(self.binaries))


# -- cost linearisation ----------------------------------------------------

@dataclass(frozen=True)
class PiecewiseCost:
    breakpoints: np.ndarray
    slopes: np.ndarray
    base_cost: float  # cost at p_min
    max_gap: float

    def __call__(self, p: float) -> float:
        """Evaluate the piecewise-linear interpolant."""
        total = self.base_cost
        for lo, hi, s in zip(self.breakpoints[:-1], self.breakpoints[1:], self.slopes):
            total += s * min(max(p - lo, 0.0), hi - lo)
        return total


def piecewise_cost(c2: float, c1: float, c0: float, p_min: float, p_max: float,
                   segments: int = 8) -> PiecewiseCost:
    """Secant linearisation of ``c2 p^2 + c1 p + c0`` on ``[p_min, p_max]``.

    Slopes are nondecreasing, so the segments can be filled in order by an LP
    without binaries.  ``max_gap`` is the worst over-estimate of the secants,
    ``c2 * w**2 / 4`` for segment width ``w``.
    """
    if c2 < 0:
        raise ValueError("c2 must be >= 0")
    if segments < 1:
        raise ValueError("segments must be >= 1")
    if not (p_min <= p_max):
        raise ValueError(f"invalid range [{p_min}, {p_max}]")
    if c2 == 0 or p_max == p_min:
        segments = 1
    bp = np.linspace(p_min, p_max, segments + 1)
    f = c2 * bp ** 2 + c1 * bp + c0
    w = np.diff(bp)
    slopes = np.where(w > 0, np.diff(f) / np.where(w > 0, w, 1.0), c1 + 2 * c2 * p_min)
    width = (p_max - p_min) / segments
    return PiecewiseCost(bp, slopes, float(f[0]), c2 * width ** 2 / 4.0)


# -- simplex -----------------------------------------------------------------

class _StandardForm:
    """``A x = b, 0 <= x <= u`` obtained from an :class:`LpProblem`.

    Original variable ``j`` is recovered as ``shift[j] + sign[j] * x[col[j]]``
    (minus ``x[neg[j]]`` when the variable was free and split).
    """

    def __init__(self, p: LpProblem):
        n = p.n_vars
        cols: list[np.ndarray] = []
        cost: list[float] = []
        upper: list[float] = []
        self.col = -np.ones(n, dtype=int)  # -1: fixed variable, no column
        self.neg = -np.ones(n, dtype=int)
        self.sign = np.ones(n)
        self.shift = np.zeros(n)
        b = p.b.astype(float).copy()
        c0 = p.c0
        for j in range(n):
            a = p.A[:, j]
            lo, hi = p.lb[j], p.ub[j]
            if math.isfinite(lo):
                self.shift[j] = lo
                sgn = 1.0
                u = hi - lo
            elif math.isfinite(hi):
                self.shift[j] = hi
                sgn = -1.0
                u = math.inf
            else:
                sgn = 1.0
                u = math.inf
            self.sign[j] = sgn
            b -= a * self.shift[j]
            c0 += p.c[j] * self.shift[j]
            if u <= 0.0:
                continue
            self.col[j] = len(cols)
            cols.append(sgn * a)
            cost.append(sgn * p.c[j])
            upper.append(u)
            if not math.isfinite(lo) and not math.isfinite(hi):
                self.neg[j] = len(cols)
                cols.append(-a)
                cost.append(-p.c[j])
                upper.append(math.inf)
        self.n_struct = len(cols)
        self.slack_sign = np.zeros(p.n_rows)  # +1 / -1 for inequality rows
        for i, s in enumerate(p.senses):
            if s == "==":
                continue
            e = np.zeros(p.n_rows)
            e[i] = 1.0 if s == "<=" else -1.0
            self.slack_sign[i] = e[i]
            cols.append(e)
            cost.append(0.0)
            upper.append(math.inf)
        self.A = np.column_stack(cols) if cols else np.zeros((p.n_rows, 0))
        self.b = b
        self.c = np.array(cost)
        self.u = np.array(upper)
        self.c0 = c0

    def slack_basis(self) -> np.ndarray:
        """Per row, the column of a slack usable as an initial basic variable, else -1."""
        out = -np.ones(len(self.b), dtype=int)
        k = self.n_struct
        for i, sg in enumerate(self.slack_sign):
            if sg == 0.0:
                continue
            if sg * (1.0 if self.b[i] >= 0 else -1.0) > 0:
                out[i] = k
            k += 1
        return out

    def recover(self, z: np.ndarray) -> np.ndarray:
        x = self.shift.copy()
        has = self.col >= 0
        x[has] += self.sign[has] * z[self.col[has]]
        split = self.neg >= 0
        x[split] -= z[self.neg[split]]
        return x


class _Tableau:
    """Bounded-variable simplex tableau ``T = B^-1 A`` over ``[A | I_art]``."""

    def __init__(self, A: np.ndarray, b: np.ndarray, u: np.ndarray, max_iter: int,
                 start: np.ndarray | None = None):
        m, n = A.shape
        flip = b < 0
        A = A.copy()
        b = b.copy()
        A[flip] *= -1
        b[flip] *= -1
        # rows with a usable slack start from it; the rest get an artificial
        start = -np.ones(m, dtype=int) if start is None else start
        need = np.flatnonzero(start < 0)
        art = np.zeros((m, need.size))
        art[need, np.arange(need.size)] = 1.0
        self.m, self.n = m, n
        self.Afull = np.hstack([A, art])
        self.b = b
        self.u = np.concatenate([u, np.full(need.size, math.inf)])
        self.basis = start.copy()
        self.basis[need] = n + np.arange(need.size)
        self.at_upper = np.zeros(n + need.size, dtype=bool)
        self.T = self.Afull.copy()
        self.xB = b.copy()
        self.iterations = 0
        self.max_iter = max_iter
        self.artificial = np.zeros(n + need.size, dtype=bool)
        self.artificial[n:] = True

    def nonbasic_values(self) -> np.ndarray:
        x = np.zeros(self.Afull.shape[1])
        x[self.at_upper] = self.u[self.at_upper]
        x[self.basis] = 0.0
        return x

    def x(self) -> np.ndarray:
        x = self.nonbasic_values()
        x[self.basis] = self.xB
        return x

    def refactor(self) -> None:
        B = self.Afull[:, self.basis]
        try:
            self.T = np.linalg.solve(B, self.Afull)
        except np.linalg.LinAlgError:
            log.debug("basis matrix singular during refactorisation; keeping tableau")
            return
        xN = self.nonbasic_values()
        self.xB = np.linalg.solve(B, self.b - self.Afull @ xN)

    def optimise(self, cost: np.ndarray) -> str:
        """Run primal simplex iterations for ``cost`` from the current basis."""
        d = cost - cost[self.basis] @ self.T
        degenerate = 0
        bland = False
        since_refactor = 0
        fixed = self.u <= 0.0
        while True:
            if self.iterations >= self.max_iter:
                return ITERATION_LIMIT
            eligible = (((d < -OPT_TOL) & ~self.at_upper) | ((d > OPT_TOL) & self.at_upper)) & ~fixed
            eligible[self.basis] = False
            cand = np.flatnonzero(eligible)
            if cand.size == 0:
                # confirm with a fresh factorisation before declaring optimality
                if since_refactor:
                    self.refactor()
                    d = cost - cost[self.basis] @ self.T
                    since_refactor = 0
                    continue
                return OPTIMAL
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            s = 1.0 if not self.at_upper[j] else -1.0
            y = self.T[:, j]
            sy = s * y
            theta = self.u[j]
            leave = -1
            leave_to_upper = False
            ub_basic = self.u[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                down = sy > PIVOT_TOL
                r_down = np.where(down, np.maximum(self.xB, 0.0) / np.where(down, sy, 1.0), np.inf)
                up = (sy < -PIVOT_TOL) & np.isfinite(ub_basic)
                r_up = np.where(up, np.maximum(ub_basic - self.xB, 0.0) / np.where(up, -sy, 1.0), np.inf)
            ratios = np.minimum(r_down, r_up)
            if ratios.size:
                rmin = float(np.min(ratios))
                if rmin < theta:
                    # among near-ties prefer the largest pivot magnitude
                    ties = np.flatnonzero(ratios <= rmin + 1e-12)
                    if bland:
                        r = int(ties[np.argmin(self.basis[ties])])
                    else:
                        r = int(ties[np.argmax(np.abs(y[ties]))])
                    theta = rmin
                    leave = r
                    leave_to_upper = bool(r_up[r] <= r_down[r])
            if not math.isfinite(theta):
                return UNBOUNDED
            self.iterations += 1
            since_refactor += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > 50:
                    bland = True
            else:
                degenerate = 0
                bland = False
            self.xB -= theta * sy
            if leave < 0:
                self.at_upper[j] = not self.at_upper[j]
                continue
            entering_value = (self.u[j] if self.at_upper[j] else 0.0) + s * theta
            old = self.basis[leave]
            piv = self.T[leave, j]
            self.T[leave] /= piv
            col = self.T[:, j].copy()
            col[leave] = 0.0
            self.T -= np.outer(col, self.T[leave])
            d -= d[j] * self.T[leave]
            self.basis[leave] = j
            self.at_upper[j] = False
            self.xB[leave] = entering_value
            self.at_upper[old] = leave_to_upper and math.isfinite(self.u[old])
            if self.artificial[old]:
                # artificials never re-enter once they leave the basis
                self.u[old] = 0.0
                self.at_upper[old] = False
                fixed[old] = True
            if since_refactor >= 100:
                self.refactor()
                d = cost - cost[self.basis] @ self.T
                since_refactor = 0


def solve_lp(problem: LpProblem, max_iter: int = 50_000) -> Solution:
    """Solve an LP to optimality (or report infeasible/unbounded/iteration limit)."""
    t0 = time.perf_counter()
    sf = _StandardForm(problem)
    m, n = sf.A.shape
    names = problem.names
    if m == 0:
        # bounds only: each variable sits at its cheapest bound
        z = np.zeros(n)
        for j in range(n):
            if sf.c[j] < 0:
                if not math.isfinite(sf.u[j]):
                    return Solution(UNBOUNDED, names=names, wall_time=time.perf_counter() - t0)
                z[j] = sf.u[j]
        x = sf.recover(z)
        return Solution(OPTIMAL, x, problem.objective(x), names, wall_time=time.perf_counter() - t0)

    if n == 0:
        # every variable fixed: only row feasibility is left to decide
        x = sf.recover(z=np.zeros(0))
        if problem.max_violation(x) > FEAS_TOL * max(1.0, float(np.max(np.abs(problem.b), initial=0.0))):
            return Solution(INFEASIBLE, names=names, wall_time=time.perf_counter() - t0,
                            message="fixed variables violate a row")
        return Solution(OPTIMAL, x, problem.objective(x), names, wall_time=time.perf_counter() - t0)

    tab = _Tableau(sf.A, sf.b, sf.u, max_iter, sf.slack_basis())
    n_art = tab.Afull.shape[1] - n
    phase1 = np.concatenate([np.zeros(n), np.ones(n_art)])
    status = tab.optimise(phase1)
    if status == ITERATION_LIMIT:
        return Solution(status, names=names, iterations=tab.iterations,
                        wall_time=time.perf_counter() - t0, message="phase 1 iteration limit")
    infeas = float(phase1 @ tab.x())
    scale = max(1.0, float(np.max(np.abs(sf.b), initial=0.0)))
    if infeas > FEAS_TOL * scale:
        return Solution(INFEASIBLE, names=names, iterations=tab.iterations,
                        wall_time=time.perf_counter() - t0,
                        message=f"phase 1 residual {infeas:.3e}")
    # pin artificials at zero; basic ones at zero level are pivoted out where possible
    tab.u[n:] = 0.0
    tab.at_upper[n:] = False
    for r in range(m):
        k = tab.basis[r]
        if k < n:
            continue
        row = tab.T[r, :n].copy()
        row[tab.basis[tab.basis < n]] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > 1e-7:
            piv = tab.T[r, j]
            xj = tab.nonbasic_values()[j]
            tab.T[r] /= piv
            col = tab.T[:, j].copy()
            col[r] = 0.0
            tab.T -= np.outer(col, tab.T[r])
            tab.basis[r] = j
            tab.at_upper[j] = False
            tab.xB[r] = xj
    tab.refactor()
    phase2 = np.concatenate([sf.c, np.zeros(n_art)])
    status = tab.optimise(phase2)
    elapsed = time.perf_counter() - t0
    if status != OPTIMAL:
        return Solution(status, names=names, iterations=tab.iterations, wall_time=elapsed)
    z = tab.x()[:n]
    x = sf.recover(z)
    x = np.minimum(np.maximum(x, problem.lb), problem.ub)
    return Solution(OPTIMAL, x, problem.objective(x), names, iterations=tab.iterations,
                    wall_time=elapsed)


# -- branch and bound --------------------------------------------------------

IncumbentHook = Callable[[np.ndarray, MilpProblem], Optional[np.ndarray]]


@dataclass
class MilpConfig:
    node_limit: int = 20_000
    gap_abs: float = 1e-6
    time_limit: float = math.inf
    incumbent_hook: Optional[IncumbentHook] = None


@dataclass(order=True)
class _Node:
    bound: float
    neg_depth: int
    seq: int
    fixes: dict = field(compare=False)


def _fractional(x: np.ndarray, binaries: Sequence[int]) -> Optional[int]:
    best, best_dist = None, INT_TOL
    for j in binaries:
        frac = x[j] - math.floor(x[j])
        dist = min(frac, 1.0 - frac)
        if dist > best_dist + 1e-12:
            best, best_dist = j, dist
    return best


def solve_milp(problem: MilpProblem, config: MilpConfig | None = None) -> Solution:
    """Best-first branch-and-bound on LP relaxations (most-fractional branching)."""
    cfg = config or MilpConfig()
    t0 = time.perf_counter()
    lp = problem.lp
    bins = list(problem.binaries)
    names = lp.names
    best_x: Optional[np.ndarray] = None
    best_obj = math.inf
    iters = 0
    nodes = 0
    seq = 0
    heap: list[_Node] = [_Node(-math.inf, 0, 0, {})]

    def offer(x: np.ndarray) -> None:
        nonlocal best_x, best_obj
        if x is None:
            return
        if lp.max_violation(x) > 10 * FEAS_TOL:
            return
        if any(min(x[j], 1 - x[j]) > INT_TOL for j in bins):
            return
        obj = lp.objective(x)
        if obj < best_obj - 1e-12:
            xr = x.copy()
            xr[bins] = np.round(xr[bins])
            best_x, best_obj = xr, obj

    status = OPTIMAL
    while heap:
        if best_x is not None and heap[0].bound >= best_obj - cfg.gap_abs:
            break
        if nodes >= cfg.node_limit or time.perf_counter() - t0 > cfg.time_limit:
            status = NODE_LIMIT
            break
        node = heapq.heappop(heap)
        lb = lp.lb.copy()
        ub = lp.ub.copy()
        for j, v in node.fixes.items():
            lb[j] = ub[j] = v
        sol = solve_lp(lp.with_bounds(lb, ub))
        nodes += 1
        iters += sol.iterations
        if sol.status == UNBOUNDED and not node.fixes:
            return Solution(UNBOUNDED, names=names, iterations=iters, nodes=nodes,
                            wall_time=time.perf_counter() - t0)
        if not sol.ok:
            continue
        # children can never beat their parent relaxation
        assert sol.objective >= node.bound - 1e-6 * max(1.0, abs(node.bound)), \
            "relaxation bound decreased after branching"
        if sol.objective >= best_obj - cfg.gap_abs:
            continue
        j = _fractional(sol.x, bins)
        if j is None:
            offer(sol.x)
            continue
        if cfg.incumbent_hook is not None:
            offer(cfg.incumbent_hook(sol.x, problem))
            if sol.objective >= best_obj - cfg.gap_abs:
                continue
        for v in (1.0, 0.0) if sol.x[j] >= 0.5 else (0.0, 1.0):
            seq += 1
            heapq.heappush(heap, _Node(sol.objective, -(len(node.fixes) + 1), seq,
                                       {**node.fixes, j: v}))
    elapsed = time.perf_counter() - t0
    if best_x is None:
        st = INFEASIBLE if status == OPTIMAL else status
        return Solution(st, names=names, iterations=iters, nodes=nodes, wall_time=elapsed)
    lower = min([best_obj] + [n.bound for n in heap]) if status != OPTIMAL else best_obj
    gap = max(0.0, best_obj - lower) if status != OPTIMAL else 0.0
    return Solution(status, best_x, best_obj, names, iterations=iters, nodes=nodes,
                    wall_time=elapsed, gap=gap)


# -- LP-format text ------------------------------------------------------------

def _term(coef: float, name: str, first: bool) -> str:
    sign = "-" if coef < 0 else "+"
    text = f"{sign} {abs(coef):.12g} {name}"
    return text[2:] if first and coef >= 0 else text


def to_lp_format(problem: LpProblem | MilpProblem) -> str:
    """Render the problem in CPLEX LP text format for external cross-checks."""
    if isinstance(problem, MilpProblem):
        lp, bins = problem.lp, set(problem.binaries)
    else:
        lp, bins = problem, set()
    safe = [n.replace("[", "(").replace("]", ")").replace(" ", "_") for n in lp.names]

    def expr(coefs: Iterable[tuple[float, int]]) -> str:
        parts = []
        for k, (a, j) in enumerate(coefs):
            parts.append(_term(a, safe[j], k == 0))
        return " ".join(parts) if parts else "0"

    out = ["\\ generated by freq_opf_lab", "Minimize",
           " obj: " + expr((a, j) for j, a in enumerate(lp.c) if a != 0), "Subject To"]
    sym = {"<=": "<=", ">=": ">=", "==": "="}
    for i in range(lp.n_rows):
        row = [(a, j) for j, a in enumerate(lp.A[i]) if a != 0]
        out.append(f" r{i}: {expr(row)} {sym[lp.senses[i]]} {lp.b[i]:.12g}")
    out.append("Bounds")
    for j, n in enumerate(safe):
        lo, hi = lp.lb[j], lp.ub[j]
        lo_s = "-inf" if not math.isfinite(lo) else f"{lo:.12g}"
        hi_s = "+inf" if not math.isfinite(hi) else f"{hi:.12g}"
        out.append(f" {lo_s} <= {n} <= {hi_s}")
    if bins:
        out.append("Binaries")
        out.append(" " + " ".join(safe[j] for j in sorted(bins)))
    out.append("End")
    return "\n".join(out) + "\n"
