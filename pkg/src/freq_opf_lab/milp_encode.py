"""Mixed-integer linear encoding of a trained ReLU predictor.

Each hidden neuron ``a = max(z, 0)`` with pre-activation bounds
``h_l <= z <= h_u`` becomes

    a >= 0,  a >= z,  a <= z - h_l (1 - B),  a <= h_u B,  B in {0, 1}

unless interval propagation proves it always on (``a = z``) or always off
(``a = 0``).  Inputs are raw MW values, so the parameters passed in must
already have the normalisation folded in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .lpsolve import LpProblem, MilpProblem, ModelBuilder
from .neural import MlpParams

STABLE_TOL = 1e-9

InputRef = Union[str, float]  # variable id or constant value


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class NeuronBounds:
    """Pre-activation interval; scalars or per-layer arrays."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape:
            raise EncodingError("lower/upper shapes differ")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise EncodingError("neuron bounds must be finite")
        if np.any(lo > hi):
            raise EncodingError("inverted neuron bounds (lower > upper)")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def __getitem__(self, j) -> "NeuronBounds":
        return NeuronBounds(self.lower[j], self.upper[j])

    def contains(self, z, tol: float = 0.0) -> bool:
        z = np.asarray(z)
        return bool(np.all(z >= self.lower - tol) and np.all(z <= self.upper + tol))

    @property
    def n_unstable(self) -> int:
        return int(np.sum((self.lower < 0) & (self.upper > STABLE_TOL)))


@dataclass(frozen=True)
class VarDecl:
    id: str
    lb: float
    ub: float


@dataclass
class ConstraintBlock:
    continuous: list[VarDecl] = field(default_factory=list)
    binaries: list[VarDecl] = field(default_factory=list)
    rows: list[tuple[dict[str, float], str, float, str]] = field(default_factory=list)
    outputs: dict[str, str] = field(default_factory=dict)  # "rocof"/"fn" -> var id
    bounds: list[NeuronBounds] = field(default_factory=list)

    def declared(self) -> set[str]:
        return {v.id for v in self.continuous} | {v.id for v in self.binaries}

    def extend(self, other: "ConstraintBlock") -> None:
        self.continuous += other.continuous
        self.binaries += other.binaries
        self.rows += other.rows

    @property
    def n_binaries(self) -> int:
        return len(self.binaries)


def propagate_bounds(params: MlpParams, lower, upper) -> list[NeuronBounds]:
    """Interval bounds on every pre-activation, hidden layers then the output layer.

    Uses the centre/radius form of interval arithmetic, which is exact for
    one affine map of a box.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.shape != (params.weights[0].shape[0],) or hi.shape != lo.shape:
        raise EncodingError("input bounds do not match the network input width")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise EncodingError("input bounds must be finite")
    if np.any(lo > hi):
        raise EncodingError("inverted input bounds")
    for w, b in zip(params.weights, params.biases):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise EncodingError("non-finite network parameter")

    out = []
    n = len(params.weights)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        mid = (lo + hi) / 2.0
        rad = (hi - lo) / 2.0
        zc = mid @ w + b
        zr = rad @ np.abs(w)
        zlo, zhi = zc - zr, zc + zr
        if not np.any(rad):  # point input: keep the forward value exactly
            zlo = zhi = zc
        out.append(NeuronBounds(zlo, zhi))
        if k < n - 1:
            lo, hi = np.maximum(zlo, 0.0), np.maximum(zhi, 0.0)
    return out


def encode_relu(z_var: str, a_var: str, bounds: NeuronBounds, b_var: str | None = None) -> ConstraintBlock:
    """Rows tying ``a_var = max(z_var, 0)``; declares ``a_var`` (and a binary if needed).

    ``z_var`` must be declared by the caller.
    """
    lo, hi = float(bounds.lower), float(bounds.upper)
    if lo > hi:
        raise EncodingError("inverted bounds")
    blk = ConstraintBlock()
    if hi <= STABLE_TOL:
        blk.continuous.append(VarDecl(a_var, 0.0, 0.0))
    elif lo >= 0.0:
        blk.continuous.append(VarDecl(a_var, lo, hi))
        blk.rows.append(({a_var: 1.0, z_var: -1.0}, "==", 0.0, f"{a_var}:on"))
    else:
        b_var = b_var or f"{a_var}:B"
        blk.continuous.append(VarDecl(a_var, 0.0, hi))
        blk.binaries.append(VarDecl(b_var, 0.0, 1.0))
        blk.rows += [
            ({a_var: 1.0, z_var: -1.0}, ">=", 0.0, f"{a_var}:ge_z"),
            # a <= z - h_l + h_l B
            ({a_var: 1.0, z_var: -1.0, b_var: -lo}, "<=", -lo, f"{a_var}:le_z"),
            ({a_var: 1.0, b_var: -hi}, "<=", 0.0, f"{a_var}:le_B"),
        ]
    return blk


def encode_network(params: MlpParams, inputs: Mapping[int, InputRef] | list[InputRef],
                   input_bounds: tuple[np.ndarray, np.ndarray] | None = None,
                   prefix: str = "nn") -> ConstraintBlock:
    """Encode ``params`` with input ``i`` bound to a variable id or a constant.

    ``input_bounds`` gives the box used for bound propagation; constant
    inputs are pinned in it automatically.  Variable inputs must be covered
    by that box for the encoding to be exact.
    """
    n_in = params.weights[0].shape[0]
    refs = list(inputs) if not isinstance(inputs, Mapping) else [inputs.get(i) for i in range(n_in)]
    if len(refs) != n_in or any(r is None for r in refs):
        missing = [i for i in range(n_in) if i >= len(refs) or refs[i] is None]
        raise EncodingError(f"unmapped network feature(s) {missing}")
    lo = np.zeros(n_in)
    hi = np.zeros(n_in)
    if input_bounds is not None:
        lo[:] = input_bounds[0]
        hi[:] = input_bounds[1]
    for i, r in enumerate(refs):
        if not isinstance(r, str):
            lo[i] = hi[i] = float(r)
        elif input_bounds is None:
            raise EncodingError(f"feature {i} is a variable but no input bounds were given")
    bounds = propagate_bounds(params, lo, hi)

    blk = ConstraintBlock(bounds=bounds)
    prev: list[InputRef] = refs
    n = len(params.weights)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        last = k == n - 1
        cur = []
        for j in range(w.shape[1]):
            z = f"{prefix}:z{k}_{j}"
            zb = bounds[k][j]
            blk.continuous.append(VarDecl(z, float(zb.lower), float(zb.upper)))
            coefs = {z: 1.0}
            rhs = float(b[j])
            for i, ref in enumerate(prev):
                if w[i, j] == 0.0:
                    continue
                if isinstance(ref, str):
                    coefs[ref] = coefs.get(ref, 0.0) - float(w[i, j])
                else:
                    rhs += float(w[i, j]) * ref
            blk.rows.append((coefs, "==", rhs, f"{z}:affine"))
            if last:
                cur.append(z)
            else:
                a = f"{prefix}:a{k}_{j}"
                blk.extend(encode_relu(z, a, zb, f"{prefix}:B{k}_{j}"))
                cur.append(a)
        prev = cur
    blk.outputs = {"rocof": prev[0], "fn": prev[1]}
    return blk


def output_limits(block: ConstraintBlock, r_lmt: float, f_lmt: float) -> ConstraintBlock:
    """Append ``rocof >= r_lmt`` and ``fn >= f_lmt``; infinite limits are skipped."""
    if not block.outputs:
        raise EncodingError("block exposes no output variables")
    if math.isfinite(r_lmt):
        block.rows.append(({block.outputs["rocof"]: 1.0}, ">=", float(r_lmt), "limit:rocof"))
    if math.isfinite(f_lmt):
        block.rows.append(({block.outputs["fn"]: 1.0}, ">=", float(f_lmt), "limit:fn"))
    return block


def add_block(builder: ModelBuilder, block: ConstraintBlock) -> None:
    """Declare the block's variables in ``builder`` and append its rows."""
    for v in block.continuous:
        builder.add_var(v.id, v.lb, v.ub)
    for v in block.binaries:
        builder.add_var(v.id, 0.0, 1.0, binary=True)
    for coefs, sense, rhs, tag in block.rows:
        builder.add_row(coefs, sense, rhs, tag)


def block_problem(block: ConstraintBlock, inputs: Mapping[str, tuple[float, float]] | None = None,
                  cost: Mapping[str, float] | None = None) -> MilpProblem:
    """Stand-alone MILP of a block: ``inputs`` declares input variables with bounds."""
    mb = ModelBuilder()
    for name, (lb, ub) in (inputs or {}).items():
        mb.add_var(name, lb, ub)
    add_block(mb, block)
    for name, c in (cost or {}).items():
        mb.add_cost(name, c)
    return mb.milp()


def block_lp(block: ConstraintBlock, **kw) -> LpProblem:
    return block_problem(block, **kw).lp
