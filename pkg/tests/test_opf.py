import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freq_opf_lab.grid import PowerCase, scale_loads, validate_case
from freq_opf_lab.lpsolve import INFEASIBLE
from freq_opf_lab.milp_encode import propagate_bounds
from freq_opf_lab.neural import MlpParams, MlpSpec, Normalizer, TrainedModel, forward, init_params
from freq_opf_lab.opf import (DNN_FCOPF, L_FCOPF, T_OPF, DispatchSolution, OpfError, build_dnnfcopf,
                              build_lfcopf, build_topf, check_dispatch, feature_names, features,
                              relative_error_pct, solve_variant, verify_dispatch)
from conftest import make_gen

# regression fixture: 9-bus T-OPF at base load, 8 cost segments per unit
IEEE9_TOPF_COST = 5250.885953515628


def secant_cost(g, p, segments=8):
    """Independent PWL evaluation: interpolate the quadratic between breakpoints."""
    bp = np.linspace(g.p_min, g.p_max, segments + 1)
    return float(np.interp(p, bp, g.c2 * bp ** 2 + g.c1 * bp + g.c0))


def synthetic_model(case, seed, hidden=(8, 8), centre=(-0.45, 59.6), spread=(0.2, 0.3)):
    """Random-weight predictor with the case's feature layout and plausible output ranges."""
    names = feature_names(case)
    n = len(names)
    p = init_params(MlpSpec(n, hidden, 2), seed)
    rng = np.random.default_rng(seed)
    params = MlpParams(p.weights, [rng.normal(scale=0.3, size=b.shape) for b in p.biases])
    lo = np.array([g.p_min for g in case.generators] + [0.0] * (n - len(case.generators)))
    hi = np.array([g.p_max for g in case.generators]
                  + [2 * case.loads[b] for b in case.load_buses] + [1.0] * len(case.gen_ids))
    norm = Normalizer(lo, hi - lo, np.array(centre), np.array(spread))
    return TrainedModel(params, norm, names)


def constant_model(case, value=(-0.3, 59.8)):
    names = feature_names(case)
    spec = MlpSpec(len(names), (4,), 2)
    params = MlpParams([np.zeros((spec.input_dim, 4)), np.zeros((4, 2))],
                       [np.zeros(4), np.array(value, dtype=float)])
    return TrainedModel(params, Normalizer.identity(len(names)), names)


# -- T-OPF -------------------------------------------------------------------------

def test_single_bus_forced_dispatch():
    # a zero-capacity designated contingency unit keeps the case N-1 valid
    gens = (make_gen("G", "1"), make_gen("S", "1", p_max=0.0))
    case = validate_case(PowerCase(buses=("1",), lines=(), generators=gens,
                                   loads={"1": 50.0}, contingency_unit="S", reference_bus="1"))
    sol = solve_variant(build_topf(case))
    assert sol.ok and sol.nodes == 0
    assert sol.dispatch["G"] == pytest.approx(50.0)
    assert sol.cost == pytest.approx(secant_cost(case.generators[0], 50.0))


def test_two_bus_line_binds(toy2):
    sol = solve_variant(build_topf(toy2))
    assert sol.ok
    # cheap remote unit fills the line, the dearer local unit covers the rest
    assert sol.flows["L1"] == pytest.approx(30.0)
    assert sol.dispatch == pytest.approx({"A": 30.0, "B": 20.0, "C": 0.0})
    expect = sum(secant_cost(toy2.generator(g), p) for g, p in sol.dispatch.items())
    assert sol.cost == pytest.approx(expect)
    # flow follows the angle difference
    assert sol.angles["1"] == 0.0
    assert sol.angles["2"] == pytest.approx(-30.0 * 0.1 / toy2.p_base)
    assert check_dispatch(toy2, sol) == []


def test_infeasible_detected_at_solve(toy2):
    case = replace(toy2, loads={"2": 500.0})
    form = build_topf(case)  # builds fine
    assert solve_variant(form).status == INFEASIBLE


def test_ieee9_regression_fixture(case9):
    sol = solve_variant(build_topf(case9))
    assert sol.ok and sol.nodes == 0
    assert sol.cost == pytest.approx(IEEE9_TOPF_COST, rel=1e-9)
    assert check_dispatch(case9, sol) == []
    assert sum(sol.dispatch.values()) == pytest.approx(sum(case9.loads.values()))
    # the published figure uses other cost data; same order of magnitude only
    assert 1e3 < sol.cost < 1e4


@settings(max_examples=15)
@given(st.floats(0.8, 1.2))
def test_identical_units_share_equally(case9, scale):
    case = scale_loads(case9, scale)
    sol = solve_variant(build_topf(case))
    assert sol.ok
    for grp in case.identical_groups():
        vals = [sol.dispatch[g] for g in grp]
        assert max(vals) - min(vals) <= 1e-6
    assert check_dispatch(case, sol) == []


def test_check_dispatch_flags_violations(toy2):
    sol = solve_variant(build_topf(toy2))
    bad = DispatchSolution(sol.variant, sol.status, dict(sol.dispatch), dict(sol.angles),
                           dict(sol.flows))
    bad.dispatch["A"] = 120.0
    bad.flows["L1"] = 40.0
    msgs = check_dispatch(toy2, bad)
    assert any("outside" in m for m in msgs)
    assert any("exceeds" in m for m in msgs)
    assert any("angles" in m for m in msgs)
    assert any("balance" in m for m in msgs)


# -- L-FCOPF -----------------------------------------------------------------------

def test_lfcopf_without_limits_matches_topf(case9):
    t = solve_variant(build_topf(case9))
    l = solve_variant(build_lfcopf(case9, -math.inf, -math.inf))
    assert l.cost == pytest.approx(t.cost, abs=1e-6)
    assert l.pred_rocof is not None and l.pred_fn is not None


def test_lfcopf_nadir_limit_costs_at_least_topf(case9):
    t = solve_variant(build_topf(case9))
    l = solve_variant(build_lfcopf(case9, -math.inf, 59.5))
    assert l.ok
    assert l.cost >= t.cost - 1e-9
    assert l.pred_fn >= 59.5 - 1e-9


@pytest.mark.parametrize("cap", [10.0, 20.0, 30.0])
def test_rocof_cap_binds_exactly(case9, cap):
    h_sum = sum(g.inertia_h * g.mva_base / case9.p_base for g in case9.generators
                if g.id != case9.contingency_unit)
    r_lmt = -cap * case9.f0 / (2.0 * h_sum * case9.p_base)
    sol = solve_variant(build_lfcopf(case9, r_lmt, -math.inf))
    assert sol.ok
    assert sol.dispatch[case9.contingency_unit] == pytest.approx(cap, abs=1e-7)
    assert sol.pred_rocof == pytest.approx(r_lmt, rel=1e-9)
    assert check_dispatch(case9, sol) == []


def test_lfcopf_multi_contingency_caps_every_unit(case9):
    r_lmt = -0.5
    form = build_lfcopf(case9, r_lmt, -math.inf, contingencies=case9.gen_ids)
    sol = solve_variant(form)
    assert sol.ok
    total_h = sum(g.inertia_h * g.mva_base / case9.p_base for g in case9.generators)
    for g in case9.generators:
        h_rest = total_h - g.inertia_h * g.mva_base / case9.p_base
        cap = -r_lmt * 2.0 * h_rest * case9.p_base / case9.f0
        assert sol.dispatch[g.id] <= cap + 1e-6
    # every unit is capped, so the bill cannot beat the single-contingency one
    single = solve_variant(build_lfcopf(case9, r_lmt, -math.inf))
    assert sol.cost >= single.cost - 1e-9


# -- DNN-FCOPF ----------------------------------------------------------------------

def test_constant_net_matches_topf(case9):
    t = solve_variant(build_topf(case9))
    d = solve_variant(build_dnnfcopf(case9, constant_model(case9), -0.5, 59.5))
    assert d.ok
    assert d.cost == pytest.approx(t.cost, abs=1e-6)
    assert (d.pred_rocof, d.pred_fn) == pytest.approx((-0.3, 59.8))
    assert not build_dnnfcopf(case9, constant_model(case9), -0.5, 59.5).problem.binaries


# seeds whose random net puts the T-OPF dispatch outside a limit that is still reachable
@pytest.mark.parametrize("seed", [1, 2, 5, 6])
def test_dnn_outputs_equal_forward_pass(case9, seed):
    model = synthetic_model(case9, seed)
    form = build_dnnfcopf(case9, model, -0.5, 59.5)
    sol = solve_variant(form)
    assert sol.ok
    y = model.predict(features(case9, sol.dispatch, case9.contingency_unit))
    assert (sol.pred_rocof, sol.pred_fn) == pytest.approx(tuple(y), abs=1e-6)
    assert sol.pred_rocof >= -0.5 - 1e-6 and sol.pred_fn >= 59.5 - 1e-6
    assert check_dispatch(case9, sol) == []
    t = solve_variant(build_topf(case9))
    y_t = model.predict(features(case9, t.dispatch, case9.contingency_unit))
    assert y_t[0] < -0.5 or y_t[1] < 59.5  # T-OPF breaks a limit here
    assert sol.cost > t.cost


def test_dnn_limits_beyond_reach_are_infeasible(case9):
    model = synthetic_model(case9, 1)
    net = model.folded()
    x_lo = features(case9, {g.id: g.p_min for g in case9.generators}, case9.contingency_unit)
    x_hi = features(case9, {g.id: g.p_max for g in case9.generators}, case9.contingency_unit)
    out = propagate_bounds(net, x_lo, x_hi)[-1]
    # sampling agrees with the propagated box
    rng = np.random.default_rng(0)
    samples = forward(net, rng.uniform(x_lo, x_hi, (5000, len(x_lo))))
    assert np.all(samples[:, 1] <= out.upper[1] + 1e-9)
    sol = solve_variant(build_dnnfcopf(case9, model, -math.inf, float(out.upper[1]) + 0.01))
    assert sol.status == INFEASIBLE


def test_dnn_rejects_mismatched_features(case9, toy2):
    with pytest.raises(OpfError, match="features"):
        build_dnnfcopf(case9, synthetic_model(toy2, 0), -0.5, 59.5)


def test_hook_never_needs_more_nodes(case9):
    rows = []
    for seed in range(4):
        model = synthetic_model(case9, 10 + seed, hidden=(6, 6))
        for scale in (0.8, 0.9, 1.0, 1.1, 1.2):
            case = scale_loads(case9, scale)
            form = build_dnnfcopf(case, model, -0.5, 59.5)
            with_hook = solve_variant(form, use_hook=True)
            without = solve_variant(form, use_hook=False)
            assert with_hook.status == without.status
            if with_hook.ok:
                assert with_hook.cost == pytest.approx(without.cost, abs=1e-6)
            rows.append((with_hook.nodes, without.nodes))
    assert len(rows) == 20
    assert all(a <= b for a, b in rows), rows


# -- closed-loop verification -------------------------------------------------------

def test_relative_error():
    assert relative_error_pct(-0.6, -0.5) == pytest.approx(20.0)
    assert relative_error_pct(-0.5, -0.5) == 0.0
    assert relative_error_pct(None, -0.5) is None
    assert relative_error_pct(59.4, 59.4) == 0.0


def test_verify_lfcopf_dispatch(case9):
    sol = solve_variant(build_lfcopf(case9, -0.5, 59.5))
    v = verify_dispatch(case9, sol, duration=20.0, dt=2e-3)
    assert v.err_rocof_pct is not None and v.err_rocof_pct < 5.0
    assert v.err_fn_pct is not None and v.err_fn_pct < 1.0
    t = solve_variant(build_topf(case9))
    vt = verify_dispatch(case9, t, duration=20.0, dt=2e-3)
    assert vt.err_rocof_pct is None and vt.err_fn_pct is None


def test_verify_needs_a_dispatch(case9):
    with pytest.raises(OpfError):
        verify_dispatch(case9, DispatchSolution(T_OPF, INFEASIBLE))


def test_variant_tags(case9):
    assert build_topf(case9).variant == T_OPF
    assert build_lfcopf(case9, -0.5, 59.5).variant == L_FCOPF
    assert build_dnnfcopf(case9, constant_model(case9), -0.5, 59.5).variant == DNN_FCOPF
