import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freq_opf_lab.analytic import (AnalyticError, aggregate_low_order, disturbance_pu,
                                   low_order_from_values, nadir_deviation, nadir_gain, nadir_time,
                                   time_response, worst_rocof)
from oracles import low_order_ode

from conftest import make_gen

# hand-computed p_max-weighted aggregates of the eight units left after G11 trips
H9 = 2.1664791901012377
R9 = 20.0
F9 = 5.4746456692913394
T9 = 8.003374578177729
BASE9 = 889.0


def test_9bus_aggregate_fixture(case9):
    p = aggregate_low_order(case9)
    assert p.h_sys == pytest.approx(H9, rel=1e-12)
    assert p.r_agg == pytest.approx(R9, rel=1e-12)
    assert p.f_agg == pytest.approx(F9, rel=1e-12)
    assert p.t_agg == pytest.approx(T9, rel=1e-12)
    assert p.base_mva == BASE9
    assert p.d == pytest.approx(100.0 / BASE9)
    assert p.oscillatory
    assert p.xi == pytest.approx(0.9286183544353104, rel=1e-10)


def test_identical_units_aggregate_to_the_unit(case9):
    units = [g for g in case9.generators if g.id.startswith("G2")]
    p = aggregate_low_order(case9, units=units)
    gov = units[0].governor
    assert p.h_sys == pytest.approx(units[0].inertia_h)
    assert p.r_agg == pytest.approx(gov.k / gov.r)
    assert p.f_agg == pytest.approx(gov.k * gov.f_hp / gov.r)
    assert p.t_agg == pytest.approx(gov.t5)
    single = aggregate_low_order(case9, units=units[:1])
    assert single.h_sys == p.h_sys and single.r_agg == p.r_agg


def test_empty_aggregation(case9):
    with pytest.raises(AnalyticError):
        aggregate_low_order(case9, units=[])


def test_include_tripped_flag(case9):
    a = aggregate_low_order(case9, exclude_contingency=False)
    assert a.base_mva == BASE9 + 250.0


def test_worst_rocof_examples(case9):
    assert worst_rocof(case9, 0.0) == 0.0
    # sum H on system base = 5 s with f0 = 60, p_d = 10 MW -> -0.6 Hz/s
    gens = tuple(make_gen(f"U{i}", "1", h=h, mva=100.0) for i, h in enumerate((0.0001, 2.0, 3.0)))
    c = replace(case9, generators=gens, contingency_unit="U0", loads={"5": 1.0})
    assert worst_rocof(c, 10.0) == pytest.approx(-0.6, rel=1e-12)
    gens2 = tuple(replace(g, inertia_h=2 * g.inertia_h) for g in gens)
    assert worst_rocof(replace(c, generators=gens2), 10.0) == pytest.approx(worst_rocof(c, 10.0) / 2)
    with pytest.raises(AnalyticError):
        worst_rocof(case9, -1.0)


def test_identities(case9):
    p = aggregate_low_order(case9)
    assert 2 * p.h_sys * p.t_agg * p.omega_n ** 2 == pytest.approx(p.r_agg + p.d, rel=1e-12)
    assert p.omega_d ** 2 + (p.xi * p.omega_n) ** 2 == pytest.approx(p.omega_n ** 2, rel=1e-12)
    assert p.phi == pytest.approx(math.asin(math.sqrt(1 - p.xi ** 2)))


def test_nadir_matches_ode(case9):
    p = aggregate_low_order(case9)
    dpe = disturbance_pu(p, 40.0)
    t, f = low_order_ode(p.h_sys, p.d, p.f_agg, p.r_agg, p.t_agg, dpe, duration=10.0)
    k = int(np.argmin(f))
    assert nadir_time(p) == pytest.approx(t[k], rel=2e-3)
    assert nadir_deviation(p, dpe) == pytest.approx(f[k], rel=1e-6)


def test_time_response_matches_ode(case9):
    p = aggregate_low_order(case9)
    dpe = disturbance_pu(p, 40.0)
    t, f = low_order_ode(p.h_sys, p.d, p.f_agg, p.r_agg, p.t_agg, dpe, duration=30.0, dt=1e-3)
    assert np.max(np.abs(time_response(p, dpe, t) - f)) < 1e-3
    assert time_response(p, dpe, 0.0) == 0.0
    assert time_response(p, dpe, 400.0) == pytest.approx(-60 * dpe / (p.r_agg + p.d), rel=1e-12)
    # the curve's minimum is the nadir formula
    tn = nadir_time(p)
    assert time_response(p, dpe, tn) == pytest.approx(nadir_deviation(p, dpe), rel=1e-6)


def test_nadir_linear_in_disturbance(case9):
    p = aggregate_low_order(case9)
    assert nadir_deviation(p, 0.0) == 0.0
    assert nadir_deviation(p, 0.08) == pytest.approx(2 * nadir_deviation(p, 0.04), rel=1e-15)
    with pytest.raises(AnalyticError):
        nadir_deviation(p, -0.1)


def test_nadir_time_continuous_in_t(case9):
    p = aggregate_low_order(case9)
    ts = []
    for s in np.linspace(0.99, 1.01, 41):
        q = low_order_from_values(p.h_sys, p.d, p.f_agg, p.r_agg, p.t_agg * s, p.base_mva)
        ts.append(nadir_time(q))
    assert np.max(np.abs(np.diff(ts))) < 1e-2


def test_overdamped_is_flagged():
    p = low_order_from_values(1.0, 1.0, 0.5, 1.0, 8.0)
    assert not p.oscillatory
    with pytest.raises(AnalyticError, match="xi"):
        nadir_time(p)
    with pytest.raises(AnalyticError):
        time_response(p, 0.1, 1.0)


def test_radicand_guard():
    p = low_order_from_values(0.5, 0.1, 20.0, 10.0, 8.0)
    if p.oscillatory:
        with pytest.raises(AnalyticError, match="r_agg"):
            nadir_gain(p)


def test_params_json(case9):
    import json
    d = json.loads(aggregate_low_order(case9).to_json())
    assert d["oscillatory"] is True and "omega_n" in d


@given(st.floats(1.0, 4.0))
def test_more_inertia_shallower_nadir(h):
    a = low_order_from_values(h, 0.1, 5.5, 20.0, 8.0)
    b = low_order_from_values(h * 1.05, 0.1, 5.5, 20.0, 8.0)
    if a.oscillatory and b.oscillatory:
        assert abs(nadir_deviation(b, 0.05)) < abs(nadir_deviation(a, 0.05))


@given(st.floats(0.0, 0.3))
def test_constraint_boundary_is_tight(dpe):
    p = low_order_from_values(2.2, 0.11, 5.5, 20.0, 8.0)
    f_lmt = 60.0 + nadir_deviation(p, dpe)
    # the linear row f0 + gain * dPe >= f_lmt holds with equality at dpe
    assert 60.0 + nadir_gain(p) * dpe == pytest.approx(f_lmt, abs=1e-12)
