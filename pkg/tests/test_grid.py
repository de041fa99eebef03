import json
import math
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from freq_opf_lab.grid import (CaseError, Line, PowerCase, case_to_dict, parse_case, scale_loads,
                               select_contingency, serialize_case, validate_case)

from conftest import make_gen


def test_bundled_9bus_has_split_units(case9):
    assert len(case9.generators) == 9
    by_bus = {}
    for g in case9.generators:
        by_bus[g.bus] = by_bus.get(g.bus, 0) + 1
    assert by_bus == {"1": 2, "2": 4, "3": 3}
    assert case9.loads == {"5": 125.0, "6": 90.0, "8": 100.0}
    assert sorted(map(len, case9.identical_groups())) == [2, 3, 4]


def test_table_governor_rows(case9):
    g = case9.generator("G11").governor
    assert (g.t1, g.t2, g.t3, g.t4, g.t5, g.f_hp, g.k, g.r) == (0.15, 0.05, 0.3, 0.26, 8, 0.27, 1, 0.05)
    g = case9.generator("G21").governor
    assert (g.t1, g.t2, g.t3, g.t4, g.t5, g.f_hp) == (0.1, 0, 0.259, 0.1, 10, 0.272)
    g = case9.generator("G33").governor
    assert (g.t1, g.t2, g.t3, g.t4, g.t5, g.f_hp) == (0.083, 0, 0.2, 0.05, 5, 0.28)


def test_39bus_loads():
    from freq_opf_lab.grid import load_case
    c = load_case("ieee39")
    assert len(c.buses) == 39 and len(c.generators) == 10
    assert c.contingency_unit == "G38"
    assert max(c.generators, key=lambda g: g.p_max).id == "G38"


def test_minimal_case_is_valid():
    c = PowerCase(("1", "2"), (Line("L", "1", "2", 0.1, 100.0),),
                  (make_gen("G", "1"), make_gen("X", "2")), {"2": 10.0}, "X", "1")
    assert validate_case(c) is c


def test_dangling_line_reference(case9):
    d = case_to_dict(case9)
    d["lines"][0]["to_bus"] = "99"
    with pytest.raises(CaseError, match="dangling"):
        parse_case(json.dumps(d))


def test_missing_field_is_named(case9):
    d = case_to_dict(case9)
    del d["generators"][3]["inertia_h"]
    with pytest.raises(CaseError, match="inertia_h"):
        parse_case(json.dumps(d))


def test_roundtrip(case9):
    assert parse_case(serialize_case(case9)) == case9


def test_scale_loads_example(case9):
    s = scale_loads(case9, 1.2)
    assert s.loads == pytest.approx({"5": 150.0, "6": 108.0, "8": 120.0}, rel=1e-12)
    assert scale_loads(case9, 1.0) == case9
    with pytest.raises(CaseError):
        scale_loads(case9, 0.0)


def test_select_contingency(case9):
    assert select_contingency(case9, "G11") is case9
    assert select_contingency(case9, "G21").contingency_unit == "G21"
    with pytest.raises(CaseError):
        select_contingency(case9, "G99")


def test_infeasible_precheck(case9):
    with pytest.raises(CaseError, match="infeasible"):
        validate_case(scale_loads(case9, 3.0))


@given(st.floats(0.1, 1.5), st.floats(0.1, 1.5))
def test_scale_composition(a, b):
    from freq_opf_lab.grid import load_case
    c = load_case("ieee9")
    lhs = scale_loads(scale_loads(c, a), b).loads
    rhs = scale_loads(c, a * b).loads
    for k in lhs:
        assert math.isclose(lhs[k], rhs[k], rel_tol=1e-12)


# each mutation breaks exactly one stated invariant
_GEN_MUTATIONS = [
    ("p_min", -1.0), ("p_max", 1.0), ("inertia_h", 0.0), ("inertia_h", -2.0), ("mva_base", 0.0),
    ("c2", -0.1), ("p_min", math.nan),
]
_GOV_MUTATIONS = [("t1", 0.0), ("t3", -1.0), ("t5", 0.0), ("t2", -0.1), ("t4", -0.1),
                  ("f_hp", 0.0), ("f_hp", 1.0), ("k", 0.0), ("r", 0.0), ("r", -0.05)]


@given(st.integers(0, 8), st.sampled_from(_GEN_MUTATIONS + [("gov",) + m for m in _GOV_MUTATIONS]))
def test_validation_rejects_mutations(idx, mutation):
    from freq_opf_lab.grid import load_case
    c = load_case("ieee9")
    gens = list(c.generators)
    g = gens[idx]
    if mutation[0] == "gov":
        g = replace(g, governor=replace(g.governor, **{mutation[1]: mutation[2]}))
    else:
        if mutation[0] == "p_max":
            g = replace(g, p_min=g.p_max / 2, p_max=g.p_max / 2 - 1.0)
        else:
            g = replace(g, **{mutation[0]: mutation[1]})
    with pytest.raises(CaseError):
        validate_case(replace(c, generators=tuple(gens[:idx] + [g] + gens[idx + 1:])))


@pytest.mark.parametrize("mut", [
    lambda c: replace(c, lines=(replace(c.lines[0], reactance_x=0.0),) + c.lines[1:]),
    lambda c: replace(c, lines=(replace(c.lines[0], thermal_limit=-5.0),) + c.lines[1:]),
    lambda c: replace(c, reference_bus="42"),
    lambda c: replace(c, contingency_unit="nope"),
    lambda c: replace(c, loads={**c.loads, "77": 1.0}),
    lambda c: replace(c, loads={**c.loads, "5": -1.0}),
    lambda c: replace(c, f0=0.0),
])
def test_validation_rejects_case_mutations(case9, mut):
    with pytest.raises(CaseError):
        validate_case(mut(case9))
