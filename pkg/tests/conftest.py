import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from freq_opf_lab.grid import (GovernorParams, Generator, Line, PowerCase, load_case,  # noqa: E402
                               validate_case)

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

GOV = GovernorParams(t1=0.15, t2=0.05, t3=0.3, t4=0.26, t5=8.0, f_hp=0.27, k=1.0, r=0.05)


def make_gen(gid, bus, p_min=0.0, p_max=100.0, c2=0.01, c1=10.0, c0=0.0, h=3.0, mva=100.0, gov=GOV):
    return Generator(gid, bus, p_min, p_max, c2, c1, c0, h, mva, gov)


@pytest.fixture(scope="session")
def case9():
    return load_case("ieee9")


@pytest.fixture
def toy2():
    """Two buses, one line of 30 MW, a cheap remote unit and a dear local one."""
    return validate_case(PowerCase(
        buses=("1", "2"),
        lines=(Line("L1", "1", "2", 0.1, 30.0),),
        generators=(make_gen("A", "1", c1=5.0), make_gen("B", "2", c1=20.0), make_gen("C", "2", c1=30.0)),
        loads={"2": 50.0},
        contingency_unit="C",
        reference_bus="1",
    ))


# acceptance criteria report one line each at the end of the run
CRITERIA: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    CRITERIA[number] = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title} ({detail})"


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
