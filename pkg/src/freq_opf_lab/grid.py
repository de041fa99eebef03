"""Static network data: buses, lines, generators with governor data, loads.

Cases are read from JSON (see ``cases/ieee9.json``).  A :class:`PowerCase`
is treated as immutable; the transforming helpers return new instances.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping


class CaseError(ValueError):
    """Raised for malformed or physically invalid case data."""


@dataclass(frozen=True)
class GovernorParams:
    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    f_hp: float
    k: float
    r: float

    @property
    def gain(self) -> float:
        """Steady-state droop gain K/R on the machine base."""
        return self.k / self.r


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    p_min: float
    p_max: float
    c2: float
    c1: float
    c0: float
    inertia_h: float
    mva_base: float
    governor: GovernorParams

    def h_on_base(self, p_base: float) -> float:
        """Inertia constant expressed on the system base."""
        return self.inertia_h * self.mva_base / p_base

    def cost(self, p: float) -> float:
        return self.c2 * p * p + self.c1 * p + self.c0


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    reactance_x: float
    thermal_limit: float


@dataclass(frozen=True)
class PowerCase:
    buses: tuple[str, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    loads: Mapping[str, float]
    contingency_unit: str
    reference_bus: str
    f0: float = 60.0
    p_base: float = 100.0
    damping_d: float = 1.0
    name: str = ""

    def __post_init__(self):
        # freeze the load map so equal cases compare and copy predictably
        object.__setattr__(self, "loads", dict(self.loads))

    # -- lookups -----------------------------------------------------------
    def generator(self, gen_id: str) -> Generator:
        for g in self.generators:
            if g.id == gen_id:
                return g
        raise CaseError(f"unknown generator id {gen_id!r}")

    @property
    def gen_ids(self) -> list[str]:
        return [g.id for g in self.generators]

    @property
    def load_buses(self) -> list[str]:
        return list(self.loads)

    @property
    def total_load(self) -> float:
        return float(sum(self.loads.values()))

    def in_service(self, tripped: str | None = None) -> list[Generator]:
        """Generators left after ``tripped`` (default: the contingency unit) is lost."""
        tripped = self.contingency_unit if tripped is None else tripped
        return [g for g in self.generators if g.id != tripped]

    def identical_groups(self) -> list[list[str]]:
        """Groups (size >= 2) of generators sharing a bus and every parameter."""
        groups: dict[tuple, list[str]] = {}
        for g in self.generators:
            key = (g.bus, g.p_min, g.p_max, g.c2, g.c1, g.c0,
                   g.inertia_h, g.mva_base, g.governor)
            groups.setdefault(key, []).append(g.id)
        return [ids for ids in groups.values() if len(ids) > 1]


# -- validation -----------------------------------------------------------

def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise CaseError(msg)


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_case(case: PowerCase) -> PowerCase:
    """Check every structural and physical invariant; return the case unchanged."""
    _require(_finite(case.f0) and case.f0 > 0, "f0 must be positive")
    _require(_finite(case.p_base) and case.p_base > 0, "p_base must be positive")
    _require(_finite(case.damping_d) and case.damping_d >= 0, "damping_d must be non-negative")
    _require(len(case.buses) > 0, "buses must be non-empty")
    _require(len(set(case.buses)) == len(case.buses), "duplicate bus id")
    buses = set(case.buses)
    _require(case.reference_bus in buses,
             f"reference_bus {case.reference_bus!r} references a missing bus")

    line_ids = [ln.id for ln in case.lines]
    _require(len(set(line_ids)) == len(line_ids), "duplicate line id")
    for ln in case.lines:
        for end in (ln.from_bus, ln.to_bus):
            _require(end in buses, f"line {ln.id}: dangling bus reference {end!r}")
        _require(ln.from_bus != ln.to_bus, f"line {ln.id}: from_bus equals to_bus")
        _require(_finite(ln.reactance_x) and ln.reactance_x > 0,
                 f"line {ln.id}: reactance_x must be > 0")
        _require(_finite(ln.thermal_limit) and ln.thermal_limit > 0,
                 f"line {ln.id}: thermal_limit must be > 0")

    _require(len(case.generators) > 0, "generators must be non-empty")
    gen_ids = case.gen_ids
    _require(len(set(gen_ids)) == len(gen_ids), "duplicate generator id")
    for g in case.generators:
        _require(g.bus in buses, f"generator {g.id}: dangling bus reference {g.bus!r}")
        for name in ("p_min", "p_max", "c2", "c1", "c0", "inertia_h", "mva_base"):
            _require(_finite(getattr(g, name)), f"generator {g.id}: {name} must be finite")
        _require(0 <= g.p_min <= g.p_max, f"generator {g.id}: requires 0 <= p_min <= p_max")
        _require(g.inertia_h > 0, f"generator {g.id}: inertia_h must be > 0")
        _require(g.mva_base > 0, f"generator {g.id}: mva_base must be > 0")
        _require(g.c2 >= 0, f"generator {g.id}: c2 must be >= 0 (convex cost)")
        gov = g.governor
        for name in ("t1", "t2", "t3", "t4", "t5", "f_hp", "k", "r"):
            _require(_finite(getattr(gov, name)), f"generator {g.id}: governor.{name} must be finite")
        _require(gov.t1 > 0 and gov.t3 > 0 and gov.t5 > 0,
                 f"generator {g.id}: governor t1, t3, t5 must be > 0")
        _require(gov.t2 >= 0 and gov.t4 >= 0, f"generator {g.id}: governor t2, t4 must be >= 0")
        _require(0 < gov.f_hp < 1, f"generator {g.id}: governor f_hp must lie in (0, 1)")
        _require(gov.k > 0, f"generator {g.id}: governor k must be > 0")
        _require(gov.r > 0, f"generator {g.id}: governor r must be > 0")

    for bus, mw in case.loads.items():
        _require(bus in buses, f"load: dangling bus reference {bus!r}")
        _require(_finite(mw) and mw >= 0, f"load at bus {bus}: must be finite and >= 0")

    _require(case.contingency_unit in gen_ids,
             f"contingency_unit {case.contingency_unit!r} is not a generator")
    spare = sum(g.p_max for g in case.in_service())
    _require(spare >= case.total_load,
             f"infeasible: non-contingency p_max total {spare:.3f} MW < load {case.total_load:.3f} MW")
    return case


# -- parsing / serialisation ---------------------------------------------

_GOV_KEYS = ("t1", "t2", "t3", "t4", "t5", "f_hp", "k", "r")
_GEN_KEYS = ("id", "bus", "p_min", "p_max", "c2", "c1", "c0", "inertia_h", "mva_base", "governor")
_LINE_KEYS = ("id", "from_bus", "to_bus", "reactance_x", "thermal_limit")


def _field(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if not isinstance(obj, Mapping):
        raise CaseError(f"{where}: expected an object")
    if key not in obj:
        raise CaseError(f"{where}: missing field {key!r}")
    return obj[key]


def _num(obj, key, where) -> float:
    v = _field(obj, key, where)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CaseError(f"{where}: field {key!r} must be a number")
    return float(v)


def case_from_dict(data: Mapping[str, Any]) -> PowerCase:
    if not isinstance(data, Mapping):
        raise CaseError("case: top level must be an object")
    buses = []
    for i, b in enumerate(_field(data, "buses", "case")):
        buses.append(str(_field(b, "id", f"buses[{i}]")) if isinstance(b, Mapping) else str(b))

    lines = []
    for i, ln in enumerate(_field(data, "lines", "case")):
        where = f"lines[{i}]"
        lines.append(Line(
            id=str(_field(ln, "id", where)),
            from_bus=str(_field(ln, "from_bus", where)),
            to_bus=str(_field(ln, "to_bus", where)),
            reactance_x=_num(ln, "reactance_x", where),
            thermal_limit=_num(ln, "thermal_limit", where),
        ))

    gens = []
    for i, g in enumerate(_field(data, "generators", "case")):
        where = f"generators[{i}]"
        gov = _field(g, "governor", where)
        gwhere = f"{where}.governor"
        gens.append(Generator(
            id=str(_field(g, "id", where)),
            bus=str(_field(g, "bus", where)),
            p_min=_num(g, "p_min", where),
            p_max=_num(g, "p_max", where),
            c2=_num(g, "c2", where),
            c1=_num(g, "c1", where),
            c0=_num(g, "c0", where),
            inertia_h=_num(g, "inertia_h", where),
            mva_base=_num(g, "mva_base", where),
            governor=GovernorParams(**{k: _num(gov, k, gwhere) for k in _GOV_KEYS}),
        ))

    raw_loads = _field(data, "loads", "case")
    if not isinstance(raw_loads, Mapping):
        raise CaseError("case: field 'loads' must be an object mapping bus id to MW")
    loads = {}
    for bus, mw in raw_loads.items():
        if isinstance(mw, bool) or not isinstance(mw, (int, float)):
            raise CaseError(f"loads[{bus!r}] must be a number")
        loads[str(bus)] = float(mw)

    case = PowerCase(
        buses=tuple(buses),
        lines=tuple(lines),
        generators=tuple(gens),
        loads=loads,
        contingency_unit=str(_field(data, "contingency_unit", "case")),
        reference_bus=str(_field(data, "reference_bus", "case")),
        f0=float(data.get("f0", 60.0)),
        p_base=float(data.get("p_base", 100.0)),
        damping_d=float(data.get("damping_d", 1.0)),
        name=str(data.get("name", "")),
    )
    return validate_case(case)


def parse_case(text: str) -> PowerCase:
    """Parse case-file JSON text into a validated :class:`PowerCase`."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"case file is not valid JSON: {exc}") from exc
    return case_from_dict(data)


def case_to_dict(case: PowerCase) -> dict[str, Any]:
    return {
        "name": case.name,
        "f0": case.f0,
        "p_base": case.p_base,
        "damping_d": case.damping_d,
        "reference_bus": case.reference_bus,
        "buses": [{"id": b} for b in case.buses],
        "lines": [{k: getattr(ln, k) for k in _LINE_KEYS} for ln in case.lines],
        "generators": [
            {**{k: getattr(g, k) for k in _GEN_KEYS if k != "governor"},
             "governor": asdict(g.governor)}
            for g in case.generators
        ],
        "loads": dict(case.loads),
        "contingency_unit": case.contingency_unit,
    }


def serialize_case(case: PowerCase) -> str:
    return json.dumps(case_to_dict(case), indent=2)


def load_case(path_or_name: str | Path) -> PowerCase:
    """Load a case from a file path, or a bundled case by name (``"ieee9"``)."""
    p = Path(path_or_name)
    if p.suffix == ".json" and p.exists():
        return parse_case(p.read_text())
    bundled = resources.files("freq_opf_lab") / "cases" / f"{p.stem}.json"
    if bundled.is_file():
        return parse_case(bundled.read_text())
    raise CaseError(f"case file not found: {path_or_name}")


# -- transformations -----------------------------------------------------

def scale_loads(case: PowerCase, factor: float) -> PowerCase:
    if not (math.isfinite(factor) and factor > 0):
        raise CaseError(f"load scale factor must be positive, got {factor}")
    return replace(case, loads={b: mw * factor for b, mw in case.loads.items()})


def select_contingency(case: PowerCase, unit: str) -> PowerCase:
    if unit not in case.gen_ids:
        raise CaseError(f"unknown generator id {unit!r}")
    if unit == case.contingency_unit:
        return case
    return validate_case(replace(case, contingency_unit=unit))
