"""Network data model, per-unit bases, scenario overlays and file ingestion.

Network files are TOML documents with array-of-table sections ``[[buses]]``,
``[[branches]]``, ``[[transformers]]``, ``[[loads]]``, ``[[shunts]]``,
``[[generators]]``, ``[[ibrs]]`` and ``[[scenarios]]`` plus the parameter
libraries ``[machines.*]``, ``[governors.*]`` and ``[exciters.*]``. See the
bundled ``cigre_hv.net`` for a complete example.
"""
from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SCHEMA_VERSION = 1
DATA_DIR = Path(__file__).parent / "data"
DATA_PATH_ENV = "IBRSTAB_DATA_PATH"
IBR_UNIT_MVA = 5.0


class NetworkError(ValueError):
    """Invalid network data or an impossible edit of a network model."""


class SchemaError(NetworkError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class PerUnitBase:
    s_base: float = 100.0
    f_base: float = 50.0
    zones: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.s_base <= 0 or self.f_base <= 0:
            raise SchemaError("s_base/f_base", "bases must be strictly positive")
        for zone, kv in self.zones.items():
            if kv <= 0:
                raise SchemaError(f"zones.{zone}.v_base", "must be strictly positive")

    @property
    def omega_base(self) -> float:
        return 2.0 * math.pi * self.f_base

    def z_base(self, zone: str) -> float:
        """Impedance base in ohm."""
        return self.zones[zone] ** 2 / self.s_base

    def i_base(self, zone: str) -> float:
        """Line current base in kA."""
        return self.s_base / (math.sqrt(3.0) * self.zones[zone])

    def _factor(self, quantity: str, zone: str | None) -> float:
        if quantity == "power":
            return self.s_base
        if zone is None:
            raise ValueError(f"{quantity} conversion needs a voltage zone")
        return {
            "voltage": self.zones[zone],
            "current": self.i_base(zone),
            "impedance": self.z_base(zone),
            "admittance": 1.0 / self.z_base(zone),
        }[quantity]

    def to_si(self, value, quantity: str, zone: str | None = None):
        """pu -> MW/MVA, kV, kA, ohm or siemens."""
        return value * self._factor(quantity, zone)

    def to_pu(self, value, quantity: str, zone: str | None = None):
        return value / self._factor(quantity, zone)


@dataclass(frozen=True)
class BusSpec:
    id: str
    zone: str
    kind: str  # slack | pv | pq


@dataclass(frozen=True)
class BranchSpec:
    """Pi-line on the system base."""

    id: str
    from_bus: str
    to_bus: str
    r: float
    x: float
    b_shunt: float = 0.0


@dataclass(frozen=True)
class TransformerSpec:
    """Two-winding T-circuit; impedances in pu on ``s_nom``."""

    id: str
    from_bus: str
    to_bus: str
    s_nom: float
    r_w: float
    x_w: float
    r_fe: float = math.inf
    x_m: float = math.inf

    def on_base(self, s_base: float) -> dict[str, float]:
        """Winding halves and magnetizing branch rescaled to ``s_base``."""
        k = s_base / self.s_nom
        return {
            "r1": 0.5 * self.r_w * k,
            "x1": 0.5 * self.x_w * k,
            "r2": 0.5 * self.r_w * k,
            "x2": 0.5 * self.x_w * k,
            "r_fe": self.r_fe * k,
            "x_m": self.x_m * k,
        }


@dataclass(frozen=True)
class LoadSpec:
    id: str
    bus: str
    p: float  # MW
    q: float  # MVAr

    def nominal_impedance(self, s_base: float, v: float = 1.0) -> complex:
        """Series R + jX drawing (p, q) at voltage ``v`` (pu)."""
        s = complex(self.p, self.q) / s_base
        return v * v / s.conjugate()


@dataclass(frozen=True)
class ShuntSpec:
    id: str
    bus: str
    q: float  # MVAr delivered at 1 pu, > 0 capacitive


@dataclass(frozen=True)
class MachineParams:
    """Two-axis machine with damper windings, pu on machine rating."""

    rs: float
    xd: float
    xq: float
    xd_t: float
    xq_t: float
    xd_st: float
    xq_st: float
    xl: float
    td0_t: float
    tq0_t: float
    td0_st: float
    tq0_st: float
    h: float
    d: float = 0.0

    def validate(self, where: str):
        for name in ("td0_t", "tq0_t", "td0_st", "tq0_st", "h"):
            if not getattr(self, name) > 0:
                raise SchemaError(f"{where}.{name}", "must be > 0")
        if not self.xd > self.xd_t > self.xd_st > self.xl >= 0:
            raise SchemaError(where, "need xd > xd_t > xd_st > xl >= 0")
        if not self.xq > self.xq_t > self.xq_st > self.xl:
            raise SchemaError(where, "need xq > xq_t > xq_st > xl")
        if abs(self.xd_st - self.xq_st) > 1e-12:
            raise SchemaError(where, "xd_st must equal xq_st")
        if self.rs < 0:
            raise SchemaError(f"{where}.rs", "must be >= 0")


@dataclass(frozen=True)
class GovernorParams:
    droop: float = 0.05
    t_sr: float = 0.1
    t_sm: float = 0.3
    t_ch: float = 0.3
    t_rh: float = 7.0
    f_hp: float = 0.3

    def validate(self, where: str):
        for name in ("droop", "t_sr", "t_sm", "t_ch", "t_rh"):
            if not getattr(self, name) > 0:
                raise SchemaError(f"{where}.{name}", "must be > 0")
        if not 0.0 <= self.f_hp <= 1.0:
            raise SchemaError(f"{where}.f_hp", "must lie in [0, 1]")


@dataclass(frozen=True)
class ExciterParams:
    """IEEE type 1 exciter without saturation."""

    ka: float = 20.0
    ta: float = 0.2
    ke: float = 1.0
    te: float = 0.314
    kf: float = 0.063
    tf: float = 0.35
    vr_min: float = -5.0
    vr_max: float = 5.0

    def validate(self, where: str):
        for name in ("ka", "ta", "te", "tf"):
            if not getattr(self, name) > 0:
                raise SchemaError(f"{where}.{name}", "must be > 0")
        if self.vr_min >= self.vr_max:
            raise SchemaError(f"{where}.vr_min", "must be < vr_max")


@dataclass(frozen=True)
class SgSpec:
    id: str
    bus: str
    s_nom: float  # MVA
    p: float  # MW set point
    v_set: float  # pu
    machine: MachineParams
    governor: GovernorParams | None = None
    exciter: ExciterParams | None = None


GAIN_NAMES = ("kp_pll", "ki_pll", "kp_i", "ki_i", "kp_dc", "ki_dc", "kp_2dc", "ki_2dc")


@dataclass(frozen=True)
class IbrSpec:
    """Aggregated grid-following inverter plant; pu on (s_nom, 660 V, f_base).

    Defaults are the 5 MVA unit data scaled to a 70-unit, 350 MVA plant. The
    gains default to the optimal version-1 tuning plus mid-range dc gains.
    """

    id: str = "G10"
    bus: str = "10"
    s_nom: float = 350.0
    unit_count: int = 70
    version: int = 1
    p: float = 0.0  # MW
    v_set: float = 1.0
    r: float = 0.05
    l: float = 0.15
    c_f: float = 0.05
    r_f: float = 0.0016
    c_dc: float = 0.350  # F, whole plant
    v_dc_base: float = 1500.0  # V
    v_ac_base: float = 660.0  # V line-line
    kp_pll: float = 0.77
    ki_pll: float = 376.0
    kp_i: float = 0.64
    ki_i: float = 48.0
    kp_dc: float = 3.0
    ki_dc: float = 300.0
    kp_2dc: float = 3.0
    ki_2dc: float = 100.0

    def validate(self, where: str = "ibr"):
        if self.version not in (1, 2, 3):
            raise SchemaError(f"{where}.version", f"unknown IBR version {self.version!r}")
        if self.unit_count < 1:
            raise SchemaError(f"{where}.unit_count", "must be >= 1")
        if abs(self.s_nom - self.unit_count * IBR_UNIT_MVA) > 1e-9:
            raise SchemaError(f"{where}.s_nom", f"must equal unit_count x {IBR_UNIT_MVA} MVA")
        for name in GAIN_NAMES:
            if getattr(self, name) < 0:
                raise SchemaError(f"{where}.{name}", "gains must be >= 0")
        for name in ("r", "l", "c_f", "c_dc", "v_dc_base"):
            if not getattr(self, name) > 0:
                raise SchemaError(f"{where}.{name}", "must be > 0")
        if self.r_f < 0:
            raise SchemaError(f"{where}.r_f", "must be >= 0")

    def dc_time_constant(self) -> float:
        """C * Vdc_base^2 / S_base in seconds (twice the dc-link inertia)."""
        return self.c_dc * self.v_dc_base**2 / (self.s_nom * 1e6)

    def with_gains(self, **gains: float) -> "IbrSpec":
        unknown = set(gains) - set(GAIN_NAMES)
        if unknown:
            raise NetworkError(f"unknown gain(s): {', '.join(sorted(unknown))}")
        return replace(self, **gains)


@dataclass(frozen=True)
class GenSetpoint:
    id: str
    s_nom: float
    p: float
    v_set: float


@dataclass(frozen=True)
class Scenario:
    id: int
    s_gen_total: float
    s_load_peak: float
    generators: tuple[GenSetpoint, ...]

    def setpoint(self, gen_id: str) -> GenSetpoint | None:
        for g in self.generators:
            if g.id == gen_id:
                return g
        return None


@dataclass(frozen=True)
class ParameterDomain:
    names: tuple[str, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if not self.names:
            raise NetworkError("parameter domain needs at least one dimension")
        if not len(self.names) == len(self.lo) == len(self.hi):
            raise NetworkError("names, lo and hi must have equal length")
        if len(set(self.names)) != len(self.names):
            raise NetworkError("parameter names must be unique")
        for n, a, b in zip(self.names, self.lo, self.hi):
            if not (math.isfinite(a) and math.isfinite(b) and a < b):
                raise NetworkError(f"bounds of {n} must be finite with lo < hi")

    @property
    def dim(self) -> int:
        return len(self.names)

    def to_unit(self, points) -> np.ndarray:
        """Affine map of the box onto [0, 1]^dim."""
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return (np.asarray(points, dtype=float) - lo) / (hi - lo)

    def from_unit(self, z) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return lo + np.asarray(z, dtype=float) * (hi - lo)

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((p >= np.asarray(self.lo)) & (p <= np.asarray(self.hi)), axis=1)

    def as_dict(self) -> dict:
        return {n: [a, b] for n, a, b in zip(self.names, self.lo, self.hi)}

    def __str__(self) -> str:
        return ",".join(f"{n}:{a:g}:{b:g}" for n, a, b in zip(self.names, self.lo, self.hi))

    @classmethod
    def parse(cls, text: str) -> "ParameterDomain":
        """Parse ``name:lo:hi,name:lo:hi``."""
        names, lo, hi = [], [], []
        for item in filter(None, (s.strip() for s in text.split(","))):
            parts = item.split(":")
            if len(parts) != 3:
                raise NetworkError(f"bad parameter range {item!r}, expected name:lo:hi")
            names.append(parts[0])
            lo.append(float(parts[1]))
            hi.append(float(parts[2]))
        return cls(tuple(names), tuple(lo), tuple(hi))


@dataclass(frozen=True)
class NetworkModel:
    name: str
    base: PerUnitBase
    buses: tuple[BusSpec, ...]
    branches: tuple[BranchSpec, ...] = ()
    transformers: tuple[TransformerSpec, ...] = ()
    loads: tuple[LoadSpec, ...] = ()
    shunts: tuple[ShuntSpec, ...] = ()
    generators: tuple[SgSpec, ...] = ()
    ibrs: tuple[IbrSpec, ...] = ()
    scenarios: Mapping[int, Scenario] = field(default_factory=dict)
    load_scale: float = 1.0
    schema_version: int = SCHEMA_VERSION
    scenario_id: int | None = None
    source_hash: str = ""

    def __post_init__(self):
        self.validate()

    # -- lookups ---------------------------------------------------------
    @property
    def bus_ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.buses)

    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def bus(self, bus_id: str) -> BusSpec:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise NetworkError(f"unknown bus {bus_id!r}")

    def sg_at(self, bus_id: str) -> SgSpec | None:
        for g in self.generators:
            if g.bus == bus_id:
                return g
        return None

    def ibr_at(self, bus_id: str) -> IbrSpec | None:
        for g in self.ibrs:
            if g.bus == bus_id:
                return g
        return None

    @property
    def slack_bus(self) -> str:
        return next(b.id for b in self.buses if b.kind == "slack")

    @property
    def total_gen_mva(self) -> float:
        return sum(g.s_nom for g in self.generators) + sum(g.s_nom for g in self.ibrs)

    # -- validation ------------------------------------------------------
    def validate(self):
        ids = [b.id for b in self.buses]
        if not ids:
            raise SchemaError("buses", "network has no buses")
        if len(set(ids)) != len(ids):
            raise SchemaError("buses", "duplicate bus id")
        known = set(ids)
        for b in self.buses:
            if b.zone not in self.base.zones:
                raise NetworkError(f"bus {b.id}: unknown voltage zone {b.zone!r}")
            if b.kind not in ("slack", "pv", "pq"):
                raise SchemaError(f"buses.{b.id}.kind", f"invalid kind {b.kind!r}")
        if sum(b.kind == "slack" for b in self.buses) != 1:
            raise NetworkError("network needs exactly one slack bus")

        def check_bus(where, bus_id):
            if bus_id not in known:
                raise SchemaError(where, f"unknown bus {bus_id!r}")

        zone = {b.id: b.zone for b in self.buses}
        for br in self.branches:
            check_bus(f"branches.{br.id}.from", br.from_bus)
            check_bus(f"branches.{br.id}.to", br.to_bus)
            if br.r < 0 or br.b_shunt < 0:
                raise SchemaError(f"branches.{br.id}", "r and b_shunt must be >= 0")
            if br.x == 0:
                raise SchemaError(f"branches.{br.id}.x", "must be nonzero")
            if zone[br.from_bus] != zone[br.to_bus]:
                raise NetworkError(f"branch {br.id} joins different voltage zones")
        for t in self.transformers:
            check_bus(f"transformers.{t.id}.from", t.from_bus)
            check_bus(f"transformers.{t.id}.to", t.to_bus)
            if not t.s_nom > 0:
                raise SchemaError(f"transformers.{t.id}.s_nom", "must be > 0")
            if t.r_w < 0 or t.x_w <= 0:
                raise SchemaError(f"transformers.{t.id}", "need r_w >= 0 and x_w > 0")
            if not (t.r_fe > 0 and t.x_m > 0):
                raise SchemaError(f"transformers.{t.id}", "r_fe and x_m must be > 0")
        for ld in self.loads:
            check_bus(f"loads.{ld.id}.bus", ld.bus)
            if not ld.p > 0:
                raise SchemaError(f"loads.{ld.id}.p", "must be > 0")
        for sh in self.shunts:
            check_bus(f"shunts.{sh.id}.bus", sh.bus)
        for g in self.generators:
            check_bus(f"generators.{g.id}.bus", g.bus)
            if not g.s_nom > 0:
                raise SchemaError(f"generators.{g.id}.s_nom", "must be > 0")
            g.machine.validate(f"generators.{g.id}.machine")
            if g.governor is not None:
                g.governor.validate(f"generators.{g.id}.governor")
            if g.exciter is not None:
                g.exciter.validate(f"generators.{g.id}.exciter")
        for g in self.ibrs:
            check_bus(f"ibrs.{g.id}.bus", g.bus)
            g.validate(f"ibrs.{g.id}")
        for g in (*self.generators, *self.ibrs):
            if not 0.5 < g.v_set < 1.5:
                raise SchemaError(f"{g.id}.v_set", "voltage set point out of range")
        slack = self.slack_bus
        if self.sg_at(slack) is None and self.ibr_at(slack) is None:
            raise NetworkError(f"slack bus {slack} has no generator")
        for sc in self.scenarios.values():
            for sp in sc.generators:
                if not 0.9 < sp.v_set < 1.1:
                    raise SchemaError(f"scenarios.{sc.id}.{sp.id}.v_set", "must lie in (0.9, 1.1)")
                if not sp.s_nom > 0:
                    raise SchemaError(f"scenarios.{sc.id}.{sp.id}.s_nom", "must be > 0")

    def digest(self) -> str:
        return self.source_hash


# ---------------------------------------------------------------------------
# file ingestion


def _req(rec: Mapping[str, Any], key: str, where: str, kind=None):
    if key not in rec:
        raise SchemaError(f"{where}.{key}", "missing required field")
    val = rec[key]
    if kind is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise SchemaError(f"{where}.{key}", f"expected a number, got {val!r}")
        return float(val)
    if kind is str:
        return str(val)
    return val


def _params(cls, table: Mapping[str, Any], where: str):
    names = set(cls.__dataclass_fields__)
    unknown = set(table) - names
    if unknown:
        raise SchemaError(f"{where}.{sorted(unknown)[0]}", "unknown parameter")
    for key, val in table.items():
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise SchemaError(f"{where}.{key}", f"expected a number, got {val!r}")
    try:
        return cls(**{k: float(v) for k, v in table.items()})
    except TypeError as exc:
        raise SchemaError(where, str(exc)) from None


def resolve_data_file(name: str | os.PathLike) -> Path:
    """Find a network file by path, then on $IBRSTAB_DATA_PATH, then in package data."""
    p = Path(name)
    if p.exists():
        return p
    search = [Path(d) for d in os.environ.get(DATA_PATH_ENV, "").split(os.pathsep) if d]
    for d in (*search, DATA_DIR):
        if (d / p.name).exists():
            return d / p.name
    raise FileNotFoundError(f"network file not found: {name}")


def parse_network(doc: Mapping[str, Any], source_hash: str = "") -> NetworkModel:
    version = doc.get("schema_version")
    if version is None:
        raise SchemaError("schema_version", "missing required field")
    if version != SCHEMA_VERSION:
        raise SchemaError("schema_version", f"unsupported version {version!r}")
    s_base = _req(doc, "s_base", "network", float)
    f_base = _req(doc, "f_base", "network", float)
    zones = {}
    for i, z in enumerate(doc.get("zones", [])):
        zones[_req(z, "id", f"zones[{i}]", str)] = _req(z, "v_base", f"zones[{i}]", float)
    base = PerUnitBase(s_base, f_base, zones)
    load_scale = float(doc.get("load_scale", 1.0))
    if not load_scale > 0:
        raise SchemaError("load_scale", "must be > 0")

    buses = tuple(
        BusSpec(_req(b, "id", f"buses[{i}]", str), _req(b, "zone", f"buses[{i}]", str),
                _req(b, "kind", f"buses[{i}]", str))
        for i, b in enumerate(doc.get("buses", []))
    )
    branches = []
    for i, r in enumerate(doc.get("branches", [])):
        w = f"branches[{i}]"
        k = s_base / _req(r, "base_mva", w, float)
        branches.append(BranchSpec(
            _req(r, "id", w, str), _req(r, "from", w, str), _req(r, "to", w, str),
            _req(r, "r", w, float) * k, _req(r, "x", w, float) * k,
            float(r.get("b_shunt", 0.0)) / k,
        ))
    transformers = []
    for i, r in enumerate(doc.get("transformers", [])):
        w = f"transformers[{i}]"
        transformers.append(TransformerSpec(
            _req(r, "id", w, str), _req(r, "from", w, str), _req(r, "to", w, str),
            _req(r, "s_nom", w, float), _req(r, "r_w", w, float), _req(r, "x_w", w, float),
            float(r.get("r_fe", math.inf)), float(r.get("x_m", math.inf)),
        ))
    loads = tuple(
        LoadSpec(_req(r, "id", f"loads[{i}]", str), _req(r, "bus", f"loads[{i}]", str),
                 _req(r, "p", f"loads[{i}]", float) * load_scale,
                 _req(r, "q", f"loads[{i}]", float) * load_scale)
        for i, r in enumerate(doc.get("loads", []))
    )
    shunts = tuple(
        ShuntSpec(_req(r, "id", f"shunts[{i}]", str), _req(r, "bus", f"shunts[{i}]", str),
                  _req(r, "q", f"shunts[{i}]", float))
        for i, r in enumerate(doc.get("shunts", []))
    )
    machines = {k: _params(MachineParams, v, f"machines.{k}") for k, v in doc.get("machines", {}).items()}
    governors = {k: _params(GovernorParams, v, f"governors.{k}") for k, v in doc.get("governors", {}).items()}
    exciters = {k: _params(ExciterParams, v, f"exciters.{k}") for k, v in doc.get("exciters", {}).items()}

    def lookup(lib, key, where):
        if key is None:
            return None
        if key not in lib:
            raise SchemaError(where, f"unknown parameter set {key!r}")
        return lib[key]

    generators = []
    for i, r in enumerate(doc.get("generators", [])):
        w = f"generators[{i}]"
        generators.append(SgSpec(
            _req(r, "id", w, str), _req(r, "bus", w, str), _req(r, "s_nom", w, float),
            _req(r, "p", w, float), _req(r, "v_set", w, float),
            lookup(machines, _req(r, "machine", w, str), f"{w}.machine"),
            lookup(governors, r.get("governor"), f"{w}.governor"),
            lookup(exciters, r.get("exciter"), f"{w}.exciter"),
        ))
    ibrs = []
    for i, r in enumerate(doc.get("ibrs", [])):
        w = f"ibrs[{i}]"
        fields = set(IbrSpec.__dataclass_fields__)
        unknown = set(r) - fields
        if unknown:
            raise SchemaError(f"{w}.{sorted(unknown)[0]}", "unknown field")
        ibrs.append(IbrSpec(**r))
    scenarios = {}
    for i, r in enumerate(doc.get("scenarios", [])):
        w = f"scenarios[{i}]"
        sid = int(_req(r, "id", w))
        gens = tuple(
            GenSetpoint(_req(g, "id", f"{w}.generators[{j}]", str), _req(g, "s_nom", f"{w}.generators[{j}]", float),
                        _req(g, "p", f"{w}.generators[{j}]", float), _req(g, "v_set", f"{w}.generators[{j}]", float))
            for j, g in enumerate(_req(r, "generators", w))
        )
        scenarios[sid] = Scenario(sid, _req(r, "s_gen_total", w, float), _req(r, "s_load_peak", w, float), gens)
    return NetworkModel(
        name=str(doc.get("name", "network")), base=base, buses=buses, branches=tuple(branches),
        transformers=tuple(transformers), loads=loads, shunts=shunts, generators=tuple(generators),
        ibrs=tuple(ibrs), scenarios=scenarios, load_scale=load_scale, schema_version=version,
        source_hash=source_hash,
    )


def load_network(path: str | os.PathLike) -> NetworkModel:
    """Read and validate a network file."""
    path = resolve_data_file(path)
    raw = path.read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError(str(path), f"not a valid network file: {exc}") from None
    return parse_network(doc, hashlib.sha256(raw).hexdigest())


def bundled_network() -> NetworkModel:
    return load_network(DATA_DIR / "cigre_hv.net")


# ---------------------------------------------------------------------------
# edits (all return new models)


def apply_scenario(net: NetworkModel, scenario: int) -> NetworkModel:
    """Overlay ratings and set points of a scenario onto the generators."""
    if scenario not in net.scenarios:
        raise NetworkError(f"unknown scenario {scenario!r}")
    sc = net.scenarios[scenario]
    gens = []
    for g in net.generators:
        sp = sc.setpoint(g.id)
        gens.append(g if sp is None else replace(g, s_nom=sp.s_nom, p=sp.p, v_set=sp.v_set))
    ibrs = []
    for g in net.ibrs:
        sp = sc.setpoint(g.id)
        # the plant rating is fixed by its unit count
        ibrs.append(g if sp is None else replace(g, p=sp.p, v_set=sp.v_set))
    return replace(net, generators=tuple(gens), ibrs=tuple(ibrs), scenario_id=scenario)


def replace_sg_with_ibr(net: NetworkModel, bus: str, ibr: IbrSpec) -> NetworkModel:
    """Swap the machine at ``bus`` for an inverter plant of the same rating and dispatch."""
    sg = net.sg_at(bus)
    if sg is None:
        raise NetworkError(f"no synchronous generator at bus {bus}")
    units = round(sg.s_nom / IBR_UNIT_MVA)
    new = replace(ibr, id=sg.id, bus=bus, s_nom=sg.s_nom, unit_count=units, p=sg.p, v_set=sg.v_set)
    gens = tuple(g for g in net.generators if g.bus != bus)
    return replace(net, generators=gens, ibrs=(*net.ibrs, new))


def replace_ibr_with_sg(net: NetworkModel, bus: str, sg: SgSpec) -> NetworkModel:
    ibr = net.ibr_at(bus)
    if ibr is None:
        raise NetworkError(f"no IBR at bus {bus}")
    new = replace(sg, bus=bus, p=ibr.p, v_set=ibr.v_set)
    ibrs = tuple(g for g in net.ibrs if g.bus != bus)
    pos = net.bus_index()  # generators are listed in bus order
    gens = tuple(sorted((*net.generators, new), key=lambda g: pos[g.bus]))
    return replace(net, generators=gens, ibrs=ibrs)
