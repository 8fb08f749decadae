"""Problem instances: sites, fleets, distances and economic/emission parameters."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import jsonschema
import numpy as np

__all__ = [
    "SiteKind",
    "FleetKind",
    "Site",
    "Fleet",
    "EconParams",
    "EmissionParams",
    "Scenario",
    "ScenarioError",
    "ScenarioParseError",
    "load_scenario",
    "dump_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
    "generate_scenario",
    "travel_intervals",
    "KMH",
]

KMH = 1000.0 / 3600.0  # m/s per km/h
EMPTY_TYPE = "empty"


class ScenarioError(ValueError):
    """Raised when a scenario violates one or more invariants."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


class ScenarioParseError(ValueError):
    """Raised when a scenario file cannot be read or does not match the schema."""


class SiteKind(str, Enum):
    DEPOT = "depot"
    PROCESSING = "processing"
    PRODUCTION = "production"
    BACKFILL = "backfill"


class FleetKind(str, Enum):
    ELECTRIC = "electric"
    DIESEL = "diesel"


@dataclass(frozen=True)
class Site:
    id: int
    kind: SiteKind
    service_capacity: int = 1  # trucks per interval
    supply: float = 0.0  # tonnes, production sites
    demand: float = 0.0  # tonnes, backfill sites
    pollution_factor: float = 0.0  # index per tonne, processing sites


@dataclass(frozen=True)
class Fleet:
    id: int
    kind: FleetKind
    truck_count: int
    rated_load: float  # kg
    unladen_weight: float  # kg
    fixed_cost: float  # CNY per truck per day
    travel_cost: float  # CNY per interval

    @property
    def is_diesel(self) -> bool:
        return self.kind is FleetKind.DIESEL

    @property
    def load_tonnes(self) -> float:
        return self.rated_load / 1000.0


@dataclass(frozen=True)
class EconParams:
    transport_price: float = 25.0  # CNY/t
    market_fee: float = 5.0  # CNY/t
    fee_lower: float = -3.0
    fee_upper: float = 7.0
    slack: float = 0.05


@dataclass(frozen=True)
class EmissionParams:
    """CMEM constants. The derived groups are properties so they can never drift."""

    xi: float = 1.0
    engine_friction: float = 0.2  # kJ/rev/L
    engine_speed: float = 32.0  # rev/s
    displacement: float = 12.54  # L
    heating_value: float = 44.0  # kJ/g
    eta: float = 0.9
    drivetrain_eff: float = 0.4
    accel: float = 0.0  # m/s^2
    gravity: float = 9.81
    road_angle: float = 0.0  # degrees
    drag: float = 0.7
    rolling: float = 0.01
    air_density: float = 1.2041  # kg/m^3
    frontal_area: float = 8.9  # m^2
    fuel_conv: float = 737.0

    @property
    def lam(self) -> float:
        return self.xi / (self.heating_value * self.fuel_conv)

    @property
    def gamma(self) -> float:
        return 1.0 / (1000.0 * self.drivetrain_eff * self.eta)

    @property
    def alpha(self) -> float:
        rad = math.radians(self.road_angle)
        return (
            self.accel
            + self.gravity * math.sin(rad)
            + self.gravity * self.rolling * math.cos(rad)
        )

    @property
    def beta(self) -> float:
        return 0.5 * self.drag * self.air_density * self.frontal_area

    @property
    def kNV(self) -> float:
        return self.engine_friction * self.engine_speed * self.displacement


def travel_intervals(distance: float, speed: float, interval: float) -> int:
    """Whole intervals needed to cover ``distance`` metres at ``speed`` m/s.

    ``interval`` is in minutes. Rounds up; a tiny tolerance keeps exact
    multiples (e.g. 10 km at 30 km/h over 10 min) from spilling into the
    next interval through float noise.
    """
    if distance <= 0:
        return 0
    minutes = distance / speed / 60.0
    return max(1, math.ceil(minutes / interval - 1e-9))


@dataclass(frozen=True, eq=False)
class Scenario:
    sites: tuple[Site, ...]
    fleets: tuple[Fleet, ...]
    distances: tuple[tuple[float, ...], ...]  # metres, indexed by site position
    speed: float  # m/s
    interval: float  # minutes
    horizon: int  # T
    econ: EconParams = field(default_factory=EconParams)
    emissions: EmissionParams = field(default_factory=EmissionParams)
    waste_types: tuple[str, ...] = ()
    name: str = "scenario"

    def __post_init__(self) -> None:
        problems = _validate(self)
        if problems:
            raise ScenarioError(problems)

    # -- lookups -----------------------------------------------------------
    @cached_property
    def distance_matrix(self) -> np.ndarray:
        arr = np.array(self.distances, dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def intervals(self) -> np.ndarray:
        n = len(self.sites)
        r = np.zeros((n, n), dtype=int)
        for a in range(n):
            for b in range(n):
                r[a, b] = travel_intervals(self.distances[a][b], self.speed, self.interval)
        r.setflags(write=False)
        return r

    @property
    def virtual_horizon(self) -> int:
        return int(self.intervals.max()) + 1

    @cached_property
    def index(self) -> dict[int, int]:
        return {s.id: k for k, s in enumerate(self.sites)}

    def of_kind(self, kind: SiteKind) -> list[int]:
        """Positions (not ids) of sites of one kind, in file order."""
        return [k for k, s in enumerate(self.sites) if s.kind is kind]

    @property
    def depot(self) -> int:
        return self.of_kind(SiteKind.DEPOT)[0]

    @property
    def processing(self) -> list[int]:
        return self.of_kind(SiteKind.PROCESSING)

    @property
    def production(self) -> list[int]:
        return self.of_kind(SiteKind.PRODUCTION)

    @property
    def backfill(self) -> list[int]:
        return self.of_kind(SiteKind.BACKFILL)

    @property
    def total_supply(self) -> float:
        return sum(s.supply for s in self.sites if s.kind is SiteKind.PRODUCTION)

    @cached_property
    def content_hash(self) -> str:
        payload = json.dumps(scenario_to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def with_econ(self, **changes: Any) -> "Scenario":
        return replace(self, econ=replace(self.econ, **changes))

    def with_fleet(self, fleet_id: int, **changes: Any) -> "Scenario":
        fleets = tuple(replace(f, **changes) if f.id == fleet_id else f for f in self.fleets)
        return replace(self, fleets=fleets)

    def feasibility_warnings(self) -> list[str]:
        """Cheap screen: can the fleet haul the total supply at all?"""
        warnings = []
        if not self.production:
            return warnings
        # A loaded trip needs at least one travel interval plus one service interval.
        trips_per_truck = max(0, self.horizon // 2)
        capacity_t = sum(f.truck_count * f.load_tonnes for f in self.fleets) * trips_per_truck
        if capacity_t < self.total_supply:
            warnings.append(
                f"fleet haul capacity {capacity_t:.1f} t over the horizon is below "
                f"total supply {self.total_supply:.1f} t"
            )
        return warnings


def _validate(s: Scenario) -> list[str]:
    problems: list[str] = []
    kinds = [site.kind for site in s.sites]
    if kinds.count(SiteKind.DEPOT) != 1:
        problems.append(f"Site: exactly one depot required, found {kinds.count(SiteKind.DEPOT)}")
    ids = [site.id for site in s.sites]
    if len(set(ids)) != len(ids):
        problems.append("Site: duplicate site ids")
    for site in s.sites:
        if site.kind is not SiteKind.DEPOT and site.service_capacity < 1:
            problems.append(f"Site {site.id}: service_capacity must be >= 1")
        if site.supply < 0:
            problems.append(f"Site {site.id}: supply must be >= 0")
        if site.demand < 0:
            problems.append(f"Site {site.id}: demand must be >= 0")
        if site.pollution_factor < 0:
            problems.append(f"Site {site.id}: pollution_factor must be >= 0")
    fleet_ids = [f.id for f in s.fleets]
    if len(set(fleet_ids)) != len(fleet_ids):
        problems.append("Fleet: duplicate fleet ids")
    for f in s.fleets:
        if f.truck_count < 0:
            problems.append(f"Fleet {f.id}: truck_count must be >= 0")
        if f.rated_load <= 0:
            problems.append(f"Fleet {f.id}: rated_load must be > 0")
        elif abs(f.rated_load - round(f.rated_load)) > 1e-9:
            problems.append(f"Fleet {f.id}: rated_load must be a whole number of kg")
        if f.unladen_weight <= 0:
            problems.append(f"Fleet {f.id}: unladen_weight must be > 0")
        if f.fixed_cost < 0 or f.travel_cost < 0:
            problems.append(f"Fleet {f.id}: costs must be >= 0")
    e = s.econ
    if e.fee_lower > e.fee_upper:
        problems.append(f"EconParams: fee_lower {e.fee_lower} exceeds fee_upper {e.fee_upper}")
    if e.slack <= 0:
        problems.append("EconParams: slack must be > 0")
    n = len(s.sites)
    if len(s.distances) != n or any(len(row) != n for row in s.distances):
        problems.append(f"distances: expected a {n}x{n} matrix")
    else:
        for a in range(n):
            for b in range(n):
                d = s.distances[a][b]
                if a == b and d != 0:
                    problems.append(f"distances: d[{a}][{a}] must be 0")
                elif a != b and not d > 0:
                    problems.append(f"distances: d[{a}][{b}] must be > 0")
    if s.speed <= 0:
        problems.append("horizon: speed must be > 0")
    if s.interval <= 0:
        problems.append("horizon: interval must be > 0")
    if s.horizon < 1:
        problems.append("horizon: periods must be >= 1")
    if s.waste_types and s.waste_types[0] != EMPTY_TYPE:
        problems.append(f"waste_types: type 0 must be declared as {EMPTY_TYPE!r}")
    return problems


# -- serialization -----------------------------------------------------------

_DIST_UNITS = {"m": 1.0, "km": 1000.0}
_SPEED_UNITS = {"m/s": 1.0, "km/h": KMH}
_MASS_UNITS = {"kg": 1.0, "t": 1000.0}


def _schema() -> dict:
    text = resources.files("cwopt").joinpath("data/scenario.schema.json").read_text("utf-8")
    return json.loads(text)


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "name": s.name,
        "sites": [
            {
                "id": site.id,
                "kind": site.kind.value,
                "service_capacity": site.service_capacity,
                "supply_t": site.supply,
                "demand_t": site.demand,
                "pollution_factor": site.pollution_factor,
            }
            for site in s.sites
        ],
        "fleets": [
            {
                "id": f.id,
                "kind": f.kind.value,
                "truck_count": f.truck_count,
                "mass_unit": "kg",
                "rated_load": f.rated_load,
                "unladen_weight": f.unladen_weight,
                "fixed_cost": f.fixed_cost,
                "travel_cost": f.travel_cost,
            }
            for f in s.fleets
        ],
        "distances": {"unit": "m", "matrix": [list(row) for row in s.distances]},
        "horizon": {
            "periods": s.horizon,
            "interval": {"value": s.interval, "unit": "min"},
            "speed": {"value": s.speed, "unit": "m/s"},
        },
        "econ": {
            "transport_price": s.econ.transport_price,
            "market_fee": s.econ.market_fee,
            "fee_lower": s.econ.fee_lower,
            "fee_upper": s.econ.fee_upper,
            "slack": s.econ.slack,
        },
        "emissions": {k: getattr(s.emissions, k) for k in EmissionParams.__dataclass_fields__},
        "waste_types": list(s.waste_types),
    }


def scenario_from_dict(doc: Mapping[str, Any]) -> Scenario:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioParseError(f"schema violation at {where}: {exc.message}") from exc

    sites = tuple(
        Site(
            id=int(d["id"]),
            kind=SiteKind(d["kind"]),
            service_capacity=int(d.get("service_capacity", 1)),
            supply=float(d.get("supply_t", 0.0)),
            demand=float(d.get("demand_t", 0.0)),
            pollution_factor=float(d.get("pollution_factor", 0.0)),
        )
        for d in doc["sites"]
    )
    fleets = []
    for d in doc["fleets"]:
        scale = _MASS_UNITS[d["mass_unit"]]
        fleets.append(
            Fleet(
                id=int(d["id"]),
                kind=FleetKind(d["kind"]),
                truck_count=int(d["truck_count"]),
                rated_load=float(d["rated_load"]) * scale,
                unladen_weight=float(d["unladen_weight"]) * scale,
                fixed_cost=float(d["fixed_cost"]),
                travel_cost=float(d["travel_cost"]),
            )
        )
    dscale = _DIST_UNITS[doc["distances"]["unit"]]
    matrix = tuple(tuple(float(v) * dscale for v in row) for row in doc["distances"]["matrix"])
    hz = doc["horizon"]
    speed = float(hz["speed"]["value"]) * _SPEED_UNITS[hz["speed"]["unit"]]
    emissions = EmissionParams(**doc["emissions"])
    econ = EconParams(**doc["econ"])
    return Scenario(
        sites=sites,
        fleets=tuple(fleets),
        distances=matrix,
        speed=speed,
        interval=float(hz["interval"]["value"]),
        horizon=int(hz["periods"]),
        econ=econ,
        emissions=emissions,
        waste_types=tuple(doc.get("waste_types", ())),
        name=str(doc.get("name", "scenario")),
    )


def load_scenario(path: str | Path) -> Scenario:
    """Read, schema-check and validate a scenario JSON file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioParseError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(doc)


def dump_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n", encoding="utf-8")


# -- synthetic instances -----------------------------------------------------

DEFAULT_FLEETS = (
    Fleet(0, FleetKind.ELECTRIC, 30, 15500.0, 15500.0, 550.0, 9.5),
    Fleet(1, FleetKind.DIESEL, 210, 15500.0, 15500.0, 750.0, 19.5),
)


def generate_scenario(
    seed: int,
    counts: Mapping[str, int],
    fleet_spec: Iterable[Fleet] = DEFAULT_FLEETS,
    bbox_km: tuple[float, float] = (20.0, 25.0),
    *,
    horizon: int = 60,
    interval: float = 10.0,
    speed_kmh: float = 30.0,
    mean_t: float = 900.0,
    sd_t: float = 100.0,
    capacities: Mapping[str, int] | None = None,
    pollution_factors: Sequence[float] | None = None,
    econ: EconParams | None = None,
    waste_types: Sequence[str] = (),
    name: str | None = None,
) -> Scenario:
    """Place sites uniformly in a box and draw Normal supplies/demands.

    Site order is depot, processing, production, backfill. Distances are
    Euclidean, rounded to the metre. Supplies and demands are clipped at
    zero and rounded to whole tonnes.
    """
    n_p, n_s, n_d = int(counts["P"]), int(counts["S"]), int(counts["D"])
    if min(n_p, n_s, n_d) < 1:
        raise ValueError("counts must be >= 1 for P, S and D")
    if bbox_km[0] <= 0 or bbox_km[1] <= 0:
        raise ValueError("bbox_km must be positive")
    caps = {"processing": 3, "production": 2, "backfill": 3}
    caps.update(capacities or {})
    rng = np.random.default_rng(seed)
    n = 1 + n_p + n_s + n_d
    xy = rng.uniform(0.0, 1.0, size=(n, 2)) * np.array(bbox_km) * 1000.0
    diff = xy[:, None, :] - xy[None, :, :]
    dist = np.rint(np.sqrt((diff**2).sum(axis=-1)))
    dist[dist < 1] = 1.0
    np.fill_diagonal(dist, 0.0)

    supply = np.rint(np.clip(rng.normal(mean_t, sd_t, n_s), 0.0, None))
    demand = np.rint(np.clip(rng.normal(mean_t, sd_t, n_d), 0.0, None))
    if pollution_factors is None:
        pollution_factors = [round(0.2 * (k + 1), 10) for k in range(n_p)]

    sites = [Site(0, SiteKind.DEPOT, 0)]
    for k in range(n_p):
        sites.append(
            Site(len(sites), SiteKind.PROCESSING, caps["processing"],
                 pollution_factor=float(pollution_factors[k % len(pollution_factors)]))
        )
    for k in range(n_s):
        sites.append(Site(len(sites), SiteKind.PRODUCTION, caps["production"], supply=float(supply[k])))
    for k in range(n_d):
        sites.append(Site(len(sites), SiteKind.BACKFILL, caps["backfill"], demand=float(demand[k])))

    return Scenario(
        sites=tuple(sites),
        fleets=tuple(fleet_spec),
        distances=tuple(tuple(float(v) for v in row) for row in dist),
        speed=speed_kmh * KMH,
        interval=interval,
        horizon=horizon,
        econ=econ or EconParams(),
        waste_types=tuple(waste_types),
        name=name or f"synthetic-{seed}",
    )


def chengdu_like(seed: int = 42, **overrides: Any) -> Scenario:
    """31-site reference instance shaped like the Longquanyi case (3 P, 17 S, 10 D)."""
    kwargs: dict[str, Any] = dict(counts={"P": 3, "S": 17, "D": 10}, name=f"chengdu-like-{seed}")
    kwargs.update(overrides)
    return generate_scenario(seed, **kwargs)
