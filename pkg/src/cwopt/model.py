"""MILP assembly for the carrier's schedule and its fee-parameterised variants.

Every instance shares one variable layout per scenario: one integer
variable per (arc, fleet, departure period[, waste type]) of the support
graph. Only the objective differs between the carrier model, the
lower-level model under a fee schedule, and the high-point relaxation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from . import emissions
from .network import ArcClass, TimeSpaceNetwork, build_network
from .scenario import Scenario, SiteKind

__all__ = [
    "FeeError",
    "FeeSchedule",
    "MilpInstance",
    "FlowSolution",
    "Layout",
    "build_layout",
    "assemble_m1",
    "assemble_lower",
    "assemble_hpr",
    "assemble_m4_lower",
    "assemble_m4_hpr",
    "carrier_costs",
    "carrier_profit",
    "government_cost",
    "write_lp",
    "read_lp",
]

CLASS_CODE = {ArcClass.FULLY_LOADED: 0, ArcClass.DEADHEADING: 1, ArcClass.SERVICE: 2}
CODE_CLASS = {v: k for k, v in CLASS_CODE.items()}
FEE_TOL = 1e-9


class FeeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeeSchedule:
    """Treatment fee per processing facility and fleet (and waste type), CNY/t."""

    values: np.ndarray  # shape (P, V) or (P, V, C)

    @classmethod
    def constant(cls, scenario: Scenario, value: float, n_types: int | None = None) -> "FeeSchedule":
        shape = (len(scenario.processing), len(scenario.fleets))
        if n_types is not None:
            shape = shape + (n_types,)
        return cls(np.full(shape, float(value)))

    @classmethod
    def from_vector(cls, scenario: Scenario, vec: Sequence[float], typed: bool = False) -> "FeeSchedule":
        shape: tuple[int, ...] = (len(scenario.processing), len(scenario.fleets))
        if typed:
            shape = shape + (len(scenario.waste_types) - 1,)
        return cls(np.asarray(vec, dtype=float).reshape(shape))

    @property
    def vector(self) -> np.ndarray:
        return self.values.reshape(-1)

    def check(self, scenario: Scenario) -> None:
        lo, hi = scenario.econ.fee_lower, scenario.econ.fee_upper
        bad = (self.values < lo - FEE_TOL) | (self.values > hi + FEE_TOL)
        if bad.any():
            idx = tuple(int(k) for k in np.argwhere(bad)[0])
            raise FeeError(f"fee {self.values[idx]} at {idx} outside [{lo}, {hi}]")

    def as_list(self) -> list:
        return self.values.tolist()


@dataclass(frozen=True, eq=False)
class Layout:
    """Variable layout shared by every instance of one scenario."""

    scenario: Scenario
    network: TimeSpaceNetwork
    origin: np.ndarray
    dest: np.ndarray
    fleet: np.ndarray  # position in scenario.fleets
    t: np.ndarray  # departure period
    wtype: np.ndarray  # 0 = empty / untyped
    arc_class: np.ndarray  # CLASS_CODE
    duration: np.ndarray
    typed: bool
    A: sp.csr_matrix
    senses: np.ndarray  # '<', '>', '='
    rhs: np.ndarray
    row_names: tuple[str, ...]
    lb: np.ndarray
    ub: np.ndarray

    @property
    def n_vars(self) -> int:
        return len(self.origin)

    @cached_property
    def loaded(self) -> np.ndarray:
        return self.arc_class == CLASS_CODE[ArcClass.FULLY_LOADED]

    @cached_property
    def pollution_terms(self) -> np.ndarray:
        return emissions.term_vectors(self.scenario, self.origin, self.dest, self.fleet, self.loaded)

    @cached_property
    def leg(self) -> np.ndarray:
        """Loaded-leg label per variable: 'SP', 'SD', 'PD' or ''."""
        kinds = [s.kind for s in self.scenario.sites]
        code = {
            (SiteKind.PRODUCTION, SiteKind.PROCESSING): "SP",
            (SiteKind.PRODUCTION, SiteKind.BACKFILL): "SD",
            (SiteKind.PROCESSING, SiteKind.BACKFILL): "PD",
        }
        return np.array([code.get((kinds[a], kinds[b]), "") for a, b in zip(self.origin, self.dest)])

    @cached_property
    def load_tonnes(self) -> np.ndarray:
        return np.array([f.rated_load for f in self.scenario.fleets])[self.fleet] / 1000.0

    def key(self, k: int) -> tuple[int, ...]:
        base = (int(self.origin[k]), int(self.dest[k]), int(self.fleet[k]), int(self.t[k]))
        return base + (int(self.wtype[k]),) if self.typed else base


@dataclass(frozen=True, eq=False)
class MilpInstance:
    layout: Layout
    c: np.ndarray
    tag: str
    const: float = 0.0

    # sense is always minimize
    @property
    def n_vars(self) -> int:
        return self.layout.n_vars

    @property
    def n_rows(self) -> int:
        return self.layout.A.shape[0]

    @property
    def A(self) -> sp.csr_matrix:
        return self.layout.A

    @property
    def senses(self) -> np.ndarray:
        return self.layout.senses

    @property
    def rhs(self) -> np.ndarray:
        return self.layout.rhs

    @property
    def lb(self) -> np.ndarray:
        return self.layout.lb

    @property
    def ub(self) -> np.ndarray:
        return self.layout.ub

    @property
    def row_names(self) -> tuple[str, ...]:
        return self.layout.row_names

    @property
    def scenario_hash(self) -> str:
        return self.layout.scenario.content_hash

    @property
    def pollution_terms(self) -> np.ndarray:
        return self.layout.pollution_terms

    def objective(self, x: np.ndarray) -> float:
        return math.fsum((self.c * np.asarray(x, dtype=float)).tolist()) + self.const

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Constraint violation per row (0 when satisfied)."""
        ax = self.A @ np.asarray(x, dtype=float)
        viol = np.zeros_like(ax)
        le, ge, eq = self.senses == "<", self.senses == ">", self.senses == "="
        viol[le] = np.maximum(0.0, ax[le] - self.rhs[le])
        viol[ge] = np.maximum(0.0, self.rhs[ge] - ax[ge])
        viol[eq] = np.abs(ax[eq] - self.rhs[eq])
        return viol

    def integer_forms(self) -> list[tuple[str, np.ndarray]]:
        """Linear forms with integer values at every integer point, worth bounding below.

        Only the total number of dispatched trucks for now: its relaxation
        minimum rounded up is a valid floor on the fleet in use.
        """
        lay = self.layout
        return [("dispatch_floor", (lay.origin == lay.scenario.depot).astype(float))]

    def is_feasible(self, x: np.ndarray, tol: float = 1e-6) -> bool:
        x = np.asarray(x)
        return bool(
            (x >= self.lb - tol).all() and (x <= self.ub + tol).all() and self.residuals(x).max(initial=0.0) <= tol
        )


@dataclass(eq=False)
class FlowSolution:
    instance: MilpInstance
    x: np.ndarray | None  # integer flows; None when no schedule was found
    objective_value: float
    status: str  # optimal_within_gap | time_limit | infeasible
    gap: float = 0.0
    certificate: list[tuple[str, float]] = field(default_factory=list)

    @property
    def layout(self) -> Layout:
        return self.instance.layout

    @property
    def feasible(self) -> bool:
        return self.x is not None and self.status != "infeasible"

    def dispatch_by_fleet(self) -> dict[int, int]:
        lay = self.layout
        out = {}
        depot = lay.scenario.depot
        for v, f in enumerate(lay.scenario.fleets):
            mask = (lay.origin == depot) & (lay.fleet == v)
            out[f.id] = int(self.x[mask].sum())
        return out

    def tonnage_by_leg(self) -> dict[str, float]:
        lay = self.layout
        out = {}
        for leg in ("SP", "SD", "PD"):
            m = lay.leg == leg
            out[leg] = float(math.fsum((lay.load_tonnes[m] * self.x[m]).tolist()))
        return out

    def tonnage_by_fleet(self) -> dict[int, float]:
        lay = self.layout
        out = {}
        for v, f in enumerate(lay.scenario.fleets):
            m = lay.loaded & (lay.fleet == v)
            out[f.id] = float(math.fsum((lay.load_tonnes[m] * self.x[m]).tolist()))
        return out

    def nonzero(self) -> Iterable[tuple[tuple[int, ...], int, str]]:
        lay = self.layout
        for k in np.flatnonzero(self.x):
            yield lay.key(int(k)), int(self.x[k]), CODE_CLASS[int(lay.arc_class[k])].value


# -- layout ------------------------------------------------------------------

def _window_upper_kg(q_tonnes: float, slack: float) -> int:
    """Largest integer kg strictly below (1+slack)*q, but never below q itself."""
    q = Fraction(Decimal(repr(float(q_tonnes)))) * 1000
    bound = (1 + Fraction(Decimal(repr(float(slack))))) * q
    strict = math.ceil(bound) - 1
    return max(strict, math.ceil(q))


def build_layout(scenario: Scenario, typed: bool = False) -> Layout:
    """Variables and constraint rows (dispatch, return, conservation, capacity, windows)."""
    if typed and len(scenario.waste_types) < 2:
        raise FeeError("multi-type model needs waste_types with 'empty' at index 0 and at least one CW type")
    net = build_network(scenario)
    T = scenario.horizon
    n_types = len(scenario.waste_types) - 1 if typed else 1
    cols: dict[str, list[int]] = {k: [] for k in ("origin", "dest", "fleet", "t", "wtype", "cls", "dur")}
    for fam in net.families:
        code = CLASS_CODE[fam.arc_class]
        types = range(1, n_types + 1) if (typed and fam.arc_class is ArcClass.FULLY_LOADED) else (0,)
        if not typed and fam.arc_class is ArcClass.FULLY_LOADED:
            types = (0,)
        for v in range(len(scenario.fleets)):
            for t in range(fam.first, fam.last + 1):
                for c in types:
                    cols["origin"].append(fam.origin)
                    cols["dest"].append(fam.dest)
                    cols["fleet"].append(v)
                    cols["t"].append(t)
                    cols["wtype"].append(c)
                    cols["cls"].append(code)
                    cols["dur"].append(fam.duration)
    origin = np.array(cols["origin"], dtype=np.int64)
    dest = np.array(cols["dest"], dtype=np.int64)
    fleet = np.array(cols["fleet"], dtype=np.int64)
    tt = np.array(cols["t"], dtype=np.int64)
    wtype = np.array(cols["wtype"], dtype=np.int64)
    cls = np.array(cols["cls"], dtype=np.int64)
    dur = np.array(cols["dur"], dtype=np.int64)
    n = len(origin)
    arrival = tt + dur
    service = cls == CLASS_CODE[ArcClass.SERVICE]

    depot = scenario.depot
    n_sites = len(scenario.sites)
    n_fleets = len(scenario.fleets)
    kinds = [s.kind for s in scenario.sites]
    non_depot = [k for k in range(n_sites) if k != depot]
    Q = np.array([f.rated_load for f in scenario.fleets])

    rows: list[int] = []
    colidx: list[int] = []
    vals: list[float] = []
    senses: list[str] = []
    rhs: list[float] = []
    names: list[str] = []

    def add_row(idx: np.ndarray, coef: np.ndarray | float, sense: str, b: float, name: str) -> None:
        r = len(senses)
        idx = np.asarray(idx, dtype=np.int64)
        coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape)
        rows.extend([r] * len(idx))
        colidx.extend(idx.tolist())
        vals.extend(coef.tolist())
        senses.append(sense)
        rhs.append(float(b))
        names.append(name)

    from_depot = origin == depot
    to_depot = dest == depot
    for v, f in enumerate(scenario.fleets):
        idx = np.flatnonzero(from_depot & (fleet == v))
        add_row(idx, 1.0, "<", f.truck_count, f"dispatch[{f.id}]")
    for v, f in enumerate(scenario.fleets):
        out_idx = np.flatnonzero(from_depot & (fleet == v))
        in_idx = np.flatnonzero(to_depot & (fleet == v))
        add_row(
            np.concatenate([out_idx, in_idx]),
            np.concatenate([np.ones(len(out_idx)), -np.ones(len(in_idx))]),
            "=", 0.0, f"return[{f.id}]",
        )

    # A truck arriving at j in period a (or idling there through a) may leave at a+1.
    avail = np.where(service, tt + 1, arrival + 1)
    by_in: dict[tuple[int, int, int], list[int]] = {}
    by_out: dict[tuple[int, int, int], list[int]] = {}
    for k in range(n):
        if dest[k] != depot:
            by_in.setdefault((int(dest[k]), int(fleet[k]), int(avail[k])), []).append(k)
        if origin[k] != depot:
            by_out.setdefault((int(origin[k]), int(fleet[k]), int(tt[k])), []).append(k)
    for j in non_depot:
        sid = scenario.sites[j].id
        for v in range(n_fleets):
            for t in range(T + 1):
                i_in = by_in.get((j, v, t), [])
                i_out = by_out.get((j, v, t), [])
                add_row(
                    np.array(i_in + i_out, dtype=np.int64),
                    np.concatenate([np.ones(len(i_in)), -np.ones(len(i_out))]),
                    "=", 0.0, f"flow[{sid},{scenario.fleets[v].id},{t}]",
                )

    # Site occupancy: arrivals in t plus trucks idling through t.
    occ_t = np.where(service, tt, arrival)
    by_occ: dict[tuple[int, int], list[int]] = {}
    for k in range(n):
        if dest[k] != depot:
            by_occ.setdefault((int(dest[k]), int(occ_t[k])), []).append(k)
    for j in non_depot:
        site = scenario.sites[j]
        for t in range(T + 1):
            add_row(np.array(by_occ.get((j, t), []), dtype=np.int64), 1.0, "<", site.service_capacity,
                    f"cap[{site.id},{t}]")

    loaded = cls == CLASS_CODE[ArcClass.FULLY_LOADED]
    slack = scenario.econ.slack
    for i in scenario.production:
        site = scenario.sites[i]
        idx = np.flatnonzero(loaded & (origin == i))
        add_row(idx, Q[fleet[idx]], ">", site.supply * 1000.0, f"supply_lo[{site.id}]")
        add_row(idx, Q[fleet[idx]], "<", _window_upper_kg(site.supply, slack), f"supply_hi[{site.id}]")
    for j in scenario.backfill:
        site = scenario.sites[j]
        idx = np.flatnonzero(loaded & (dest == j))
        add_row(idx, Q[fleet[idx]], ">", site.demand * 1000.0, f"demand_lo[{site.id}]")
        add_row(idx, Q[fleet[idx]], "<", _window_upper_kg(site.demand, slack), f"demand_hi[{site.id}]")

    A = sp.csr_matrix((vals, (rows, colidx)), shape=(len(senses), n))
    A.sum_duplicates()
    caps = np.array([s.service_capacity for s in scenario.sites])
    trucks = np.array([f.truck_count for f in scenario.fleets])
    ub = np.where(dest == depot, trucks[fleet], np.minimum(caps[dest], trucks[fleet])).astype(float)
    del kinds
    return Layout(
        scenario=scenario, network=net, origin=origin, dest=dest, fleet=fleet, t=tt, wtype=wtype,
        arc_class=cls, duration=dur, typed=typed, A=A, senses=np.array(senses), rhs=np.array(rhs),
        row_names=tuple(names), lb=np.zeros(n), ub=ub,
    )


_LAYOUT_CACHE: dict[tuple[str, bool], Layout] = {}


def layout_for(scenario: Scenario, typed: bool = False) -> Layout:
    key = (scenario.content_hash, typed)
    lay = _LAYOUT_CACHE.get(key)
    if lay is None:
        if len(_LAYOUT_CACHE) > 16:
            _LAYOUT_CACHE.clear()
        lay = _LAYOUT_CACHE[key] = build_layout(scenario, typed)
    return lay


# -- objectives ----------------------------------------------------------------

def carrier_costs(layout: Layout, fees: np.ndarray | float) -> np.ndarray:
    """Per-variable cost of the carrier (negative profit) under the given fees.

    ``fees`` is a scalar (market fee everywhere) or an array indexed
    [facility, fleet] / [facility, fleet, type-1].
    """
    sc = layout.scenario
    depot = sc.depot
    C0 = np.array([f.fixed_cost for f in sc.fleets])[layout.fleet]
    C1 = np.array([f.travel_cost for f in sc.fleets])[layout.fleet]
    Qt = layout.load_tonnes
    C2 = sc.econ.transport_price
    c = np.zeros(layout.n_vars)
    from_depot = layout.origin == depot
    c += np.where(from_depot, C0, 0.0)
    moving = (layout.origin != depot) & (layout.dest != depot) & (layout.origin != layout.dest)
    c += np.where(moving, C1 * layout.duration, 0.0)
    leg = layout.leg
    to_fill = (leg == "SD") | (leg == "PD")
    c -= np.where(to_fill, C2 * Qt, 0.0)
    sp_mask = leg == "SP"
    if np.isscalar(fees) or np.ndim(fees) == 0:
        y = np.full(layout.n_vars, float(fees))
    else:
        fees = np.asarray(fees, dtype=float)
        fac_pos = {p: k for k, p in enumerate(sc.processing)}
        fac = np.array([fac_pos.get(int(d), 0) for d in layout.dest])
        if fees.ndim == 3:
            y = fees[fac, layout.fleet, np.maximum(layout.wtype - 1, 0)]
        else:
            y = fees[fac, layout.fleet]
    c -= np.where(sp_mask, (C2 - y) * Qt, 0.0)
    return c


def _assemble(scenario: Scenario, fees, tag: str, typed: bool = False) -> MilpInstance:
    lay = layout_for(scenario, typed)
    return MilpInstance(lay, carrier_costs(lay, fees), tag)


def assemble_m1(scenario: Scenario, fee: float | None = None) -> MilpInstance:
    """Carrier profit model at a single market treatment fee."""
    return _assemble(scenario, scenario.econ.market_fee if fee is None else fee, "M1")


def assemble_lower(scenario: Scenario, fees: FeeSchedule) -> MilpInstance:
    """Carrier's response problem for a facility x fleet fee schedule."""
    if fees.values.ndim != 2 or fees.values.shape != (len(scenario.processing), len(scenario.fleets)):
        raise FeeError(f"fee schedule shape {fees.values.shape} does not match (P, V)")
    fees.check(scenario)
    return _assemble(scenario, fees.values, "LL")


def assemble_hpr(scenario: Scenario, typed: bool = False) -> MilpInstance:
    """High-point relaxation: minimise pollution over the carrier's feasible region."""
    lay = layout_for(scenario, typed)
    return MilpInstance(lay, lay.pollution_terms.sum(axis=0), "HPR")


def assemble_m4_lower(scenario: Scenario, fees: FeeSchedule) -> MilpInstance:
    """Multi-type lower level: loaded arcs carry a waste-type index, empty arcs type 0."""
    if len(scenario.waste_types) < 2:
        raise FeeError("missing waste-type declaration: need 'empty' (type 0) plus at least one CW type")
    n_types = len(scenario.waste_types) - 1
    if fees.values.shape != (len(scenario.processing), len(scenario.fleets), n_types):
        raise FeeError(f"fee schedule shape {fees.values.shape} does not match (P, V, C)")
    fees.check(scenario)
    return _assemble(scenario, fees.values, "M4-LL", typed=True)


def assemble_m4_hpr(scenario: Scenario) -> MilpInstance:
    return assemble_hpr(scenario, typed=True)


def carrier_profit(solution: FlowSolution, scenario: Scenario, fees) -> float:
    """Carrier profit (CNY) of a schedule under the given fees."""
    lay = solution.layout
    if lay.scenario.content_hash != scenario.content_hash:
        raise ValueError("solution was assembled for a different scenario")
    f = fees.values if isinstance(fees, FeeSchedule) else fees
    c = carrier_costs(lay, f)
    return -math.fsum((c * solution.x).tolist())


def government_cost(solution: FlowSolution, scenario: Scenario, fees) -> float:
    """Second upper-level objective: minus the treatment-fee revenue over S->P loads."""
    lay = solution.layout
    f = fees.values if isinstance(fees, FeeSchedule) else fees
    # fee revenue is exactly the fee part of the carrier's S->P coefficients
    c_fee = carrier_costs(lay, f) - carrier_costs(lay, 0.0)
    return -math.fsum((c_fee * solution.x).tolist())


# -- LP text export ------------------------------------------------------------

def _vname(k: int) -> str:
    return f"x{k}"


def write_lp(instance: MilpInstance, path: str | Path) -> None:
    """Write the instance in CPLEX LP text format."""
    lay = instance.layout
    lines = ["\\ " + f"{instance.tag} scenario={instance.scenario_hash}", "Minimize", " obj:"]
    terms = [f" {'+' if v >= 0 else '-'} {abs(float(v))!r} {_vname(k)}" for k, v in enumerate(instance.c) if v != 0]
    lines.extend(terms or [" 0 x0"])
    lines.append("Subject To")
    A = instance.A.tocsr()
    op = {"<": "<=", ">": ">=", "=": "="}
    for r in range(A.shape[0]):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        body = "".join(
            f" {'+' if v >= 0 else '-'} {abs(float(v))!r} {_vname(int(k))}" for k, v in zip(A.indices[lo:hi], A.data[lo:hi])
        )
        name = f"r{r}"
        lines.append(f" {name}:{body or ' 0 x0'} {op[instance.senses[r]]} {float(instance.rhs[r])!r}")
    lines.append("Bounds")
    for k in range(instance.n_vars):
        lines.append(f" {float(lay.lb[k])!r} <= {_vname(k)} <= {float(lay.ub[k])!r}")
    lines.append("Generals")
    for start in range(0, instance.n_vars, 10):
        lines.append(" " + " ".join(_vname(k) for k in range(start, min(start + 10, instance.n_vars))))
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_lp(path: str | Path) -> dict:
    """Parse the subset of LP format written by write_lp (for round-trip checks)."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    section = None
    obj: dict[int, float] = {}
    rows: list[tuple[dict[int, float], str, float]] = []
    bounds: dict[int, tuple[float, float]] = {}

    def parse_terms(tokens: list[str]) -> dict[int, float]:
        out: dict[int, float] = {}
        k = 0
        while k < len(tokens):
            sign = -1.0 if tokens[k] == "-" else 1.0
            coef = float(tokens[k + 1])
            var = int(tokens[k + 2][1:])
            out[var] = out.get(var, 0.0) + sign * coef
            k += 3
        return out

    obj_tokens: list[str] = []
    for line in text:
        s = line.strip()
        if not s or s.startswith("\\"):
            continue
        if s in ("Minimize", "Subject To", "Bounds", "Generals", "End"):
            section = s
            continue
        if section == "Minimize":
            obj_tokens.extend(s.replace("obj:", "").split())
        elif section == "Subject To":
            _, body = s.split(":", 1)
            toks = body.split()
            sense, b = toks[-2], float(toks[-1])
            terms = toks[:-2]
            rows.append(({} if terms == ["0", "x0"] else parse_terms(terms), sense, b))
        elif section == "Bounds":
            lo, _, var, _, hi = s.split()
            bounds[int(var[1:])] = (float(lo), float(hi))
    if obj_tokens and obj_tokens != ["0", "x0"]:
        obj = parse_terms(obj_tokens)
    return {"objective": obj, "rows": rows, "bounds": bounds}
