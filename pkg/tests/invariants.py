"""Independent constraint checks on solved schedules, plus a random scenario source.

The checks re-derive every rule from the arc records (origin, destination,
fleet, departure, duration, class) with integer and Fraction arithmetic;
they never look at the assembled constraint matrix.
"""

from __future__ import annotations

from collections import Counter
from decimal import Decimal
from fractions import Fraction

import numpy as np

from cwopt.bilevel import BilevelError, evaluate
from cwopt.model import (
    FeeSchedule,
    FlowSolution,
    assemble_hpr,
    assemble_lower,
    assemble_m1,
    assemble_m4_hpr,
    assemble_m4_lower,
)
from cwopt.scenario import KMH, EconParams, Fleet, FleetKind, Scenario, Site, SiteKind
from cwopt.solver import SolveConfig, solve

from fixtures import random_fees

CFG = SolveConfig(time_limit=5.0)
TIES = SolveConfig(time_limit=5.0, gap_target=0.0, tie_samples=2)


def _exact(v: float) -> Fraction:
    return Fraction(Decimal(repr(float(v))))


def violations(sol: FlowSolution) -> list[str]:
    """Every broken rule, as readable strings; empty when the schedule is valid."""
    lay = sol.layout
    sc = lay.scenario
    out: list[str] = []
    x = sol.x
    if x is None:
        return ["no schedule"]
    if not np.issubdtype(np.asarray(x).dtype, np.integer) and not np.array_equal(x, np.round(x)):
        out.append("fractional flow")
    if (x < 0).any():
        out.append("negative flow")
    depot = sc.depot
    arcs = []
    for k in np.flatnonzero(x):
        o, d, v, t = int(lay.origin[k]), int(lay.dest[k]), int(lay.fleet[k]), int(lay.t[k])
        dur = int(lay.duration[k])
        cls = ("service", "loaded", "deadheading")[0 if o == d else (1 if lay.loaded[k] else 2)]
        arcs.append((o, d, v, t, dur, cls, int(x[k])))
        if t < 0 or t + dur > sc.horizon:
            out.append(f"arc {o}->{d} at {t} leaves the horizon")

    # fleet size and depot return
    for v, f in enumerate(sc.fleets):
        sent = sum(n for o, d, fv, *_, n in arcs if fv == v and o == depot)
        back = sum(n for o, d, fv, *_, n in arcs if fv == v and d == depot)
        if sent > f.truck_count:
            out.append(f"fleet {f.id}: {sent} trucks dispatched, {f.truck_count} owned")
        if sent != back:
            out.append(f"fleet {f.id}: {sent} out, {back} back")

    # conservation: trucks ready at (j, v, t) equal trucks leaving (j, v, t)
    ready: Counter = Counter()
    leave: Counter = Counter()
    for o, d, v, t, dur, cls, n in arcs:
        if o != depot:
            leave[o, v, t] += n
        if d != depot:
            ready[d, v, t + 1 if cls == "service" else t + dur + 1] += n
    for key in set(ready) | set(leave):
        if ready[key] != leave[key]:
            out.append(f"conservation at site {key[0]}, fleet {key[1]}, period {key[2]}: "
                       f"{ready[key]} in, {leave[key]} out")

    # site capacity: arrivals in t plus trucks idling through t
    occ: Counter = Counter()
    for o, d, v, t, dur, cls, n in arcs:
        if d != depot:
            occ[d, t if cls == "service" else t + dur] += n
    for (j, t), n in occ.items():
        if n > sc.sites[j].service_capacity:
            out.append(f"site {sc.sites[j].id} holds {n} trucks in period {t}")

    # supply and demand windows in tonnes, exact
    slack = _exact(sc.econ.slack)
    carried_from: Counter = Counter()
    carried_to: Counter = Counter()
    for o, d, v, t, dur, cls, n in arcs:
        if cls == "loaded":
            kg = _exact(sc.fleets[v].rated_load) * n
            carried_from[o] += kg
            carried_to[d] += kg
    for i in sc.production:
        q = _exact(sc.sites[i].supply) * 1000
        got = carried_from[i]
        if not (got >= q and (got < (1 + slack) * q or got == q)):
            out.append(f"production site {sc.sites[i].id}: {float(got)} kg against {float(q)} kg")
    for j in sc.backfill:
        q = _exact(sc.sites[j].demand) * 1000
        got = carried_to[j]
        if not (got >= q and (got < (1 + slack) * q or got == q)):
            out.append(f"backfill site {sc.sites[j].id}: {float(got)} kg against {float(q)} kg")
    for o, d, v, t, dur, cls, n in arcs:
        ko, kd = sc.sites[o].kind, sc.sites[d].kind
        if cls == "loaded" and not ((ko, kd) in {(SiteKind.PRODUCTION, SiteKind.BACKFILL),
                                                 (SiteKind.PRODUCTION, SiteKind.PROCESSING),
                                                 (SiteKind.PROCESSING, SiteKind.BACKFILL)}):
            out.append(f"loaded trip {ko.value}->{kd.value}")
    return out


def random_scenario(seed: int) -> Scenario:
    """Up to two sites of each kind, one to three trucks per fleet, T between 6 and 10.

    Supplies and demands are whole loads of one of the fleets, so most draws are feasible.
    """
    rng = np.random.default_rng(seed)
    n_p, n_s, n_d = (int(v) for v in rng.integers(1, 3, size=3))
    loads = [15500.0, float(rng.choice([15500.0, 10000.0, 12000.0]))]
    fleets = (
        Fleet(0, FleetKind.ELECTRIC, int(rng.integers(1, 4)), loads[0], 15500.0,
              float(rng.choice([550.0, 800.0, 1200.0])), 9.5),
        Fleet(1, FleetKind.DIESEL, int(rng.integers(1, 4)), loads[1], float(rng.choice([15500.0, 12000.0])),
              750.0, 19.5),
    )
    unit = [f.rated_load / 1000.0 for f in fleets if f.truck_count > 0] or [15.5]
    sites = [Site(0, SiteKind.DEPOT, 0)]
    for _ in range(n_p):
        sites.append(Site(len(sites), SiteKind.PROCESSING, int(rng.integers(1, 4)),
                          pollution_factor=float(rng.choice([0.2, 0.4, 0.6]))))
    for _ in range(n_s):
        sites.append(Site(len(sites), SiteKind.PRODUCTION, int(rng.integers(1, 3)),
                          supply=int(rng.integers(0, 3)) * float(rng.choice(unit))))
    for _ in range(n_d):
        sites.append(Site(len(sites), SiteKind.BACKFILL, int(rng.integers(1, 3)),
                          demand=int(rng.integers(0, 2)) * float(rng.choice(unit))))
    m = len(sites)
    d = rng.integers(1500, 9000, size=(m, m)).astype(float)
    d = np.triu(d, 1)
    d = d + d.T
    return Scenario(
        sites=tuple(sites), fleets=fleets, distances=tuple(tuple(float(v) for v in row) for row in d),
        speed=30 * KMH, interval=10.0, horizon=int(rng.integers(6, 11)),
        econ=EconParams(slack=float(rng.choice([0.05, 0.2, 0.5]))),
        waste_types=("empty", "inert", "mixed"), name=f"random-{seed}",
    )


def schedules(seed: int):
    """Every solve path on one random scenario; yields the returned schedules, baseline first."""
    sc = random_scenario(seed)
    m1, _ = solve(assemble_m1(sc), CFG)
    yield m1
    if not m1.feasible:
        return  # fees and objectives never touch the feasible region
    yield solve(assemble_lower(sc, FeeSchedule(random_fees(sc, seed))), CFG)[0]
    yield solve(assemble_hpr(sc), CFG)[0]
    yield solve(assemble_m4_lower(sc, FeeSchedule(random_fees(sc, seed, n_types=2))), CFG)[0]
    yield solve(assemble_m4_hpr(sc), CFG)[0]
    yield solve(assemble_m1(sc), TIES)[0]
    try:
        yield evaluate(random_fees(sc, seed + 1).reshape(-1), sc, CFG, warm=(m1.x,)).solution
    except BilevelError:
        pass
