"""Hand-built scenarios shared by the test modules."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from cwopt.scenario import KMH, EconParams, Fleet, FleetKind, Scenario, Site, SiteKind, generate_scenario

FLEET_MIX = [(1, 1), (0, 2), (2, 0), (1, 0), (0, 1)]


def tiny_scenario(seed: int, typed: bool = False) -> Scenario:
    """Depot plus one site of each kind, at most two trucks, T <= 8."""
    rng = np.random.default_rng(seed)
    n_e, n_d = FLEET_MIX[int(rng.integers(len(FLEET_MIX)))]
    q_e = 15500.0
    q_d = float(rng.choice([15500.0, 10000.0]))
    fleets = (
        Fleet(0, FleetKind.ELECTRIC, n_e, q_e, 15500.0, 550.0, 9.5),
        Fleet(1, FleetKind.DIESEL, n_d, q_d, float(rng.choice([15500.0, 12000.0])), 750.0, 19.5),
    )
    loads = [q for q, n in ((q_e, n_e), (q_d, n_d)) if n > 0]
    supply = int(rng.integers(0, 3)) * float(rng.choice(loads)) / 1000.0
    demand = int(rng.integers(0, 3)) * float(rng.choice(loads)) / 1000.0
    sites = (
        Site(0, SiteKind.DEPOT, 0),
        Site(1, SiteKind.PROCESSING, int(rng.integers(1, 3)), pollution_factor=float(rng.choice([0.2, 0.4, 0.6]))),
        Site(2, SiteKind.PRODUCTION, int(rng.integers(1, 3)), supply=supply),
        Site(3, SiteKind.BACKFILL, int(rng.integers(1, 3)), demand=demand),
    )
    d = rng.integers(1500, 6500, size=(4, 4)).astype(float)
    d = np.triu(d, 1)
    d = d + d.T
    return Scenario(
        sites=sites,
        fleets=fleets,
        distances=tuple(tuple(float(v) for v in row) for row in d),
        speed=30 * KMH,
        interval=10.0,
        horizon=int(rng.integers(6, 9)),
        waste_types=("empty", "inert", "mixed") if typed else (),
        name=f"tiny-{seed}",
    )


def random_fees(scenario: Scenario, seed: int, n_types: int | None = None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    shape: tuple[int, ...] = (len(scenario.processing), len(scenario.fleets))
    if n_types:
        shape = shape + (n_types,)
    e = scenario.econ
    return np.trunc(rng.uniform(e.fee_lower, e.fee_upper, size=shape) * 1e5) / 1e5


def with_supplies(scenario: Scenario, supply: dict[int, float], demand: dict[int, float]) -> Scenario:
    sites = tuple(
        replace(s, supply=supply.get(k, s.supply), demand=demand.get(k, s.demand))
        for k, s in enumerate(scenario.sites)
    )
    return replace(scenario, sites=sites)


def rerouting_scenario() -> Scenario:
    """Electric trucks are dear enough that the carrier leaves the haul to diesel.

    The pollution-minimising schedule uses the electric truck instead, so
    HPR is strictly below the baseline.
    """
    fleets = (
        Fleet(0, FleetKind.ELECTRIC, 1, 15500.0, 15500.0, 5000.0, 9.5),
        Fleet(1, FleetKind.DIESEL, 1, 15500.0, 15500.0, 750.0, 19.5),
    )
    sites = (
        Site(0, SiteKind.DEPOT, 0),
        Site(1, SiteKind.PROCESSING, 2, pollution_factor=0.6),
        Site(2, SiteKind.PRODUCTION, 2, supply=15.5),
        Site(3, SiteKind.BACKFILL, 2, demand=15.5),
    )
    d = np.array([[0, 4000, 4000, 4000], [4000, 0, 4000, 4000], [4000, 4000, 0, 4000], [4000, 4000, 4000, 0]], float)
    return Scenario(
        sites=sites, fleets=fleets, distances=tuple(tuple(map(float, r)) for r in d),
        speed=30 * KMH, interval=10.0, horizon=8, name="rerouting",
    )


def twin_scenario() -> Scenario:
    """Two identical processing facilities equidistant from everything: symmetric optima."""
    fleets = (
        Fleet(0, FleetKind.ELECTRIC, 1, 15500.0, 15500.0, 550.0, 9.5),
        Fleet(1, FleetKind.DIESEL, 1, 15500.0, 15500.0, 750.0, 19.5),
    )
    sites = (
        Site(0, SiteKind.DEPOT, 0),
        Site(1, SiteKind.PROCESSING, 2, pollution_factor=0.4),
        Site(2, SiteKind.PROCESSING, 2, pollution_factor=0.4),
        Site(3, SiteKind.PRODUCTION, 2, supply=31.0),
        Site(4, SiteKind.BACKFILL, 2, demand=15.5),
    )
    n = len(sites)
    d = np.full((n, n), 4000.0)
    np.fill_diagonal(d, 0.0)
    return Scenario(
        sites=sites, fleets=fleets, distances=tuple(tuple(map(float, r)) for r in d),
        speed=30 * KMH, interval=10.0, horizon=8, econ=EconParams(fee_lower=-3.0, fee_upper=7.0),
        name="twin",
    )


def twin_subsidy_scenario() -> Scenario:
    """Twin facilities, no demand, electric trucks slightly dearer than diesel.

    At the market fee the carrier hauls with diesel; a modest electric
    subsidy tips both loads onto electric trucks.
    """
    fleets = (
        Fleet(0, FleetKind.ELECTRIC, 2, 15500.0, 15500.0, 800.0, 9.5),
        Fleet(1, FleetKind.DIESEL, 2, 15500.0, 15500.0, 750.0, 19.5),
    )
    return with_supplies(replace(twin_scenario(), fleets=fleets, name="twin-subsidy"), {3: 31.0}, {4: 0.0})


def medium_scenario(seed: int = 2) -> Scenario:
    """Ten sites (two facilities, six producers, one backfill), two fleets of ten trucks, T = 24.

    Supplies are five to eight whole truckloads per producer and the backfill
    takes a single load, so most waste must pass through a facility.
    """
    fleets = (
        Fleet(0, FleetKind.ELECTRIC, 10, 15500.0, 15500.0, 550.0, 9.5),
        Fleet(1, FleetKind.DIESEL, 10, 15500.0, 15500.0, 750.0, 19.5),
    )
    sc = generate_scenario(seed, {"P": 2, "S": 6, "D": 1}, fleets, (10.0, 10.0), horizon=24,
                           pollution_factors=(0.6, 0.2), capacities={"processing": 4}, name=f"medium-{seed}")
    rng = np.random.default_rng(seed + 1)
    supply = {k: 15.5 * int(rng.integers(5, 9)) for k in sc.production}
    return with_supplies(sc, supply, {k: 15.5 for k in sc.backfill})
