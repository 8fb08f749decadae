"""CMEM fuel-use model and the facility treatment pollution index."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import EmissionParams

__all__ = [
    "PollutionBreakdown",
    "engine_power",
    "fcr",
    "fc",
    "fc_terms",
    "htc",
    "term_vectors",
    "pollution_index",
]


@dataclass(frozen=True)
class PollutionBreakdown:
    engine_term: float
    unladen_term: float
    payload_term: float
    speed_term: float
    facility_term: float

    @property
    def transport(self) -> float:
        return math.fsum((self.engine_term, self.unladen_term, self.payload_term, self.speed_term))

    @property
    def total(self) -> float:
        return math.fsum(
            (self.engine_term, self.unladen_term, self.payload_term, self.speed_term, self.facility_term)
        )

    def as_dict(self) -> dict[str, float]:
        return {
            "engine_term": self.engine_term,
            "unladen_term": self.unladen_term,
            "payload_term": self.payload_term,
            "speed_term": self.speed_term,
            "facility_term": self.facility_term,
            "total": self.total,
        }


def engine_power(u: float, M: float, params: EmissionParams) -> float:
    """Engine power output P0 in kW; accessory load is taken as zero."""
    p = params
    rad = math.radians(p.road_angle)
    traction = (
        M * p.accel
        + M * p.gravity * math.sin(rad)
        + 0.5 * p.drag * p.air_density * p.frontal_area * u * u
        + M * p.gravity * p.rolling * math.cos(rad)
    ) * u / 1000.0
    return traction / p.drivetrain_eff


def fcr(u: float, M: float, params: EmissionParams) -> float:
    """Fuel consumption rate in litres per second."""
    p = params
    grams_per_s = p.xi * (p.kNV + engine_power(u, M, p) / p.eta) / p.heating_value
    return grams_per_s / p.fuel_conv


def fc_terms(u: float, unladen: float, payload: float, d: float, params: EmissionParams) -> tuple[float, float, float, float]:
    """Split of fc() into engine, unladen-mass, payload-mass and speed parts."""
    p = params
    lam, gam, alp = p.lam, p.gamma, p.alpha
    return (
        p.kNV * lam * d / u,
        unladen * gam * lam * alp * d,
        payload * gam * lam * alp * d,
        p.beta * gam * lam * d * u * u,
    )


def fc(u: float, M: float, d: float, params: EmissionParams) -> float:
    """Fuel used (litres, the transport pollution index) over ``d`` metres at mass ``M`` kg."""
    if u <= 0:
        raise ValueError("speed must be positive")
    p = params
    return p.lam * (p.kNV + M * p.gamma * p.alpha * u + p.beta * p.gamma * u**3) * d / u


def htc(h: float, load_kg: float) -> float:
    """Treatment pollution of one truckload; loads convert to tonnes here and only here."""
    return h * load_kg / 1000.0


def term_vectors(scenario, origin: np.ndarray, dest: np.ndarray, fleet: np.ndarray, loaded: np.ndarray) -> np.ndarray:
    """Per-arc pollution coefficients, shape (5, n).

    Rows are engine, unladen, payload, speed and facility terms for one unit
    of flow. Depot legs and electric trucks carry no transport terms.
    """
    from .scenario import SiteKind

    p = scenario.emissions
    u = scenario.speed
    n = len(origin)
    out = np.zeros((5, n))
    dist = scenario.distance_matrix[origin, dest]
    kinds = np.array([s.kind is SiteKind.DEPOT for s in scenario.sites])
    non_depot = ~kinds[origin] & ~kinds[dest]
    diesel = np.array([f.is_diesel for f in scenario.fleets])[fleet]
    unladen = np.array([f.unladen_weight for f in scenario.fleets])[fleet]
    payload = np.array([f.rated_load for f in scenario.fleets])[fleet]
    moving = diesel & non_depot & (origin != dest)
    lam, gam, alp = p.lam, p.gamma, p.alpha
    out[0] = np.where(moving, p.kNV * lam * dist / u, 0.0)
    out[1] = np.where(moving, unladen * gam * lam * alp * dist, 0.0)
    out[2] = np.where(moving & loaded, payload * gam * lam * alp * dist, 0.0)
    out[3] = np.where(moving, p.beta * gam * lam * dist * u * u, 0.0)
    is_proc = np.array([s.kind is SiteKind.PROCESSING for s in scenario.sites])
    is_prod = np.array([s.kind is SiteKind.PRODUCTION for s in scenario.sites])
    h = np.array([s.pollution_factor for s in scenario.sites])
    treat = is_prod[origin] & is_proc[dest]
    out[4] = np.where(treat, h[dest] * payload / 1000.0, 0.0)
    return out


def pollution_index(solution, scenario=None) -> PollutionBreakdown:
    """Evaluate the five pollution summands on a solved flow."""
    inst = solution.instance
    if scenario is not None and scenario.content_hash != inst.scenario_hash:
        raise ValueError("solution was assembled for a different scenario")
    x = np.asarray(solution.x)
    if x.shape != (inst.n_vars,):
        raise ValueError(f"flow vector has shape {x.shape}, instance has {inst.n_vars} variables")
    terms = inst.pollution_terms
    parts = [math.fsum((terms[k] * x).tolist()) for k in range(5)]
    return PollutionBreakdown(*parts)
