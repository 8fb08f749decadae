"""Evaluation metrics over a baseline / high-point / subsidised run set."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

__all__ = [
    "MetricsError",
    "BaselineRun",
    "HprRun",
    "SubsidyRun",
    "RunTriple",
    "ropr",
    "gap_f1",
    "esr",
    "decompose",
    "subsidy_decomposition",
    "metrics_document",
]


class MetricsError(ValueError):
    pass


def ropr(f1_m1: float, f1_m3: float) -> float:
    """Rate of pollution reduction against the baseline, in percent."""
    if f1_m1 == 0:
        raise MetricsError("ropr undefined: baseline pollution is zero")
    return (f1_m1 - f1_m3) / f1_m1 * 100.0


def gap_f1(f1_m3: float, f1_hpr: float) -> float:
    """Relative excess of the subsidised pollution over the high-point bound, in percent."""
    if f1_hpr == 0:
        raise MetricsError("gap_f1 undefined: high-point pollution is zero")
    return (f1_m3 - f1_hpr) / f1_hpr * 100.0


def esr(f2_m3: float, f2_m1: float, profit_m3: float, profit_m1: float) -> float | None:
    """Share of the subsidy that did not end up as extra carrier profit, in percent.

    Returns None when no subsidy changed hands.
    """
    total = abs(f2_m3 - f2_m1)
    if total == 0:
        return None
    return (total - abs(profit_m3 - profit_m1)) / total * 100.0


def decompose(f2_m3: float, f2_m1: float, profit_m3: float, profit_m1: float) -> dict[str, Any]:
    total = abs(f2_m3 - f2_m1)
    ineffective = abs(profit_m3 - profit_m1)
    effective = total - ineffective
    return {
        "total_subsidy": total,
        "effective": effective,
        "ineffective": ineffective,
        "anomaly": effective < 0,
    }


@dataclass(frozen=True)
class BaselineRun:
    objective: float  # carrier cost, i.e. minus profit
    f1: float
    f2: float
    scenario_hash: str

    @property
    def profit(self) -> float:
        return -self.objective


@dataclass(frozen=True)
class HprRun:
    f1: float
    scenario_hash: str


@dataclass(frozen=True)
class SubsidyRun:
    objective: float
    f1: float
    f2: float
    scenario_hash: str
    fees: tuple = ()

    @property
    def profit(self) -> float:
        return -self.objective


@dataclass(frozen=True)
class RunTriple:
    m1: BaselineRun
    hpr: HprRun
    m3: SubsidyRun

    def __post_init__(self) -> None:
        hashes = {self.m1.scenario_hash, self.hpr.scenario_hash, self.m3.scenario_hash}
        if len(hashes) != 1:
            raise MetricsError(f"runs come from different scenarios: {sorted(hashes)}")


def subsidy_decomposition(triple: RunTriple) -> dict[str, Any]:
    return decompose(triple.m3.f2, triple.m1.f2, triple.m3.profit, triple.m1.profit)


def _safe(fn, *args):
    try:
        return fn(*args)
    except MetricsError:
        return None


def metrics_document(triple: RunTriple) -> dict[str, Any]:
    """Everything metrics.json carries, at full precision."""
    m1, hpr, m3 = triple.m1, triple.hpr, triple.m3
    out = {
        "ropr": _safe(ropr, m1.f1, m3.f1),
        "gap_f1": _safe(gap_f1, m3.f1, hpr.f1),
        "esr": esr(m3.f2, m1.f2, m3.profit, m1.profit),
        "decomposition": subsidy_decomposition(triple),
        "inputs": {
            "scenario_hash": m1.scenario_hash,
            "m1": {"objective": m1.objective, "F1": m1.f1, "F2": m1.f2, "profit": m1.profit},
            "hpr": {"F1": hpr.f1},
            "m3": {"objective": m3.objective, "F1": m3.f1, "F2": m3.f2, "profit": m3.profit,
                   "fees": list(m3.fees)},
        },
        "sandwich": bool(hpr.f1 <= m3.f1 <= m1.f1),
    }
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in out.items()}
