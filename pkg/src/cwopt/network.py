"""Time-space network of truck movements, restricted to its support graph.

Arcs are stored by family: one record per (origin, destination, class) with
the contiguous range of admissible departure periods. Individual arcs are
generated on demand.
"""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator

from .scenario import Scenario, SiteKind

__all__ = ["ArcClass", "TsNode", "TsArc", "ArcFamily", "TimeSpaceNetwork", "build_network", "arc_census"]


class ArcClass(str, Enum):
    FULLY_LOADED = "fully_loaded"
    DEADHEADING = "deadheading"
    SERVICE = "service"


_D, _P, _S, _B = SiteKind.DEPOT, SiteKind.PROCESSING, SiteKind.PRODUCTION, SiteKind.BACKFILL

LOADED_PAIRS = frozenset({(_S, _B), (_S, _P), (_P, _B)})
EMPTY_PAIRS = frozenset({(_D, _P), (_D, _S), (_P, _D), (_B, _D), (_B, _P), (_B, _S), (_P, _S)})


def classify(origin: SiteKind, dest: SiteKind) -> ArcClass | None:
    """Class of a movement between two distinct sites, or None if it is structurally zero."""
    if (origin, dest) in LOADED_PAIRS:
        return ArcClass.FULLY_LOADED
    if (origin, dest) in EMPTY_PAIRS:
        return ArcClass.DEADHEADING
    return None


@dataclass(frozen=True)
class TsNode:
    site: int  # position in scenario.sites
    period: int


@dataclass(frozen=True)
class TsArc:
    tail: TsNode
    head: TsNode
    arc_class: ArcClass
    duration: int


@dataclass(frozen=True)
class ArcFamily:
    origin: int
    dest: int
    arc_class: ArcClass
    duration: int
    first: int  # earliest departure period
    last: int  # latest departure period (inclusive)

    def __len__(self) -> int:
        return max(0, self.last - self.first + 1)

    def arcs(self) -> Iterator[TsArc]:
        for t in range(self.first, self.last + 1):
            yield TsArc(TsNode(self.origin, t), TsNode(self.dest, t + self.duration), self.arc_class, self.duration)


@dataclass(frozen=True, eq=False)
class TimeSpaceNetwork:
    n_sites: int
    horizon: int
    virtual_horizon: int
    families: tuple[ArcFamily, ...]

    @property
    def node_count(self) -> int:
        # periods -T̄..-1 are virtual; they carry nodes but no admissible arcs
        return self.n_sites * (self.horizon + self.virtual_horizon + 1)

    @property
    def arc_count(self) -> int:
        return sum(len(f) for f in self.families)

    @property
    def complete_arc_count(self) -> int:
        return self.node_count**2

    def out_families(self, site: int) -> list[ArcFamily]:
        return self._out[site]

    def in_families(self, site: int) -> list[ArcFamily]:
        return self._in[site]

    def __post_init__(self) -> None:
        out: dict[int, list[ArcFamily]] = defaultdict(list)
        inn: dict[int, list[ArcFamily]] = defaultdict(list)
        for fam in self.families:
            out[fam.origin].append(fam)
            inn[fam.dest].append(fam)
        object.__setattr__(self, "_out", out)
        object.__setattr__(self, "_in", inn)

    def arcs(self) -> Iterator[TsArc]:
        for fam in self.families:
            yield from fam.arcs()

    def write_csv(self, path: str | Path, site_ids: list[int] | None = None) -> None:
        """Edge-list dump: from_site,from_t,to_site,to_t,class."""
        ids = site_ids or list(range(self.n_sites))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["from_site", "from_t", "to_site", "to_t", "class"])
            for arc in self.arcs():
                w.writerow([ids[arc.tail.site], arc.tail.period, ids[arc.head.site], arc.head.period, arc.arc_class.value])


def build_network(scenario: Scenario) -> TimeSpaceNetwork:
    """Materialize every arc that can carry flow; everything else is never built."""
    T = scenario.horizon
    r = scenario.intervals
    kinds = [s.kind for s in scenario.sites]
    families: list[ArcFamily] = []
    for i, ki in enumerate(kinds):
        for j, kj in enumerate(kinds):
            if i == j:
                if ki is not SiteKind.DEPOT and T >= 1:
                    families.append(ArcFamily(i, i, ArcClass.SERVICE, 1, 0, T - 1))
                continue
            cls = classify(ki, kj)
            if cls is None:
                continue
            dur = int(r[i, j])
            if dur > T:
                continue
            families.append(ArcFamily(i, j, cls, dur, 0, T - dur))
    return TimeSpaceNetwork(len(kinds), T, scenario.virtual_horizon, tuple(families))


def arc_census(network: TimeSpaceNetwork) -> dict[str, int]:
    counts: Counter[str] = Counter({c.value: 0 for c in ArcClass})
    for fam in network.families:
        counts[fam.arc_class.value] += len(fam)
    return dict(counts)
