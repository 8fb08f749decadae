"""Fee design by multi-objective PSO with the exact solver as the follower.

The leader (government) picks treatment fees per processing facility and
fleet; the follower (carrier) answers with a profit-maximising schedule.
The swarm searches fee space for schedules that pollute little (F1) and
cost the government little (F2), keeping non-dominated fee vectors in an
external archive with a hypercube grid for leader selection.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_CEILING, ROUND_DOWN, ROUND_FLOOR, Decimal
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .emissions import pollution_index
from .model import (
    FeeSchedule,
    FlowSolution,
    assemble_lower,
    assemble_m4_lower,
    carrier_profit,
    government_cost,
)
from .scenario import Scenario
from .solver import SolveConfig, solve

__all__ = [
    "BilevelError",
    "MopsoConfig",
    "Particle",
    "ParetoArchive",
    "Evaluation",
    "BestSolution",
    "repair",
    "truncate5",
    "update_velocity",
    "update_position",
    "perturb",
    "terminated",
    "dominates",
    "evaluate",
    "optimize",
    "write_pareto",
    "write_history",
    "write_best",
]

DECIMALS = 5
WARM_POOL = 32  # earlier follower schedules kept as starting incumbents


class BilevelError(RuntimeError):
    """The follower has no schedule for some fee vector."""

    def __init__(self, message: str, fees: np.ndarray | None = None):
        super().__init__(message)
        self.fees = None if fees is None else np.asarray(fees).tolist()


@dataclass(frozen=True)
class MopsoConfig:
    particles: int = 40  # K
    iterations: int = 20  # G
    w_inertia: float = 0.8
    w_personal: float = 0.1
    w_global: float = 0.1
    archive_size: int = 200  # M
    grid: int = 10  # m, cells per objective axis
    p_mutate: float = 0.2
    stagnation: int = 3  # G'
    sigma: float = 0.2
    eps: float = 1e-3
    seed: int = 0
    typed: bool = False  # fee per waste type as well
    jobs: int = 1
    seed_market: bool = True  # start one particle at the market fee

    def __post_init__(self) -> None:
        bad = [
            name for name in ("particles", "iterations", "archive_size", "grid", "stagnation", "jobs")
            if getattr(self, name) < 1
        ]
        bad += [name for name in ("w_inertia", "w_personal", "w_global", "eps") if not getattr(self, name) > 0]
        if self.sigma < 0:
            bad.append("sigma")
        if bad:
            raise ValueError(f"MopsoConfig: invalid {', '.join(bad)}")
        if not 0.0 <= self.p_mutate <= 1.0:
            raise ValueError("MopsoConfig: p_mutate must lie in [0, 1]")


# -- elementary moves ----------------------------------------------------------

def _quantize(v: float, rounding: str) -> float:
    return float(Decimal(repr(float(v))).quantize(Decimal(1).scaleb(-DECIMALS), rounding=rounding))


def truncate5(values: np.ndarray) -> np.ndarray:
    """Drop digits past the fifth decimal (toward zero), exactly in decimal."""
    return np.array([_quantize(v, ROUND_DOWN) for v in np.ravel(values)]).reshape(np.shape(values))


def repair(y: np.ndarray, mu: np.ndarray, lower: float, upper: float) -> tuple[np.ndarray, np.ndarray]:
    """Project onto [lower, upper], reverse the offending velocity, truncate to 5 decimals."""
    y = np.asarray(y, dtype=float).copy()
    mu = np.asarray(mu, dtype=float).copy()
    low, high = y < lower, y > upper
    y[low] = lower
    y[high] = upper
    mu[low | high] *= -1.0
    y = truncate5(y)
    # truncation toward zero can step outside a bound that has more than 5 decimals
    y[y < lower] = _quantize(lower, ROUND_CEILING)
    y[y > upper] = _quantize(upper, ROUND_FLOOR)
    return y, mu


def update_velocity(
    y: np.ndarray, mu: np.ndarray, pbest: np.ndarray, gbest: np.ndarray, config: MopsoConfig, r1, r2
) -> np.ndarray:
    return (
        config.w_inertia * np.asarray(mu)
        + config.w_personal * np.asarray(r1) * (np.asarray(pbest) - y)
        + config.w_global * np.asarray(r2) * (np.asarray(gbest) - y)
    )


def update_position(
    y: np.ndarray, mu: np.ndarray, lower: float, upper: float, shift: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Move by the velocity, apply any perturbation, then repair."""
    moved = np.asarray(y, dtype=float) + mu
    if shift is not None:
        moved = moved + shift
    return repair(moved, mu, lower, upper)


def perturb(
    ys: Sequence[np.ndarray], rng: np.random.Generator, config: MopsoConfig, lower: float, upper: float
) -> list[np.ndarray]:
    """Per particle, with probability p_mutate, a uniform shift in +-sigma*(upper-lower)."""
    width = config.sigma * (upper - lower)
    out = []
    for y in ys:
        if width > 0 and rng.random() < config.p_mutate:
            out.append(rng.uniform(-width, width, size=np.shape(y)))
        else:
            out.append(np.zeros(np.shape(y)))
    return out


def _rel_change(cur: float, prev: float) -> float:
    return abs(cur - prev) / max(abs(cur), 1.0)


def terminated(history: Sequence[tuple[float, float]], eps: float) -> bool:
    """Both the best F1 and its F2 moved by less than eps (relative) in the last iteration."""
    if len(history) < 2:
        return False
    (f1, f2), (g1, g2) = history[-1], history[-2]
    return _rel_change(f1, g1) < eps and _rel_change(f2, g2) < eps


def dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


# -- archive ---------------------------------------------------------------------

@dataclass
class _Member:
    y: np.ndarray
    f1: float
    f2: float


class ParetoArchive:
    """Bounded non-dominated set with an m x m hypercube grid over (F1, F2)."""

    def __init__(self, capacity: int = 200, divisions: int = 10):
        self.capacity = capacity
        self.divisions = divisions
        self.members: list[_Member] = []

    def __len__(self) -> int:
        return len(self.members)

    @property
    def EAY(self) -> np.ndarray:
        return np.array([m.y for m in self.members])

    @property
    def EAF1(self) -> np.ndarray:
        return np.array([m.f1 for m in self.members])

    @property
    def EAF2(self) -> np.ndarray:
        return np.array([m.f2 for m in self.members])

    def points(self) -> list[tuple[float, float]]:
        return [(m.f1, m.f2) for m in self.members]

    def best_index(self) -> int:
        """Member with minimal F1, then minimal F2."""
        return min(range(len(self.members)), key=lambda i: (self.members[i].f1, self.members[i].f2))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.array(self.points(), dtype=float)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = 0.05 * (hi - lo)
        pad = np.where(pad > 0, pad, 0.05 * np.maximum(np.abs(lo), 1.0))
        return lo - pad, hi + pad

    def cells(self) -> list[tuple[int, int]]:
        if not self.members:
            return []
        lo, hi = self.bounds()
        pts = np.array(self.points(), dtype=float)
        idx = np.floor((pts - lo) / (hi - lo) * self.divisions).astype(int)
        idx = np.clip(idx, 0, self.divisions - 1)
        return [tuple(int(v) for v in row) for row in idx]

    def occupancy(self) -> dict[tuple[int, int], int]:
        occ: dict[tuple[int, int], int] = {}
        for c in self.cells():
            occ[c] = occ.get(c, 0) + 1
        return occ

    def insert(self, y: np.ndarray, f1: float, f2: float, rng: np.random.Generator | None = None) -> bool:
        """Add a candidate if nothing archived dominates or equals it."""
        cand = (float(f1), float(f2))
        for m in self.members:
            p = (m.f1, m.f2)
            if dominates(p, cand) or p == cand:
                return False
        self.members = [m for m in self.members if not dominates(cand, (m.f1, m.f2))]
        self.members.append(_Member(np.asarray(y, dtype=float).copy(), cand[0], cand[1]))
        while len(self.members) > self.capacity:
            self._evict(rng)
        return True

    def _evict(self, rng: np.random.Generator | None) -> None:
        cells = self.cells()
        occ = self.occupancy()
        keep = self.best_index()
        densest = max(occ.values())
        crowded = [i for i, c in enumerate(cells) if occ[c] == densest and i != keep]
        if not crowded:
            crowded = [i for i in range(len(cells)) if i != keep]
        pick = crowded[int(rng.integers(len(crowded)))] if rng is not None else crowded[-1]
        del self.members[pick]

    def select(self, rng: np.random.Generator) -> int:
        """Roulette over occupied cells with weight 1/occupancy, then a uniform member."""
        if not self.members:
            raise ValueError("archive is empty")
        cells = self.cells()
        occ = self.occupancy()
        keys = sorted(occ)
        w = np.array([1.0 / occ[k] for k in keys])
        cell = keys[int(rng.choice(len(keys), p=w / w.sum()))]
        inside = [i for i, c in enumerate(cells) if c == cell]
        return inside[int(rng.integers(len(inside)))]

    def select_gbest(self, rng: np.random.Generator) -> np.ndarray:
        return self.members[self.select(rng)].y

    def is_pareto(self) -> bool:
        pts = self.points()
        return all(
            not dominates(pts[i], pts[j]) and (i == j or pts[i] != pts[j])
            for i in range(len(pts)) for j in range(len(pts))
        )


# -- particles and evaluation ------------------------------------------------------

@dataclass
class Particle:
    y: np.ndarray
    mu: np.ndarray
    pbest_y: np.ndarray | None = None
    pbest_f: tuple[float, float] | None = None
    f1: float = math.nan
    f2: float = math.nan


@dataclass
class Evaluation:
    fees: np.ndarray
    f1: float
    f2: float
    profit: float
    solution: FlowSolution = field(repr=False)


def fee_shape(scenario: Scenario, typed: bool) -> tuple[int, ...]:
    shape: tuple[int, ...] = (len(scenario.processing), len(scenario.fleets))
    if typed:
        shape = shape + (len(scenario.waste_types) - 1,)
    return shape


def _eval_seed(seed: int, y: np.ndarray) -> int:
    """Solver seed tied to the fee vector, so results ignore evaluation order."""
    h = hashlib.sha256(np.asarray(y, dtype=float).tobytes() + str(seed).encode()).digest()
    return int.from_bytes(h[:4], "little")


def evaluate(
    y: np.ndarray, scenario: Scenario, solve_cfg: SolveConfig, typed: bool = False, seed: int = 0,
    warm: Sequence[np.ndarray] = (),
) -> Evaluation:
    """Follower's response to fee vector y, with its pollution (F1) and the leader's cost (F2).

    Fees only move the objective, so any earlier schedule in ``warm`` is a
    feasible start; the cheapest one under the new fees seeds the search.
    """
    fees = FeeSchedule.from_vector(scenario, y, typed=typed)
    inst = assemble_m4_lower(scenario, fees) if typed else assemble_lower(scenario, fees)
    start = min((x for x in warm if x.shape == (inst.n_vars,)), key=lambda x: (float(inst.c @ x), x.tobytes()), default=None)
    cfg = SolveConfig(
        gap_target=solve_cfg.gap_target,
        time_limit=solve_cfg.time_limit,
        seed=_eval_seed(seed, y),
        node_limit=solve_cfg.node_limit,
        engine=solve_cfg.engine,
        tie_samples=solve_cfg.tie_samples,
    )
    sol, _ = solve(inst, cfg, warm_start=start)
    if not sol.feasible:
        raise BilevelError(f"follower problem {sol.status} at fees {np.asarray(y).tolist()}", y)
    return Evaluation(
        fees=np.asarray(y, dtype=float),
        f1=pollution_index(sol).total,
        f2=government_cost(sol, scenario, fees),
        profit=carrier_profit(sol, scenario, fees),
        solution=sol,
    )


def _evaluate_job(args) -> Evaluation:
    return evaluate(*args)


@dataclass
class BestSolution:
    fees: np.ndarray
    f1: float
    f2: float
    profit: float
    solution: FlowSolution = field(repr=False)


@dataclass
class RunLog:
    history: list[dict] = field(default_factory=list)  # per-iteration summary
    snapshots: list[list[tuple]] = field(default_factory=list)  # archive per iteration
    evaluations: int = 0


def optimize(
    scenario: Scenario,
    config: MopsoConfig | None = None,
    solve_cfg: SolveConfig | None = None,
    progress: Callable[[dict], None] | None = None,
    warm: Sequence[np.ndarray] = (),
) -> tuple[ParetoArchive, BestSolution, RunLog]:
    """Search fee space; return the archive, its least-polluting member and a run log.

    ``warm`` holds follower schedules known up front (the baseline, say);
    each iteration also reuses the schedules found by earlier ones.
    """
    cfg = config or MopsoConfig()
    scfg = solve_cfg or SolveConfig()
    lo, hi = scenario.econ.fee_lower, scenario.econ.fee_upper
    shape = fee_shape(scenario, cfg.typed)
    dim = int(np.prod(shape))
    streams = np.random.SeedSequence(cfg.seed).spawn(5)
    rng_init, rng_move, rng_sel, rng_pert, rng_arch = (np.random.default_rng(s) for s in streams)

    swarm: list[Particle] = []
    for k in range(cfg.particles):
        y = rng_init.uniform(lo, hi, size=dim)
        mu = rng_init.uniform(-0.1 * (hi - lo), 0.1 * (hi - lo), size=dim)
        if k == 0 and cfg.seed_market and lo <= scenario.econ.market_fee <= hi:
            y = np.full(dim, scenario.econ.market_fee)
        y, mu = repair(y, mu, lo, hi)
        swarm.append(Particle(y, mu))

    archive = ParetoArchive(cfg.archive_size, cfg.grid)
    log = RunLog()
    cache: dict[bytes, tuple[float, float]] = {}  # every fee vector seen
    kept: dict[bytes, Evaluation] = {}  # full evaluations of archive members only
    starts: dict[bytes, np.ndarray] = {np.asarray(x).tobytes(): np.asarray(x) for x in warm}
    best_hist: list[tuple[float, float]] = []
    true_streak = 0
    stale = 0
    perturbing = False
    pool = ProcessPoolExecutor(max_workers=cfg.jobs) if cfg.jobs > 1 else None
    try:
        for q in range(1, cfg.iterations + 1):
            todo = []
            for p in swarm:
                key = p.y.tobytes()
                if key not in cache and key not in (t.tobytes() for t in todo):
                    todo.append(p.y)
            # frozen per iteration, so the outcome does not depend on the worker count
            frozen = tuple(starts.values())
            jobs = [(y, scenario, scfg, cfg.typed, cfg.seed, frozen) for y in todo]
            results = list(pool.map(_evaluate_job, jobs)) if pool else [_evaluate_job(j) for j in jobs]
            fresh = {}
            for y, ev in zip(todo, results):
                cache[y.tobytes()] = (ev.f1, ev.f2)
                fresh[y.tobytes()] = ev
                starts.setdefault(ev.solution.x.tobytes(), ev.solution.x)
            while len(starts) > WARM_POOL:
                starts.pop(next(iter(starts)))
            log.evaluations += len(todo)

            for p in swarm:
                f = cache[p.y.tobytes()]
                p.f1, p.f2 = f
                if p.pbest_f is None or dominates(f, p.pbest_f):
                    p.pbest_y, p.pbest_f = p.y.copy(), f
                elif not dominates(p.pbest_f, f) and f != p.pbest_f and rng_move.random() < 0.5:
                    p.pbest_y, p.pbest_f = p.y.copy(), f
                archive.insert(p.y, f[0], f[1], rng_arch)
            live = {m.y.tobytes() for m in archive.members}
            kept = {k: v for k, v in {**kept, **fresh}.items() if k in live}

            b = archive.members[archive.best_index()]
            if best_hist and round(b.f1, DECIMALS) == round(best_hist[-1][0], DECIMALS) and round(
                b.f2, DECIMALS
            ) == round(best_hist[-1][1], DECIMALS):
                stale += 1
            else:
                stale = 0
            best_hist.append((b.f1, b.f2))
            done = terminated(best_hist, cfg.eps)
            true_streak = true_streak + 1 if done else 0
            row = {
                "iteration": q,
                "best_f1": b.f1,
                "best_f2": b.f2,
                "archive_size": len(archive),
                "evaluations": log.evaluations,
                "perturbing": int(perturbing),
                "terminated": int(done),
            }
            log.history.append(row)
            log.snapshots.append([(q, m.y.tolist(), m.f1, m.f2) for m in archive.members])
            if progress:
                progress(row)
            # stop once perturbation has had its chance to move a stalled swarm
            if true_streak > cfg.stagnation or q == cfg.iterations:
                break
            perturbing = stale >= cfg.stagnation

            shifts = perturb([p.y for p in swarm], rng_pert, cfg, lo, hi) if perturbing else [None] * len(swarm)
            for p, shift in zip(swarm, shifts):
                gbest = archive.select_gbest(rng_sel)
                r1 = rng_move.random(dim)
                r2 = rng_move.random(dim)
                p.mu = update_velocity(p.y, p.mu, p.pbest_y, gbest, cfg, r1, r2)
                p.y, p.mu = update_position(p.y, p.mu, lo, hi, shift)
    finally:
        if pool:
            pool.shutdown()

    b = archive.members[archive.best_index()]
    ev = kept[b.y.tobytes()]
    best = BestSolution(ev.fees.reshape(shape), ev.f1, ev.f2, ev.profit, ev.solution)
    return archive, best, log


# -- artifacts -------------------------------------------------------------------

def _fee_labels(scenario: Scenario, typed: bool) -> list[str]:
    labels = []
    for p in scenario.processing:
        for f in scenario.fleets:
            if typed:
                for c in scenario.waste_types[1:]:
                    labels.append(f"y_{scenario.sites[p].id}_{f.id}_{c}")
            else:
                labels.append(f"y_{scenario.sites[p].id}_{f.id}")
    return labels


def write_pareto(archive: ParetoArchive, scenario: Scenario, path: str | Path, typed: bool = False) -> None:
    order = sorted(range(len(archive)), key=lambda i: (archive.members[i].f1, archive.members[i].f2))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_fee_labels(scenario, typed) + ["F1", "F2"])
        for i in order:
            m = archive.members[i]
            w.writerow([repr(float(v)) for v in m.y] + [repr(m.f1), repr(m.f2)])


def write_history(log: RunLog, path: str | Path) -> None:
    cols = ["iteration", "best_f1", "best_f2", "archive_size", "evaluations", "perturbing", "terminated"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in log.history:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])


def write_archive_log(log: RunLog, scenario: Scenario, path: str | Path, typed: bool = False) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration"] + _fee_labels(scenario, typed) + ["F1", "F2"])
        for snap in log.snapshots:
            for q, y, f1, f2 in sorted(snap, key=lambda s: (s[2], s[3])):
                w.writerow([q] + [repr(float(v)) for v in y] + [repr(f1), repr(f2)])


def best_document(best: BestSolution, scenario: Scenario, typed: bool = False) -> dict:
    sol = best.solution
    fees = {}
    for a, p in enumerate(scenario.processing):
        row = {}
        for v, f in enumerate(scenario.fleets):
            if typed:
                row[str(f.id)] = {c: float(best.fees[a, v, t]) for t, c in enumerate(scenario.waste_types[1:])}
            else:
                row[str(f.id)] = float(best.fees[a, v])
        fees[str(scenario.sites[p].id)] = row
    return {
        "scenario_hash": scenario.content_hash,
        "fees": fees,
        "F1": best.f1,
        "F2": best.f2,
        "government_revenue": -best.f2,
        "carrier_profit": best.profit,
        "dispatch_by_fleet": {str(k): v for k, v in sol.dispatch_by_fleet().items()},
        "tonnage_by_leg": sol.tonnage_by_leg(),
        "tonnage_by_fleet": {str(k): v for k, v in sol.tonnage_by_fleet().items()},
        "solver_status": sol.status,
    }


def write_best(best: BestSolution, scenario: Scenario, path: str | Path, typed: bool = False) -> None:
    doc = best_document(best, scenario, typed)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
