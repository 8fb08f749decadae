"""Branch-and-bound over the LP relaxation, with gap tracking and tie sampling."""

from __future__ import annotations

import heapq
import math
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from ..model import FlowSolution, MilpInstance
from .cuts import gmi_cuts
from .lp import LpProblem, UnboundedError, elastic_certificate

__all__ = ["SolveConfig", "SolveStats", "solve", "tie_break", "UnboundedError", "INT_TOL"]

INT_TOL = 1e-6
TIE_RTOL = 1e-9
RELIABLE = 2  # child LPs per side before a pseudocost is trusted
PROBES = 8  # unreliable candidates probed per node
LOOKAHEAD = 4  # probes without improvement before giving up
PLUNGE = 0.5  # dive while a child sits in this share of the open gap
CUT_GAIN = 1e-4  # stop cutting once a round lifts the root bound by less than this share
CUT_SAFETY = 1e-7  # relative slack given to every cut's right-hand side


@dataclass(frozen=True)
class SolveConfig:
    gap_target: float = 0.005
    time_limit: float = 600.0
    seed: int = 0
    node_limit: int | None = None
    engine: str = "auto"  # simplex | highs | auto
    tie_samples: int = 0  # extra probes for alternative optima
    cut_rounds: int = 8  # Gomory rounds at the root (HiGHS engine only)
    log_every: float | None = None  # seconds between progress lines
    log: Callable[[str], None] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.gap_target < 0:
            raise ValueError("gap_target must be >= 0")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be > 0")
        if self.node_limit is not None and self.node_limit < 1:
            raise ValueError("node_limit must be >= 1")
        if self.cut_rounds < 0:
            raise ValueError("cut_rounds must be >= 0")


@dataclass
class SolveStats:
    best_bound: float
    incumbent: float
    gap: float
    nodes_explored: int
    wall_time: float
    status: str = ""
    history: list[tuple[float, float, float, float, int]] = field(default_factory=list)
    n_optima: int = 0


def rel_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(0.0, (incumbent - bound) / max(abs(incumbent), 1.0))


def _same(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_RTOL * max(abs(a), abs(b), 1.0)


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    depth: int = field(compare=False)
    lb: np.ndarray = field(compare=False, repr=False)
    ub: np.ndarray = field(compare=False, repr=False)
    x: np.ndarray = field(compare=False, repr=False)
    z: float = field(default=math.nan, compare=False)  # the node's own LP value
    rc: np.ndarray | None = field(default=None, compare=False, repr=False)
    rows: tuple[np.ndarray, np.ndarray] | None = field(default=None, compare=False, repr=False)


def tighten_rows(A: sp.spmatrix, senses: np.ndarray, rhs: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Divide integer rows by their coefficient gcd and round the right-hand side inward.

    Every variable is integer, so this keeps the integer points and cuts
    fractional ones (a window of 1.05 truckloads becomes exactly one).
    """
    A = sp.csr_matrix(A, dtype=float, copy=True)
    rhs = np.asarray(rhs, dtype=float).copy()
    for i in range(A.shape[0]):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        vals = A.data[lo:hi]
        if hi == lo or not np.all(vals == np.round(vals)):
            continue
        g = int(np.gcd.reduce(np.abs(vals).astype(np.int64)))
        if g == 0:
            continue
        b = rhs[i] / g
        if senses[i] == "<":
            b = math.floor(b + 1e-9)
        elif senses[i] == ">":
            b = math.ceil(b - 1e-9)
        elif abs(b - round(b)) > 1e-9:
            continue  # an unreachable equality; leave it for the LP to reject
        A.data[lo:hi] = vals / g
        rhs[i] = b
    return A, rhs


def _quantum(c: np.ndarray) -> float:
    """Largest step every objective value is a multiple of, or 0 when there is none worth using."""
    nz = np.abs(c[c != 0])
    if nz.size == 0:
        return 0.0
    for g in (1.0, 0.5, 0.25, 0.1, 0.05, 0.01, 0.005, 0.001):
        k = nz / g
        if np.all(np.abs(k - np.round(k)) <= 1e-9 * np.maximum(k, 1.0)):
            return g
    return 0.0


def _fix_by_reduced_cost(node: _Node, level: float) -> None:
    """Tighten a node's box using its LP duals: no better point lies outside it."""
    if node.rc is None or not math.isfinite(level):
        return
    room = level - node.z
    if room < 0:
        return
    rc = node.rc
    up = rc > 1e-9
    if up.any():
        cap = node.lb[up] + np.floor(room / rc[up] + 1e-9)
        node.ub[up] = np.minimum(node.ub[up], cap)
    down = rc < -1e-9
    if down.any():
        cap = node.ub[down] - np.floor(room / -rc[down] + 1e-9)
        node.lb[down] = np.maximum(node.lb[down], cap)


def _branch_var(x: np.ndarray, c: np.ndarray) -> int:
    frac = x - np.floor(x)
    score = np.minimum(frac, 1.0 - frac)
    score[score <= INT_TOL] = -1.0
    best = score.max()
    if best < 0:
        return -1
    tied = np.flatnonzero(score >= best - 1e-12)
    return int(tied[np.argmax(np.abs(c[tied]))])


def _window_certificate(instance: MilpInstance) -> list[tuple[str, float]]:
    """Supply/demand windows that no multiset of truckloads can hit."""
    loads = sorted({int(round(f.rated_load)) for f in instance.layout.scenario.fleets if f.rated_load > 0})
    names = instance.row_names
    out = []
    for i, name in enumerate(names):
        m = re.match(r"(supply|demand)_lo\[(.+)\]$", name)
        if not m:
            continue
        lo = int(math.ceil(instance.rhs[i] - 1e-9))
        hi_name = f"{m.group(1)}_hi[{m.group(2)}]"
        hi = int(math.floor(instance.rhs[names.index(hi_name)] + 1e-9))
        if lo <= 0:
            continue
        g = math.gcd(*loads)
        top = hi // g
        reach = np.zeros(top + 1, dtype=bool)
        reach[0] = True
        for q in (q // g for q in loads):
            for s in range(q, top + 1):
                if reach[s - q]:
                    reach[s] = True
        first = -(-lo // g)
        if not reach[first:].any():
            out.append((name, float(lo)))
    return out


class _Search:
    def __init__(self, instance: MilpInstance, config: SolveConfig, c: np.ndarray, prob: LpProblem,
                 first_only: bool = False):
        self.inst = instance
        self.cfg = config
        self.c = c
        self.prob = prob
        self.first_only = first_only
        self.t0 = time.perf_counter()
        self.nodes = 0
        self.seq = 0
        self.inc_x: np.ndarray | None = None
        self.inc_val = math.inf
        self.pool: list[np.ndarray] = []
        self.bound = -math.inf
        self.history: list[tuple[float, float, float, float, int]] = []
        self.last_log = -math.inf
        self.q = _quantum(c)
        self.pc: dict[tuple[str, int], list] = {}  # down sum, down count, up sum, up count
        self.row_int = self.integer_rows()

    def integer_rows(self) -> np.ndarray | None:
        """Inequality rows with integer coefficients: their activity is integer at every
        integer point, so a fractional activity is a valid branch."""
        prob = self.prob
        if not prob.supports_row_bounds:
            return None
        A = prob.A
        integral = np.ones(A.shape[0], dtype=bool)
        bad = np.flatnonzero(A.data != np.round(A.data))
        if bad.size:
            integral[np.unique(np.searchsorted(A.indptr, bad, side="right") - 1)] = False
        return np.flatnonzero(integral & (prob.senses != "="))

    def add_cuts(self, lb: np.ndarray, ub: np.ndarray, root):
        """Gomory rounds at the root; cuts left slack at the end are dropped again."""
        prob = self.prob
        m0 = prob.A.shape[0]
        z = self.value(root.x)
        for _ in range(self.cfg.cut_rounds):
            if self.elapsed() > self.cfg.time_limit:
                break
            col_b, col_u, row_b, row_u = prob.basis()
            rlo, rhi = prob.row_bounds()
            mask = np.zeros(prob.A.shape[0], dtype=bool)
            mask[self.row_int] = True
            cuts = gmi_cuts(prob.A, root.x, lb, ub, rlo, rhi, col_b, col_u, row_b, row_u, mask)
            if not cuts:
                break
            m = prob.A.shape[0]
            rhs = np.array([c.rhs for c in cuts])
            prob.add_rows(sp.csr_matrix(np.array([c.coef for c in cuts])), np.full(len(cuts), ">"),
                          rhs - CUT_SAFETY * np.maximum(np.abs(rhs), 1.0))
            res = self.lp(lb, ub, prob.row_bounds())
            if res.status == "infeasible" and self.inc_x is None:
                return None  # the cuts leave no integer point
            if res.status != "optimal":
                # a known schedule contradicts the cuts: numerical noise, so drop them
                prob.drop_rows(np.arange(m, prob.A.shape[0]))
                break
            root, gain = res, self.value(res.x) - z
            z = self.value(res.x)
            if gain < CUT_GAIN * max(abs(z), 1.0):
                break
        act = prob.A[m0:] @ root.x
        slack = np.flatnonzero(act - prob.rhs[m0:] > 1e-6 * np.maximum(np.abs(prob.rhs[m0:]), 1.0)) + m0
        if slack.size:
            prob.drop_rows(slack)
            root = self.lp(lb, ub, prob.row_bounds())
        self.row_int = self.integer_rows()
        return root

    def lift(self, b: float) -> float:
        """Round a lower bound up to the objective grid, when there is one."""
        if self.q <= 0 or not math.isfinite(b):
            return b
        # LP values carry solver noise; shave it off before rounding
        return math.ceil((b - 1e-6 * max(abs(b), 1.0)) / self.q) * self.q

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def value(self, x: np.ndarray) -> float:
        return math.fsum((self.c * x).tolist())

    def record(self, force: bool = False) -> None:
        t = self.elapsed()
        row = (t, self.inc_val, self.bound, rel_gap(self.inc_val, self.bound), self.nodes)
        if not self.history or self.history[-1][1:4] != row[1:4]:
            self.history.append(row)
        cfg = self.cfg
        if cfg.log is not None and cfg.log_every is not None and (force or t - self.last_log >= cfg.log_every):
            self.last_log = t
            cfg.log(f"{t:.3f},{self.inc_val!r},{self.bound!r},{row[3]!r},{self.nodes}")

    def offer(self, x: np.ndarray) -> None:
        xi = np.round(x)
        if not self.inst.is_feasible(xi, tol=1e-9):
            return
        v = self.value(xi)
        if self.inc_x is not None and _same(v, self.inc_val):
            if not any(np.array_equal(xi, p) for p in self.pool):
                self.pool.append(xi)
            return
        if v < self.inc_val:
            self.inc_x, self.inc_val, self.pool = xi, v, [xi]
            self.record()

    def prune_level(self) -> float:
        if self.inc_x is None:
            return math.inf
        slack = max(self.cfg.gap_target * max(abs(self.inc_val), 1.0), TIE_RTOL * max(abs(self.inc_val), 1.0))
        return self.inc_val - slack

    def lp(self, lb: np.ndarray, ub: np.ndarray, rows=None):
        self.nodes += 1
        return self.prob.solve(self.c, lb, ub, rows)

    def _branch_value(self, node: _Node, key: tuple[str, int]) -> float:
        kind, i = key
        return float((self.prob.A[i] @ node.x)[0]) if kind == "r" else float(node.x[i])

    def candidates(self, x: np.ndarray) -> list[tuple[tuple[str, int], float]]:
        """Fractional columns and fractional integer row activities."""
        frac = x - np.floor(x)
        out = [(("c", int(k)), float(x[k])) for k in np.flatnonzero(np.minimum(frac, 1.0 - frac) > INT_TOL)]
        if self.row_int is not None and self.row_int.size:
            act = self.prob.A[self.row_int] @ x
            f = act - np.floor(act)
            for i in np.flatnonzero(np.minimum(f, 1.0 - f) > 1e-6):
                out.append((("r", int(self.row_int[i])), float(act[i])))
        return out

    def children(self, node: _Node, key: tuple[str, int], v: float) -> list[_Node | None]:
        """Down and up child of a split; None marks an infeasible side."""
        kind, i = key
        if kind == "r":
            lo_rows = (node.rows[0].copy(), node.rows[1].copy())
            lo_rows[1][i] = math.floor(v)
            hi_rows = (node.rows[0].copy(), node.rows[1].copy())
            hi_rows[0][i] = math.ceil(v)
            splits = [(node.lb, node.ub, lo_rows), (node.lb, node.ub, hi_rows)]
        else:
            down_ub = node.ub.copy()
            down_ub[i] = math.floor(v)
            up_lb = node.lb.copy()
            up_lb[i] = math.ceil(v)
            splits = [(node.lb, down_ub, node.rows), (up_lb, node.ub, node.rows)]
        kids: list[_Node | None] = []
        for side, (clb, cub, crows) in enumerate(splits):
            res = self.lp(clb, cub, crows)
            if res.status == "unbounded":
                raise UnboundedError("LP relaxation is unbounded; the instance is malformed")
            if res.status != "optimal":
                kids.append(None)
                continue
            self.seq += 1
            z = self.value(res.x)
            kids.append(_Node(max(self.lift(z), node.bound), self.seq, node.depth + 1, clb, cub, res.x, z,
                              res.reduced, crows))
            f = v - math.floor(v) if side == 0 else math.ceil(v) - v
            entry = self.pc.setdefault(key, [0.0, 0, 0.0, 0])
            entry[2 * side] += max(z - node.z, 0.0) / f
            entry[2 * side + 1] += 1
        return kids

    def split(self, node: _Node) -> tuple[list[_Node], float, tuple[str, int]]:
        """Pick a split by pseudocost, probing unreliable candidates with their child LPs first."""
        cands = self.candidates(node.x)
        known = [e for e in self.pc.values() if e[1] and e[3]]
        avg_d = sum(e[0] / e[1] for e in known) / len(known) if known else 1.0
        avg_u = sum(e[2] / e[3] for e in known) / len(known) if known else 1.0

        def score(dn: float, up: float) -> float:
            return max(dn, 1e-6) * max(up, 1e-6)

        def estimate(key, v):
            e = self.pc.get(key)
            f = v - math.floor(v)
            dn = e[0] / e[1] if e and e[1] else avg_d
            up = e[2] / e[3] if e and e[3] else avg_u
            return score(dn * f, up * (1.0 - f))

        unreliable = [(key, v) for key, v in cands
                      if (e := self.pc.get(key)) is None or min(e[1], e[3]) < RELIABLE]
        unreliable.sort(key=lambda kv: -min(kv[1] - math.floor(kv[1]), math.ceil(kv[1]) - kv[1]))
        best: tuple[float, tuple[str, int], float, list | None] = (-1.0, cands[0][0], cands[0][1], None)
        for key, v in cands:
            s = estimate(key, v)
            if s > best[0]:
                best = (s, key, v, None)
        stale = 0
        for key, v in unreliable[:PROBES]:
            kids = self.children(node, key, v)
            if None in kids:
                best = (math.inf, key, v, kids)
                break
            s = score(kids[0].z - node.z, kids[1].z - node.z)
            if s > best[0]:
                best, stale = (s, key, v, kids), 0
            else:
                stale += 1
                if stale >= LOOKAHEAD:
                    break
        _, key, v, kids = best
        if kids is None:
            kids = self.children(node, key, v)
        return [k for k in kids if k is not None], v, key

    def plunge_ok(self, kid: _Node, open_: list[_Node]) -> bool:
        """Keep diving while the child is not much worse than the best open node."""
        if self.inc_x is None or not open_:
            return True
        best = open_[0].bound
        return kid.bound <= best + PLUNGE * (self.prune_level() - best)

    def floor(self, open_: list[_Node], current: _Node | None = None) -> float:
        """Valid lower bound: nothing unexplored or gap-pruned can beat it."""
        live = open_[0].bound if open_ else math.inf
        if current is not None:
            live = min(live, current.bound)
        return min(live, self.pruned, self.inc_val)

    def run(self, lb: np.ndarray, ub: np.ndarray) -> str:
        rows0 = self.prob.row_bounds() if self.row_int is not None else None
        root = self.lp(lb, ub, rows0)
        if root.status == "unbounded":
            raise UnboundedError("LP relaxation is unbounded; the instance is malformed")
        if root.status == "infeasible":
            return "root_infeasible"
        if self.prob.supports_row_bounds and self.cfg.cut_rounds and not self.first_only:
            root = self.add_cuts(lb, ub, root)
            if root is None:
                self.bound = math.inf
                self.record(force=True)
                return "done"
            rows0 = self.prob.row_bounds()
        self.pruned = math.inf
        z = self.value(root.x)
        self.bound = self.lift(z)
        open_: list[_Node] = []
        # best-first over open nodes, plunging from each popped node towards a leaf
        current: _Node | None = _Node(self.bound, 0, 0, lb.copy(), ub.copy(), root.x, z, root.reduced, rows0)
        self.record()
        outcome = "done"
        while current is not None or open_:
            if current is None:
                current = heapq.heappop(open_)
            if self.elapsed() > self.cfg.time_limit or (
                    self.cfg.node_limit is not None and self.nodes >= self.cfg.node_limit):
                heapq.heappush(open_, current)
                outcome = "time_limit" if self.elapsed() > self.cfg.time_limit else "node_limit"
                break
            node, current = current, None
            if node.bound >= self.prune_level():
                self.pruned = min(self.pruned, node.bound)
                continue
            if self.inc_x is not None:
                _fix_by_reduced_cost(node, self.prune_level())
            # integral nodes become incumbents; fractional ones get a rounding attempt
            self.offer(node.x)
            if self.first_only and self.inc_x is not None:
                return "first"
            if _branch_var(node.x, self.c) >= 0:
                kids, v, key = self.split(node)
                # the child nearer the LP value continues the plunge
                kids.sort(key=lambda n: abs(self._branch_value(n, key) - v))
                for kid in kids:
                    if kid.bound >= self.prune_level():
                        self.pruned = min(self.pruned, kid.bound)
                    elif current is None and self.plunge_ok(kid, open_):
                        current = kid
                    else:
                        heapq.heappush(open_, kid)
            self.bound = max(self.bound, self.floor(open_, current))
            if rel_gap(self.inc_val, self.bound) <= self.cfg.gap_target:
                break
            self.record()
        if self.inc_x is not None:
            self.bound = max(self.bound, self.floor(open_, current))
        self.record(force=True)
        return outcome


def window_projections(A: sp.csr_matrix, senses: np.ndarray, rhs: np.ndarray, ub: np.ndarray,
                       names: Sequence[str], limit: int = 200_000) -> list[tuple[str, np.ndarray, str, float]]:
    """Count bounds implied by two-sided windows over a few distinct coefficients.

    A window lo <= sum d_g n_g <= hi, where n_g counts the columns carrying
    coefficient d_g, admits only some integer count vectors; the smallest and
    largest n_g among them are valid rows that the relaxation cannot see
    (two 15.5 t loads may fit a window that no mix with 10 t loads does).
    """
    groups: dict[tuple, dict] = {}
    for i in range(A.shape[0]):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        vals = A.data[lo:hi]
        if hi == lo or (vals <= 0).any() or not np.all(vals == np.round(vals)):
            continue
        key = (A.indices[lo:hi].tobytes(), vals.tobytes())
        g = groups.setdefault(key, {"lo": -math.inf, "hi": math.inf, "row": i})
        if senses[i] in (">", "="):
            g["lo"] = max(g["lo"], rhs[i])
        if senses[i] in ("<", "="):
            g["hi"] = min(g["hi"], rhs[i])
    out = []
    for g in groups.values():
        if not (math.isfinite(g["lo"]) and math.isfinite(g["hi"])):
            continue
        i = g["row"]
        idx = A.indices[A.indptr[i]:A.indptr[i + 1]]
        vals = A.data[A.indptr[i]:A.indptr[i + 1]]
        coefs = np.unique(vals)
        if not 2 <= coefs.size <= 3:
            continue
        caps = [int(min(g["hi"] // d, ub[idx[vals == d]].sum())) for d in coefs]
        if math.prod(c + 1 for c in caps) > limit:
            continue
        grid = np.indices([c + 1 for c in caps]).reshape(len(caps), -1)
        total = coefs @ grid
        ok = grid[:, (total >= g["lo"] - 1e-9) & (total <= g["hi"] + 1e-9)]
        if ok.shape[1] == 0:
            continue  # an unreachable window; the search and its certificate handle it
        for k, d in enumerate(coefs):
            w = np.zeros(A.shape[1])
            w[idx[vals == d]] = 1.0
            mn, mx = int(ok[k].min()), int(ok[k].max())
            if mn > 0:
                out.append((f"{names[i]}:count{k}_lo", w, ">", float(mn)))
            if mx < caps[k]:
                out.append((f"{names[i]}:count{k}_hi", w, "<", float(mx)))
    return out


def _add_floors(instance: MilpInstance, prob: LpProblem, lb: np.ndarray, ub: np.ndarray) -> list[str]:
    """Rows implied by integrality: window count bounds, then rounded-up relaxation
    minima of the instance's integer-valued forms."""
    names = []
    derived = window_projections(prob.A, prob.senses, prob.rhs, ub, instance.row_names)
    if derived:
        prob.add_rows(sp.csr_matrix(np.array([w for _, w, _, _ in derived])),
                      np.array([s for _, _, s, _ in derived]), np.array([b for *_, b in derived]))
        names += [n for n, *_ in derived]
    forms = getattr(instance, "integer_forms", None)
    for name, w in (forms() if forms else []):
        res = prob.solve(w, lb, ub)
        if res.status != "optimal":
            continue  # the root solve reports infeasibility itself
        floor = math.ceil(res.objective - 1e-6)
        if floor > res.objective + 1e-6:
            prob.add_rows(sp.csr_matrix(w.reshape(1, -1)), np.array([">"]), np.array([float(floor)]))
            names.append(name)
    return names


def solve(
    instance: MilpInstance,
    config: SolveConfig | None = None,
    warm_start: np.ndarray | None = None,
) -> tuple[FlowSolution, SolveStats]:
    """Minimise the instance objective over integer flows."""
    cfg = config or SolveConfig()
    A, rhs = tighten_rows(instance.A, instance.senses, instance.rhs)
    prob = LpProblem(A, instance.senses, rhs, cfg.engine)
    c = np.asarray(instance.c, dtype=float)
    lb = np.ceil(instance.lb - INT_TOL)
    ub = np.floor(instance.ub + INT_TOL)
    names = list(instance.row_names) + _add_floors(instance, prob, lb, ub)
    search = _Search(instance, cfg, c, prob)
    if warm_start is not None:
        search.offer(np.asarray(warm_start, dtype=float))
    outcome = search.run(lb, ub)
    const = instance.const

    if outcome == "root_infeasible":
        cert = elastic_certificate(prob, lb, ub, names)
        stats = SolveStats(math.inf, math.inf, math.inf, search.nodes, search.elapsed(), "infeasible", search.history)
        return FlowSolution(instance, None, math.nan, "infeasible", math.inf, cert), stats

    if search.inc_x is None:
        if outcome == "done":
            cert = _window_certificate(instance) or [("integer_infeasible", 0.0)]
            stats = SolveStats(math.inf, math.inf, math.inf, search.nodes, search.elapsed(), "infeasible",
                               search.history)
            return FlowSolution(instance, None, math.nan, "infeasible", math.inf, cert), stats
        stats = SolveStats(search.bound + const, math.inf, math.inf, search.nodes, search.elapsed(), "time_limit",
                           search.history)
        return FlowSolution(instance, None, math.nan, "time_limit"), stats

    gap = rel_gap(search.inc_val, search.bound)
    status = "optimal_within_gap" if gap <= cfg.gap_target + 1e-12 else "time_limit"

    pool = list(search.pool)
    if cfg.tie_samples > 0 and gap <= TIE_RTOL:
        pool = _sample_ties(instance, cfg, prob, c, search.inc_val, pool, lb, ub)
    x = tie_break(pool, cfg.seed) if len(pool) > 1 else search.inc_x
    obj = instance.objective(x)
    stats = SolveStats(
        best_bound=min(search.bound, search.inc_val) + const,
        incumbent=obj,
        gap=gap,
        nodes_explored=search.nodes,
        wall_time=search.elapsed(),
        status=status,
        history=[(t, i + const, b + const, g, n) for t, i, b, g, n in search.history],
        n_optima=len(pool),
    )
    return FlowSolution(instance, x.astype(np.int64), obj, status, gap), stats


def _sample_ties(instance, cfg, prob, c, z, pool, lb, ub) -> list[np.ndarray]:
    """Look for further optima by minimising random objectives on the optimal face."""
    rng = np.random.default_rng([cfg.seed, 7919])
    face = prob.with_row(c, "<", z + TIE_RTOL * max(abs(z), 1.0))
    pool = list(pool)
    for _ in range(cfg.tie_samples):
        r = rng.uniform(-1.0, 1.0, size=len(c))
        probe_cfg = SolveConfig(gap_target=0.0, time_limit=cfg.time_limit, node_limit=cfg.node_limit, engine=cfg.engine)
        s = _Search(instance, probe_cfg, r, face, first_only=True)
        s.run(lb.copy(), ub.copy())
        if s.inc_x is None:
            continue
        xi = s.inc_x
        if _same(math.fsum((c * xi).tolist()), z) and not any(np.array_equal(xi, p) for p in pool):
            pool.append(xi)
    return pool


def tie_break(incumbents: Sequence[np.ndarray], seed: int) -> np.ndarray:
    """Uniform, seed-driven choice among equally good schedules."""
    if not incumbents:
        raise ValueError("tie_break needs at least one incumbent")
    if len(incumbents) == 1:
        return incumbents[0]
    # canonical order so the pick does not depend on discovery order
    order = sorted(range(len(incumbents)), key=lambda i: np.asarray(incumbents[i]).tobytes())
    rng = np.random.default_rng([seed, 104729])
    return incumbents[order[int(rng.integers(len(order)))]]
