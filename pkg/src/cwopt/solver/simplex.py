"""Dense bounded-variable primal simplex (two-phase).

Variables keep their box bounds implicitly: a nonbasic variable sits at its
lower or upper bound, and the ratio test includes bound flips. Dantzig
pricing is used until a run of degenerate pivots, then Bland's rule takes
over until the objective moves again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SimplexResult", "bounded_simplex"]

TOL = 1e-9
DEGENERATE_SWITCH = 30


@dataclass
class SimplexResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None
    objective: float
    iterations: int


class _Tableau:
    def __init__(self, T: np.ndarray, basis: np.ndarray, xb: np.ndarray, upper: np.ndarray):
        self.T = T  # m x N, B^-1 [A | slacks | artificials]
        self.basis = basis  # column index basic in each row
        self.xb = xb  # values of basic variables
        self.upper = upper  # column upper bounds (lower bounds are all 0)
        self.at_upper = np.zeros(T.shape[1], dtype=bool)
        self.is_basic = np.zeros(T.shape[1], dtype=bool)
        self.is_basic[basis] = True

    def run(self, cost: np.ndarray, max_iter: int) -> tuple[str, int]:
        T = self.T
        m = T.shape[0]
        degenerate = 0
        it = 0
        while it < max_iter:
            it += 1
            d = cost - cost[self.basis] @ T
            d[self.is_basic] = 0.0
            gain = np.where(self.at_upper, d, -d)  # positive means improving
            gain[self.upper <= TOL] = 0.0  # fixed columns never enter
            cand = np.flatnonzero(gain > TOL)
            if cand.size == 0:
                return "optimal", it
            if degenerate >= DEGENERATE_SWITCH:
                q = int(cand[0])  # Bland
            else:
                q = int(cand[np.argmax(gain[cand])])
            direction = -1.0 if self.at_upper[q] else 1.0
            alpha = direction * T[:, q]

            theta = self.upper[q]
            leave = -1
            leave_to_upper = False
            for i in range(m):
                a = alpha[i]
                if a > TOL:
                    lim = self.xb[i] / a
                    to_up = False
                elif a < -TOL and np.isfinite(self.upper[self.basis[i]]):
                    lim = (self.upper[self.basis[i]] - self.xb[i]) / (-a)
                    to_up = True
                else:
                    continue
                lim = max(lim, 0.0)
                if lim < theta - TOL or (
                    leave >= 0 and abs(lim - theta) <= TOL and degenerate >= DEGENERATE_SWITCH
                    and self.basis[i] < self.basis[leave]
                ):
                    theta, leave, leave_to_upper = lim, i, to_up
            if not np.isfinite(theta):
                return "unbounded", it
            degenerate = degenerate + 1 if theta <= TOL else 0

            self.xb -= theta * alpha
            if leave < 0:
                self.at_upper[q] = not self.at_upper[q]
                continue
            entering_value = (self.upper[q] if self.at_upper[q] else 0.0) + direction * theta
            out = self.basis[leave]
            self.is_basic[out] = False
            self.at_upper[out] = leave_to_upper
            self.is_basic[q] = True
            self.at_upper[q] = False
            piv = T[leave, q]
            T[leave] /= piv
            col = T[:, q].copy()
            col[leave] = 0.0
            T -= np.outer(col, T[leave])
            self.basis[leave] = q
            self.xb[leave] = entering_value
        return "iteration_limit", it

    def values(self) -> np.ndarray:
        x = np.where(self.at_upper, self.upper, 0.0)
        x[~self.is_basic & ~np.isfinite(x)] = 0.0
        x[self.basis] = self.xb
        return x


def bounded_simplex(
    c: np.ndarray,
    A: np.ndarray,
    senses: np.ndarray,
    b: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    max_iter: int = 50_000,
) -> SimplexResult:
    """Minimise c.x subject to A x (<,>,=) b and lb <= x <= ub (lb finite)."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if (ub < lb - TOL).any():
        return SimplexResult("infeasible", None, float("nan"), 0)
    shift_b = np.asarray(b, dtype=float) - A @ lb
    width = ub - lb

    slack_rows = [i for i in range(m) if senses[i] != "="]
    n_slack = len(slack_rows)
    S = np.zeros((m, n_slack))
    for k, i in enumerate(slack_rows):
        S[i, k] = 1.0 if senses[i] == "<" else -1.0

    basis = np.empty(m, dtype=int)
    rows = np.hstack([A, S])
    art_rows = []
    for i in range(m):
        k = slack_rows.index(i) if senses[i] != "=" else -1
        if k >= 0 and S[i, k] * shift_b[i] >= 0:
            sign = S[i, k]
            rows[i] *= sign
            shift_b[i] *= sign
            basis[i] = n + k
        else:
            if shift_b[i] < 0:
                rows[i] *= -1.0
                shift_b[i] *= -1.0
            art_rows.append(i)
    n_art = len(art_rows)
    Art = np.zeros((m, n_art))
    for k, i in enumerate(art_rows):
        Art[i, k] = 1.0
        basis[i] = n + n_slack + k
    T = np.hstack([rows, Art])
    upper = np.concatenate([width, np.full(n_slack, np.inf), np.full(n_art, np.inf)])
    tab = _Tableau(T, basis, shift_b.copy(), upper)

    iters = 0
    if n_art:
        cost1 = np.concatenate([np.zeros(n + n_slack), np.ones(n_art)])
        status, k = tab.run(cost1, max_iter)
        iters += k
        if status == "iteration_limit":
            return SimplexResult(status, None, float("nan"), iters)
        infeas = float(tab.values()[n + n_slack:].sum())
        if infeas > 1e-7 * max(1.0, float(np.abs(shift_b).max(initial=0.0))):
            return SimplexResult("infeasible", None, float("nan"), iters)
        tab.upper[n + n_slack:] = 0.0  # artificials stay at zero from here on
        tab.at_upper[n + n_slack:] = False

    cost2 = np.concatenate([c, np.zeros(n_slack + n_art)])
    status, k = tab.run(cost2, max_iter - iters)
    iters += k
    if status != "optimal":
        return SimplexResult(status, None, float("nan"), iters)
    x = tab.values()[:n] + lb
    return SimplexResult("optimal", x, float(c @ x), iters)
