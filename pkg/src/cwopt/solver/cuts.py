"""Gomory mixed-integer cuts read off an optimal LP basis.

The LP is viewed as [A  -I] (x, r) = 0 with bounds on the columns x and on
the row activities r. Every column is integer; a row activity is integer
when its coefficients are, and continuous otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

__all__ = ["Cut", "gmi_cuts"]

AWAY = 0.01  # skip sources whose value is this close to an integer
MAX_RANGE = 1e6  # largest to smallest kept coefficient
ZERO = 1e-9


@dataclass(frozen=True)
class Cut:
    coef: np.ndarray  # dense, one entry per column
    rhs: float  # coef @ x >= rhs

    def violation(self, x: np.ndarray) -> float:
        return (self.rhs - float(self.coef @ x)) / max(float(np.linalg.norm(self.coef)), 1e-12)


def _frac(v: np.ndarray) -> np.ndarray:
    return v - np.floor(v)


def gmi_cuts(
    A: sp.csr_matrix,
    x: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    rlo: np.ndarray,
    rhi: np.ndarray,
    col_basic: np.ndarray,
    col_at_upper: np.ndarray,
    row_basic: np.ndarray,
    row_at_upper: np.ndarray,
    row_int: np.ndarray,
    limit: int = 50,
) -> list[Cut]:
    """Cuts from the most fractional basic integer variables, at most ``limit`` of them."""
    m, n = A.shape
    r = A @ x
    z = np.concatenate([x, r])
    zlo = np.concatenate([lb, rlo])
    zhi = np.concatenate([ub, rhi])
    basic = np.concatenate([col_basic, row_basic])
    upper = np.concatenate([col_at_upper, row_at_upper])
    integer = np.concatenate([np.ones(n, dtype=bool), row_int])
    full = sp.hstack([A, -sp.identity(m, format="csr")]).tocsc()
    bidx = np.flatnonzero(basic)
    if bidx.size != m:
        return []
    nidx = np.flatnonzero(~basic)
    try:
        lu = splu(full[:, bidx].tocsc())
    except RuntimeError:
        return []
    N = full[:, nidx].tocsr()

    f = _frac(z[bidx])
    score = np.minimum(f, 1.0 - f)
    cand = [p for p in np.argsort(-score) if score[p] > AWAY and integer[bidx[p]]][:limit]
    cuts = []
    for p in cand:
        e = np.zeros(m)
        e[p] = 1.0
        u = lu.solve(e, trans="T")
        alpha = N.T @ u  # z_B[p] = -alpha . z_N
        # with z_j = lo_j + s_j or hi_j - s_j:  z_B[p] + sum abar_j s_j = beta
        abar = np.where(upper[nidx], -alpha, alpha)
        beta = z[bidx[p]]
        f0 = beta - math.floor(beta)
        fixed = zhi[nidx] - zlo[nidx] <= ZERO
        is_int = integer[nidx]
        fj = _frac(abar)
        g = np.where(
            is_int,
            np.where(fj <= f0, fj / f0, (1.0 - fj) / (1.0 - f0)),
            np.where(abar >= 0, abar / f0, -abar / (1.0 - f0)),
        )
        g[fixed] = 0.0
        g[np.abs(g) < ZERO] = 0.0
        if not np.isfinite(g).all():
            continue
        # sum g_j s_j >= 1, back in terms of z, then of x
        sign = np.where(upper[nidx], -1.0, 1.0)
        base = np.where(upper[nidx], zhi[nidx], zlo[nidx])
        if not np.isfinite(base[g != 0]).all():
            continue
        cz = np.zeros(n + m)
        cz[nidx] = g * sign
        rhs = 1.0 + float(np.sum(g * sign * np.where(g != 0, base, 0.0)))
        coef = cz[:n] + A.T @ cz[n:]
        coef[np.abs(coef) < ZERO] = 0.0
        nz = np.abs(coef[coef != 0])
        if nz.size == 0 or nz.max() / nz.min() > MAX_RANGE:
            continue
        cut = Cut(coef, rhs)
        if cut.violation(x) > 1e-6:
            cuts.append(cut)
    return cuts
