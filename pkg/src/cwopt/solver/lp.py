"""LP relaxations behind one interface, with a native and a HiGHS engine."""

from __future__ import annotations

from dataclasses import dataclass

import highspy
import numpy as np
import scipy.sparse as sp

from .simplex import bounded_simplex

__all__ = ["LpResult", "LpProblem", "lp_relax"]


class InfeasibleError(RuntimeError):
    pass


class UnboundedError(RuntimeError):
    """The relaxation has no finite optimum: the instance is malformed."""


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None
    objective: float
    reduced: np.ndarray | None = None  # reduced costs, when the engine reports them


_STATUS = {
    highspy.HighsModelStatus.kOptimal: "optimal",
    highspy.HighsModelStatus.kInfeasible: "infeasible",
    highspy.HighsModelStatus.kUnbounded: "unbounded",
}


class LpProblem:
    """Fixed rows; objective and column bounds supplied per solve."""

    def __init__(self, A: sp.spmatrix, senses: np.ndarray, rhs: np.ndarray, engine: str = "auto"):
        self.A = sp.csr_matrix(A)
        self.senses = np.asarray(senses)
        self.rhs = np.asarray(rhs, dtype=float)
        if engine == "auto":
            # the dense simplex stays available as an independent cross-check
            engine = "highs"
        if engine not in ("simplex", "highs"):
            raise ValueError(f"unknown LP engine {engine!r}")
        self.engine = engine
        if engine == "highs":
            self._highs = self._build_highs()
            self._cost: np.ndarray | None = None
        else:
            self.dense = self.A.toarray()

    def _build_highs(self) -> highspy.Highs:
        # one persistent model: bound changes between solves reuse the last basis
        m, n = self.A.shape
        csc = self.A.tocsc()
        lp = highspy.HighsLp()
        lp.num_col_, lp.num_row_ = n, m
        lp.col_cost_ = np.zeros(n)
        lp.col_lower_ = np.zeros(n)
        lp.col_upper_ = np.full(n, highspy.kHighsInf)
        lp.row_lower_, lp.row_upper_ = self.row_bounds()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = csc.indptr
        lp.a_matrix_.index_ = csc.indices
        lp.a_matrix_.value_ = csc.data
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("threads", 1)
        h.passModel(lp)
        return h

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def supports_row_bounds(self) -> bool:
        return self.engine == "highs"

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        inf = np.inf
        return np.where(self.senses == "<", -inf, self.rhs), np.where(self.senses == ">", inf, self.rhs)

    def add_rows(self, rows: sp.spmatrix, senses: np.ndarray, rhs: np.ndarray) -> None:
        """Append rows in place; a HiGHS model keeps its basis."""
        rows = sp.csr_matrix(rows, dtype=float)
        senses = np.asarray(senses)
        rhs = np.asarray(rhs, dtype=float)
        self.A = sp.vstack([self.A, rows]).tocsr()
        self.senses = np.append(self.senses, senses)
        self.rhs = np.append(self.rhs, rhs)
        if self.engine == "simplex":
            self.dense = self.A.toarray()
            return
        inf = highspy.kHighsInf
        lo = np.where(senses == "<", -inf, rhs)
        hi = np.where(senses == ">", inf, rhs)
        self._highs.addRows(rows.shape[0], lo, hi, rows.nnz, rows.indptr[:-1].astype(np.int32),
                            rows.indices.astype(np.int32), rows.data)

    def drop_rows(self, idx: np.ndarray) -> None:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return
        keep = np.ones(self.A.shape[0], dtype=bool)
        keep[idx] = False
        self.A = self.A[keep]
        self.senses = self.senses[keep]
        self.rhs = self.rhs[keep]
        if self.engine == "simplex":
            self.dense = self.A.toarray()
        else:
            self._highs.deleteRows(idx.size, idx.astype(np.int32))

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Basic and at-upper masks for columns and rows after the last HiGHS solve."""
        b = self._highs.getBasis()
        basic, upper = int(highspy.HighsBasisStatus.kBasic), int(highspy.HighsBasisStatus.kUpper)
        cs = np.array([int(v) for v in b.col_status])
        rs = np.array([int(v) for v in b.row_status])
        return cs == basic, cs == upper, rs == basic, rs == upper

    def with_row(self, coef: np.ndarray, sense: str, b: float) -> "LpProblem":
        A = sp.vstack([self.A, sp.csr_matrix(np.asarray(coef, dtype=float).reshape(1, -1))])
        return LpProblem(A, np.append(self.senses, sense), np.append(self.rhs, b), self.engine)

    def solve(self, c: np.ndarray, lb: np.ndarray, ub: np.ndarray,
              rows: tuple[np.ndarray, np.ndarray] | None = None) -> LpResult:
        """Minimise c.x within the column box; ``rows`` optionally narrows the row ranges."""
        if (ub < lb).any():
            return LpResult("infeasible", None, float("nan"))
        if rows is not None and (rows[1] < rows[0]).any():
            return LpResult("infeasible", None, float("nan"))
        if rows is not None and self.engine != "highs":
            raise ValueError("row ranges need the highs engine")
        if self.engine == "simplex":
            res = bounded_simplex(c, self.dense, self.senses, self.rhs, lb, ub)
            if res.status == "iteration_limit":
                raise RuntimeError("native simplex hit its iteration limit")
            return LpResult(res.status, res.x, res.objective)
        h = self._highs
        n = self.n
        idx = np.arange(n, dtype=np.int32)
        c = np.asarray(c, dtype=float)
        if self._cost is None or not np.array_equal(c, self._cost):
            h.changeColsCost(n, idx, c)
            self._cost = c.copy()
        inf = highspy.kHighsInf
        h.changeColsBounds(n, idx, np.where(np.isfinite(lb), lb, -inf), np.where(np.isfinite(ub), ub, inf))
        rlo, rhi = rows if rows is not None else self.row_bounds()
        m = self.A.shape[0]
        if m:
            h.changeRowsBounds(m, np.arange(m, dtype=np.int32), np.where(np.isfinite(rlo), rlo, -inf),
                               np.where(np.isfinite(rhi), rhi, inf))
        h.run()
        status = _STATUS.get(h.getModelStatus())
        if status is None and h.getModelStatus() == highspy.HighsModelStatus.kUnboundedOrInfeasible:
            # settle the ambiguity from scratch
            h.clearSolver()
            h.run()
            status = _STATUS.get(h.getModelStatus())
        if status == "optimal":
            sol = h.getSolution()
            x = np.clip(np.asarray(sol.col_value), lb, ub)
            return LpResult("optimal", x, float(h.getInfo().objective_function_value), np.asarray(sol.col_dual))
        if status == "infeasible":
            return LpResult("infeasible", None, float("nan"))
        if status == "unbounded":
            return LpResult("unbounded", None, float("-inf"))
        raise RuntimeError(f"HiGHS failed with status {h.modelStatusToString(h.getModelStatus())}")


def lp_relax(instance, engine: str = "auto") -> tuple[np.ndarray, float]:
    """Optimal solution and value of the continuous relaxation."""
    prob = LpProblem(instance.A, instance.senses, instance.rhs, engine)
    res = prob.solve(instance.c, instance.lb, instance.ub)
    if res.status == "infeasible":
        raise InfeasibleError("LP relaxation is infeasible")
    if res.status == "unbounded":
        raise UnboundedError("LP relaxation is unbounded")
    return res.x, res.objective + instance.const


def elastic_certificate(prob: LpProblem, lb: np.ndarray, ub: np.ndarray, names) -> list[tuple[str, float]]:
    """Rows that must be violated, and by how much, in a least-violation relaxation."""
    m, n = prob.A.shape
    cols = []
    kinds = []
    for i, s in enumerate(prob.senses):
        if s in ("<", "="):
            cols.append((i, -1.0))
            kinds.append(i)
        if s in (">", "="):
            cols.append((i, 1.0))
            kinds.append(i)
    E = sp.csr_matrix(
        ([v for _, v in cols], ([i for i, _ in cols], list(range(len(cols))))), shape=(m, len(cols))
    )
    big = LpProblem(sp.hstack([prob.A, E]).tocsr(), prob.senses, prob.rhs, engine="highs")
    c = np.concatenate([np.zeros(n), np.ones(len(cols))])
    res = big.solve(c, np.concatenate([lb, np.zeros(len(cols))]), np.concatenate([ub, np.full(len(cols), np.inf)]))
    if res.status != "optimal":
        return []
    viol: dict[int, float] = {}
    for k, row in enumerate(kinds):
        v = float(res.x[n + k])
        if v > 1e-7:
            viol[row] = viol.get(row, 0.0) + v
    return [(names[i], v) for i, v in sorted(viol.items())]
