"""LP solvers: HiGHS dual simplex, and an exact rational simplex oracle.

The floating-point path runs HiGHS with presolve off, dual simplex, one
thread and a fixed random seed, so identical input gives identical output.
The exact path is a revised simplex over rationals with Bland's rule and a
two-phase start; it is slow and meant for small instances.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass, field
from fractions import Fraction

import highspy
import numpy as np
import scipy.sparse as sp

from .errors import CapExceeded, SolverFailure
from .lpmodel import LinearProgram

try:  # gmpy2 rationals are ~20x faster than fractions.Fraction
    from gmpy2 import mpq as _Q
except ImportError:  # pragma: no cover
    _Q = Fraction

OPTIMAL = "OPTIMAL"
INFEASIBLE = "INFEASIBLE"
UNBOUNDED = "UNBOUNDED"
ITER_LIMIT = "ITER_LIMIT"

DEFAULT_TOL = 1e-9
DEFAULT_EXACT_NNZ_CAP = 200_000


@dataclass
class SolveResult:
    status: str
    objective: float | Fraction | None
    x: np.ndarray | list
    iterations: int = 0
    max_row_violation: float = 0.0
    max_bound_violation: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def residuals(lp: LinearProgram, x) -> tuple[float, float]:
    """Max constraint violation and max bound violation of ``x``."""
    x = np.asarray(x, dtype=float)
    r = lp.A @ x - lp.rhs
    eq = np.array([rel == "=" for rel in lp.relations])
    row_viol = np.where(eq, np.abs(r), np.maximum(r, 0.0))
    bound = np.maximum(-x, 0.0)
    if lp.fixed_zero is not None:
        bound = np.where(lp.fixed_zero, np.abs(x), bound)
    return float(row_viol.max(initial=0.0)), float(bound.max(initial=0.0))


def _env_float(name: str, default: float) -> float:
    v = os.environ.get(name)
    return float(v) if v else default


@dataclass(frozen=True)
class Basis:
    """Simplex basis statuses (HiGHS codes) usable as a warm start."""

    col_status: tuple[int, ...]
    row_status: tuple[int, ...]


@functools.lru_cache(maxsize=64)
def _to_highs_basis(basis: Basis) -> "highspy.HighsBasis":
    status = [highspy.HighsBasisStatus(v) for v in range(max(basis.col_status + basis.row_status) + 1)]
    hb = highspy.HighsBasis()
    hb.col_status = [status[v] for v in basis.col_status]
    hb.row_status = [status[v] for v in basis.row_status]
    hb.valid = True
    return hb


def solve(lp: LinearProgram, tol: float | None = None, max_iter: int | None = None,
          basis: Basis | None = None, keep_basis: bool = False) -> SolveResult:
    """Solve ``lp`` with HiGHS. ``CBD_SOLVER_TOL`` / ``CBD_MAX_ITER`` set defaults.

    ``basis`` warm-starts the dual simplex; it is ignored if its dimensions do
    not match. The result is a deterministic function of ``lp`` and ``basis``.
    With ``keep_basis`` the final basis is returned in ``info["basis"]``.
    """
    tol = tol if tol is not None else _env_float("CBD_SOLVER_TOL", DEFAULT_TOL)
    if max_iter is None and os.environ.get("CBD_MAX_ITER"):
        max_iter = int(os.environ["CBD_MAX_ITER"])

    h = highspy.Highs()
    for key, val in (("output_flag", False), ("presolve", "off"), ("simplex_strategy", 1),
                     ("threads", 1), ("random_seed", 0),
                     ("primal_feasibility_tolerance", tol), ("dual_feasibility_tolerance", tol)):
        h.setOptionValue(key, val)
    if max_iter is not None:
        h.setOptionValue("simplex_iteration_limit", int(max_iter))

    # addRows/addCols take numpy buffers directly; HighsLp attribute
    # assignment converts element by element and is several times slower
    A = sp.csc_matrix(lp.A)
    eq = np.array([rel == "=" for rel in lp.relations], dtype=bool)
    rhs = np.asarray(lp.rhs, dtype=np.float64)
    empty_i = np.zeros(0, dtype=np.int32)
    h.addRows(lp.num_rows, np.where(eq, rhs, -highspy.kHighsInf), rhs, 0, empty_i, empty_i, np.zeros(0))
    upper = np.full(lp.num_vars, highspy.kHighsInf)
    if lp.fixed_zero is not None:
        upper[lp.fixed_zero] = 0.0
    h.addCols(lp.num_vars, np.asarray(lp.c, dtype=np.float64), np.zeros(lp.num_vars), upper, A.nnz,
              A.indptr[:-1].astype(np.int32), A.indices.astype(np.int32), A.data.astype(np.float64))
    if lp.sense == "max":
        h.changeObjectiveSense(highspy.ObjSense.kMaximize)
    if basis is not None and len(basis.col_status) == lp.num_vars and len(basis.row_status) == lp.num_rows:
        h.setBasis(_to_highs_basis(basis))
    h.run()

    status = h.getModelStatus()
    info = h.getInfo()
    iters = int(info.simplex_iteration_count)
    S = highspy.HighsModelStatus
    if status == S.kOptimal:
        x = np.asarray(h.getSolution().col_value, dtype=float)
        row_v, bound_v = residuals(lp, x)
        extra = {}
        if keep_basis:
            hb = h.getBasis()
            extra["basis"] = Basis(tuple(int(v) for v in hb.col_status), tuple(int(v) for v in hb.row_status))
        return SolveResult(OPTIMAL, float(info.objective_function_value) + lp.offset, x, iters, row_v, bound_v,
                           extra)
    empty = np.zeros(lp.num_vars)
    if status == S.kInfeasible:
        return SolveResult(INFEASIBLE, None, empty, iters)
    if status in (S.kUnbounded, S.kUnboundedOrInfeasible):
        return SolveResult(UNBOUNDED, None, empty, iters)
    if status == S.kIterationLimit:
        return SolveResult(ITER_LIMIT, None, empty, iters)
    raise SolverFailure(f"HiGHS returned {h.modelStatusToString(status)}", lp=lp.name)


# -- exact oracle ----------------------------------------------------------

def _to_q(v) -> object:
    return _Q(Fraction(v)) if isinstance(v, Fraction) else _Q(float(v))


def _to_fraction(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(int(v.numerator), int(v.denominator))


class _Revised:
    """Revised simplex on ``min c x, A x = b, x >= 0`` with explicit B^-1.

    Columns are ``{row: coef}`` dicts. Bland's rule: the entering variable is
    the lowest-index improving column; ties in the ratio test go to the
    lowest-index basic variable.
    """

    def __init__(self, cols, b, basis, max_iter):
        self.cols = cols
        self.m = len(b)
        rows, idx, vals = [], [], []
        for j, col in enumerate(cols):
            for r, a in col.items():
                rows.append(r)
                idx.append(j)
                vals.append(float(a))
        self.At = sp.csr_matrix((vals, (idx, rows)), shape=(len(cols), self.m))
        self.abs_At = abs(self.At)
        self.basis = list(basis)
        self.xb = list(b)
        zero, one = _Q(0), _Q(1)
        self.Binv = [[one if i == j else zero for j in range(self.m)] for i in range(self.m)]
        self.iterations = 0
        self.max_iter = max_iter

    def run(self, cost, allowed) -> str:
        m = self.m
        zero = _Q(0)
        cf = np.array([float(v) for v in cost])
        cf_abs = 1.0 + np.abs(cf)
        while True:
            if self.iterations >= self.max_iter:
                return ITER_LIMIT
            cb = [cost[j] for j in self.basis]
            y = [zero] * m
            for i in range(m):
                if cb[i]:
                    row = self.Binv[i]
                    ci = cb[i]
                    for r in range(m):
                        if row[r]:
                            y[r] += ci * row[r]
            in_basis = set(self.basis)
            enter = -1
            # Float pre-screen: a column whose float reduced cost exceeds a
            # margin far above rounding error cannot have an exact negative one.
            yf = np.array([float(v) for v in y])
            df = cf - self.At @ yf
            margin = 1e-9 * (cf_abs + self.abs_At @ np.abs(yf))
            for j in np.nonzero(df < margin)[0].tolist():
                if not allowed[j] or j in in_basis:
                    continue
                d = cost[j]
                for r, a in self.cols[j].items():
                    if y[r]:
                        d -= y[r] * a
                if d < 0:
                    enter = j
                    break
            if enter < 0:
                return OPTIMAL
            col = self.cols[enter]
            alpha = [zero] * m
            for i in range(m):
                row = self.Binv[i]
                s = zero
                for r, a in col.items():
                    if row[r]:
                        s += row[r] * a
                alpha[i] = s
            leave, best = -1, None
            for i in range(m):
                if alpha[i] > 0:
                    ratio = self.xb[i] / alpha[i]
                    if best is None or ratio < best or (ratio == best and self.basis[i] < self.basis[leave]):
                        leave, best = i, ratio
            if leave < 0:
                return UNBOUNDED
            self.pivot(leave, enter, alpha)
            self.iterations += 1

    def pivot(self, p, enter, alpha):
        m = self.m
        piv = alpha[p]
        prow = [v / piv for v in self.Binv[p]]
        self.Binv[p] = prow
        self.xb[p] = self.xb[p] / piv
        for i in range(m):
            if i != p and alpha[i]:
                f = alpha[i]
                row = self.Binv[i]
                self.Binv[i] = [row[r] - f * prow[r] if prow[r] else row[r] for r in range(m)]
                self.xb[i] -= f * self.xb[p]
        self.basis[p] = enter

    def row_of_binv_times(self, i, col):
        row = self.Binv[i]
        s = _Q(0)
        for r, a in col.items():
            if row[r]:
                s += row[r] * a
        return s


def solve_exact(lp: LinearProgram, max_nonzeros: int = DEFAULT_EXACT_NNZ_CAP,
                max_iter: int = 2_000_000) -> SolveResult:
    """Exact optimum of ``lp`` in rational arithmetic.

    Float coefficients are converted exactly (every double is a dyadic
    rational). The returned objective and primal vector are Fractions.
    """
    A = sp.csc_matrix(lp.A)
    free = np.ones(lp.num_vars, dtype=bool) if lp.fixed_zero is None else ~lp.fixed_zero
    keep = np.nonzero(free)[0]
    nnz = int(sum(A.indptr[j + 1] - A.indptr[j] for j in keep))
    if nnz > max_nonzeros:
        raise CapExceeded(f"{nnz} nonzeros exceeds cap {max_nonzeros}", nonzeros=nnz)

    m = lp.num_rows
    rhs = [_to_q(v) for v in lp.rhs]
    flip = [v < 0 for v in rhs]
    cols = []
    for j in keep:
        lo, hi = A.indptr[j], A.indptr[j + 1]
        col = {}
        for r, v in zip(A.indices[lo:hi].tolist(), A.data[lo:hi].tolist()):
            if v:
                q = _to_q(v)
                col[r] = -q if flip[r] else q
        cols.append(col)
    n_struct = len(cols)
    basis = [-1] * m
    for r, rel in enumerate(lp.relations):
        if rel == "<=":
            cols.append({r: _Q(-1) if flip[r] else _Q(1)})
            if not flip[r]:
                basis[r] = len(cols) - 1
    n_real = len(cols)
    artificial = []
    for r in range(m):
        if basis[r] < 0:
            cols.append({r: _Q(1)})
            basis[r] = len(cols) - 1
            artificial.append(len(cols) - 1)
    b = [-v if f else v for v, f in zip(rhs, flip)]

    sign = -1 if lp.sense == "max" else 1
    solver = _Revised(cols, b, basis, max_iter)
    if artificial:
        cost1 = [_Q(0)] * n_real + [_Q(1)] * len(artificial)
        status = solver.run(cost1, [True] * len(cols))
        if status == ITER_LIMIT:
            return SolveResult(ITER_LIMIT, None, [], solver.iterations)
        infeas = sum((solver.xb[i] for i, j in enumerate(solver.basis) if j >= n_real), _Q(0))
        if infeas > 0:
            return SolveResult(INFEASIBLE, None, [], solver.iterations)
        # drive zero-level artificials out of the basis where possible
        for i in range(m):
            if solver.basis[i] < n_real:
                continue
            in_basis = set(solver.basis)
            for j in range(n_real):
                if j in in_basis:
                    continue
                a = solver.row_of_binv_times(i, cols[j])
                if a:
                    alpha = [solver.row_of_binv_times(r, cols[j]) for r in range(m)]
                    solver.pivot(i, j, alpha)
                    break
            # otherwise the row is redundant and the artificial stays at 0
    cost = [_to_q(sign * float(v)) for v in np.asarray(lp.c)[keep]] + [_Q(0)] * (len(cols) - n_struct)
    allowed = [True] * n_real + [False] * (len(cols) - n_real)
    status = solver.run(cost, allowed)
    if status != OPTIMAL:
        return SolveResult(status, None, [], solver.iterations)

    x_free = [Fraction(0)] * n_struct
    for i, j in enumerate(solver.basis):
        if j < n_struct:
            x_free[j] = _to_fraction(solver.xb[i])
    x = [Fraction(0)] * lp.num_vars
    for pos, j in enumerate(keep):
        x[j] = x_free[pos]
    c_exact = [Fraction(float(v)) for v in lp.c]
    obj = sum((cj * xj for cj, xj in zip(c_exact, x) if cj and xj), Fraction(0)) + Fraction(float(lp.offset))
    row_v, bound_v = _exact_residuals(lp, x)
    return SolveResult(OPTIMAL, obj, x, solver.iterations, row_v, bound_v, {"exact": True})


def _exact_residuals(lp: LinearProgram, x) -> tuple[float, float]:
    worst = Fraction(0)
    for coefs, rel, rhs in lp.rows():
        lhs = sum((Fraction(v) * x[j] for j, v in coefs.items() if x[j]), Fraction(0))
        d = lhs - Fraction(rhs)
        worst = max(worst, abs(d) if rel == "=" else max(d, Fraction(0)))
    bound = max((-v for v in x if v < 0), default=Fraction(0))
    return float(worst), float(bound)
