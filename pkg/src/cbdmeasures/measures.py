"""The four contextuality measures, the CNT2 level hierarchy, and the
closed-form criterion for cyclic systems."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import lpmodel
from .errors import DomainError, NotCyclic, SolverFailure
from .lpmodel import LinearProgram, OutcomeIndexer, index_outcomes
from .solver import DEFAULT_TOL, OPTIMAL, SolveResult, solve, solve_exact
from .system import System, variable_prob

log = logging.getLogger(__name__)

#: Positivity threshold for calling a measure value nonzero.
POSITIVITY_TOL = 1e-7

MEASURES = ("cnt1", "cnt2", "cnt3", "cntf")


@dataclass(frozen=True)
class MeasureReport:
    cnt1: float
    cnt2: float
    cnt3: float
    cntf: float
    cnt2_by_level: dict
    level: int | None
    tol: float
    diagnostics: tuple[str, ...] = ()
    solver: dict = field(default_factory=dict, compare=False)

    @property
    def total_variation(self) -> float:
        return self.cnt3 + 1

    @property
    def mass(self) -> float:
        return 1 - self.cntf

    @property
    def contextual(self) -> bool:
        return max(self.cnt1, self.cnt2, self.cnt3, self.cntf) > self.tol

    @property
    def consistent(self) -> bool:
        """All four measures agree on whether the system is contextual."""
        return len({v > self.tol for v in (self.cnt1, self.cnt2, self.cnt3, self.cntf)}) == 1

    def value(self, name: str) -> float:
        if name.startswith("cnt2_l"):
            return self.cnt2_by_level[int(name[6:])]
        return getattr(self, name)

    def as_row(self) -> dict:
        """Flat dict in the CSV column vocabulary."""
        row = {"cnt1": self.cnt1, "cnt2": self.cnt2}
        row.update({f"cnt2_l{m}": v for m, v in sorted(self.cnt2_by_level.items())})
        row.update(level=self.level, cnt3=self.cnt3, cntf=self.cntf, contextual=self.contextual)
        return row


Solver = Callable[[LinearProgram], SolveResult]


def _run(lp: LinearProgram, solver: Solver | None, exact: bool) -> SolveResult:
    res = solve_exact(lp) if exact else (solver or solve)(lp)
    if res.status != OPTIMAL:
        # every measure LP is feasible and bounded on a valid system
        raise SolverFailure(f"{lp.name}: status {res.status}", lp=lp.name, status=res.status,
                            iterations=res.iterations)
    return res


def _clamp(value, tol: float, name: str, upper=None):
    if isinstance(value, Fraction):
        return value
    if value < -tol:
        raise SolverFailure(f"{name} = {value!r} is below -{tol}", value=value)
    value = max(value, 0.0)
    if upper is not None and value > upper:
        if value > upper + tol:
            raise SolverFailure(f"{name} = {value!r} exceeds {upper}", value=value)
        value = float(upper)
    return value


def cnt1(sys: System, *, tol: float = POSITIVITY_TOL, max_slots: int | None = None,
         solver: Solver | None = None, exact: bool = False, idx: OutcomeIndexer | None = None):
    sys = sys.check()
    res = _run(lpmodel.lp_cnt1(sys, idx, max_slots), solver, exact)
    return _clamp(res.objective, tol, "cnt1")


def cnt2_at_level(sys: System, m: int, *, tol: float = POSITIVITY_TOL, max_slots: int | None = None,
                  solver: Solver | None = None, exact: bool = False, idx: OutcomeIndexer | None = None):
    sys = sys.check()
    if not (1 <= m <= sys.max_bunch_size):
        raise DomainError(f"level must be in 1..{sys.max_bunch_size}, got {m}")
    res = _run(lpmodel.lp_cnt2_level(sys, m, idx, max_slots), solver, exact)
    return _clamp(res.objective, tol, f"cnt2_l{m}")


def cnt2(sys: System, **kw):
    """CNT2: the level hierarchy at full bunch size."""
    return cnt2_at_level(sys, sys.check().max_bunch_size, **kw)


def cnt3(sys: System, *, tol: float = POSITIVITY_TOL, max_slots: int | None = None,
         solver: Solver | None = None, exact: bool = False, idx: OutcomeIndexer | None = None):
    sys = sys.check()
    res = _run(lpmodel.lp_cnt3(sys, idx, max_slots), solver, exact)
    return _clamp(res.objective - 1, tol, "cnt3")


def cntf(sys: System, *, tol: float = POSITIVITY_TOL, max_slots: int | None = None,
         solver: Solver | None = None, exact: bool = False, full: bool = False):
    sys = sys.check()
    lp = lpmodel.lp_cntf_full(sys, max_slots=max_slots) if full else lpmodel.lp_cntf_reduced(sys, max_slots)
    res = _run(lp, solver, exact)
    return _clamp(1 - res.objective, tol, "cntf", upper=1)


def contextual_level(sys: System, tol: float = POSITIVITY_TOL, **kw) -> int | None:
    """Smallest level m with CNT2^m > tol, or None for a noncontextual system."""
    sys = sys.check()
    for m in range(1, sys.max_bunch_size + 1):
        if cnt2_at_level(sys, m, tol=tol, **kw) > tol:
            return m
    return None


def all_measures(sys: System, *, tol: float = POSITIVITY_TOL, max_slots: int | None = None,
                 solver: Solver | None = None, exact: bool = False,
                 warm_start: dict | None = None, keep_bases: bool = False) -> MeasureReport:
    """Every measure and level of ``sys`` from one validation pass.

    ``warm_start`` maps LP names to :class:`~cbdmeasures.solver.Basis`
    objects (see :func:`reference_bases`) and only affects the default
    HiGHS path. Sweeps use it to start all systems of one shape from the
    same basis.
    """
    sys = sys.check()
    idx = index_outcomes(sys, max_slots)
    iters, bases = {}, {}
    if solver is None and not exact and (warm_start or keep_bases):
        def solver(lp):
            return solve(lp, basis=(warm_start or {}).get(lp.name), keep_basis=keep_bases)

    def run(lp):
        res = _run(lp, solver, exact)
        iters[lp.name] = res.iterations
        if "basis" in res.info:
            bases[lp.name] = res.info["basis"]
        return res.objective

    v1 = _clamp(run(lpmodel.lp_cnt1(sys, idx)), tol, "cnt1")
    levels = {}
    for m in range(1, sys.max_bunch_size + 1):
        levels[m] = _clamp(run(lpmodel.lp_cnt2_level(sys, m, idx)), tol, f"cnt2_l{m}")
    v3 = _clamp(run(lpmodel.lp_cnt3(sys, idx)) - 1, tol, "cnt3")
    vf = _clamp(1 - run(lpmodel.lp_cntf_reduced(sys, max_slots)), tol, "cntf", upper=1)
    level = next((m for m, v in levels.items() if v > tol), None)
    report = MeasureReport(v1, levels[sys.max_bunch_size], v3, vf, levels, level, tol,
                           solver={"iterations": iters, "solver_tol": DEFAULT_TOL, "bases": bases})
    if not report.consistent:
        msg = (f"CONSISTENCY: measures disagree on positivity for {sys.name!r}: "
               f"cnt1={v1!r} cnt2={report.cnt2!r} cnt3={v3!r} cntf={vf!r}")
        log.warning(msg)
        report = MeasureReport(v1, report.cnt2, v3, vf, levels, level, tol, (msg,), report.solver)
    return report


def reference_bases(sys: System, max_slots: int | None = None) -> dict:
    """Optimal bases of the outcome-space LPs of ``sys``.

    These LPs share their matrix and objective across all systems with the
    same incidence, so the bases are dual feasible starts for any of them.
    The CNTF reduction depends on the connections and is left out.
    """
    bases = all_measures(sys, max_slots=max_slots, keep_bases=True).solver["bases"]
    return {name: b for name, b in bases.items() if not name.startswith("cntf")}


def is_contextual(sys: System, tol: float = POSITIVITY_TOL, **kw) -> bool:
    return all_measures(sys, tol=tol, **kw).contextual


# -- cyclic systems --------------------------------------------------------

def _check_cyclic(sys: System) -> None:
    sys.check()
    n = len(sys.contents)
    if n < 2 or len(sys.contexts) != n:
        raise NotCyclic(f"need rank >= 2 with as many contexts as contents, got {n}/{len(sys.contexts)}")
    if any(c.size != 2 for c in sys.contexts):
        raise NotCyclic("every context of a cyclic system measures exactly two contents")
    if any(len(sys.contexts_of(q)) != 2 for q in sys.contents):
        raise NotCyclic("every content of a cyclic system is measured in exactly two contexts")
    # the content-context incidence graph must be a single cycle
    seen, frontier = {sys.contents[0]}, [sys.contents[0]]
    while frontier:
        q = frontier.pop()
        for c in sys.contexts_of(q):
            for q2 in c.contents:
                if q2 not in seen:
                    seen.add(q2)
                    frontier.append(q2)
    if len(seen) != n:
        raise NotCyclic("incidence graph is not connected")


def s_odd(x) -> float:
    """Max of sum(+-x_i) over sign vectors with an odd number of minus signs."""
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    if np.count_nonzero(x < 0) % 2 == 1:
        return float(a.sum())
    return float(a.sum() - 2 * a.min())


def cyclic_delta(sys: System) -> float:
    """Closed-form criterion for cyclic systems: contextual iff the result is > 0.

    With +-1 recoding, ``s_odd(<R_i R_j>) - (n - 2) - sum_q |<R_q^c> - <R_q^c'>|``.
    """
    _check_cyclic(sys)
    n = len(sys.contents)
    corr = []
    for c in sys.contexts:
        p00, p01, p10, p11 = c.pmf
        corr.append(p00 + p11 - p01 - p10)
    icc = 0.0
    for q in sys.contents:
        a, b = (2 * variable_prob(sys, q, c.id) - 1 for c in sys.contexts_of(q))
        icc += abs(a - b)
    return s_odd(corr) - (n - 2) - icc
