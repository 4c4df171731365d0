from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from cbdmeasures.errors import CapExceeded
from cbdmeasures.generators import make_cyclic, parity_system, product_system, random_system
from cbdmeasures.lpmodel import LinearProgram, lp_cnt1, lp_cnt2_level, lp_cnt3, lp_cntf_reduced
from cbdmeasures.solver import (INFEASIBLE, ITER_LIMIT, OPTIMAL, UNBOUNDED, residuals, solve, solve_exact)


def make_lp(A, rel, rhs, c, sense="min", **kw):
    return LinearProgram(sp.csr_matrix(np.asarray(A, dtype=float)), tuple(rel), np.asarray(rhs, dtype=float),
                         np.asarray(c, dtype=float), sense, **kw)


TRIVIAL = [
    (make_lp([[1]], "=", [1], [1]), 1),
    (make_lp([[1, 0], [0, 1]], ["<=", "<="], [0.5, 0.5], [1, 1], "max"), 1),
    (make_lp([[1, 1]], ["<="], [2], [-1, -2], offset=3.0), -1),
]


@pytest.mark.parametrize("lp, expected", TRIVIAL)
def test_trivial(lp, expected):
    res = solve(lp)
    assert res.status == OPTIMAL and res.objective == pytest.approx(expected, abs=1e-12)
    assert len(res.x) == lp.num_vars
    ex = solve_exact(lp)
    assert ex.status == OPTIMAL and ex.objective == Fraction(expected)


def test_infeasible_and_unbounded_agree():
    infeasible = make_lp([[1, 1], [1, 1]], ["=", "="], [1, 2], [1, 1])
    unbounded = make_lp([[1, -1]], ["="], [0], [1, 1], "max")
    for lp, status in ((infeasible, INFEASIBLE), (unbounded, UNBOUNDED)):
        assert solve(lp).status == status
        assert solve_exact(lp).status == status


def test_negative_rhs_and_fixings():
    lp = make_lp([[-1, -1], [1, 0]], ["=", "<="], [-1, 0.25], [1, 2], fixed_zero=np.array([False, False]))
    assert solve_exact(lp).objective == Fraction(7, 4)
    lp = make_lp([[1, 1]], ["="], [1], [1, 2], fixed_zero=np.array([True, False]))
    assert solve(lp).objective == pytest.approx(2) and solve_exact(lp).objective == 2


def test_iteration_limit():
    lp = lp_cnt3(parity_system((3, 3), [0.1, -0.1, 0.05]))
    assert solve(lp, max_iter=1).status == ITER_LIMIT
    assert solve_exact(lp, max_iter=1).status == ITER_LIMIT


def test_iteration_limit_env(monkeypatch):
    monkeypatch.setenv("CBD_MAX_ITER", "1")
    assert solve(lp_cnt3(parity_system((3, 3), [0.1, -0.1, 0.05]))).status == ITER_LIMIT


def test_exact_cap():
    with pytest.raises(CapExceeded):
        solve_exact(lp_cnt1(parity_system((3, 4), [0.0] * 4)), max_nonzeros=100)


def test_cnt1_product_zero():
    res = solve(lp_cnt1(product_system((3, 4), 0.5)))
    assert res.objective == pytest.approx(0, abs=1e-9)
    assert max(res.max_row_violation, res.max_bound_violation) <= 1e-9


def test_oracle_examples(corr_anti, pr_box):
    assert solve_exact(lp_cnt1(corr_anti)).objective == 1
    assert solve_exact(lp_cntf_reduced(pr_box)).objective == 0
    assert solve_exact(lp_cnt3(product_system((2, 3), [0.25, 0.5, 0.75]))).objective == 1


def test_exact_primal_feasible(pr_box):
    lp = lp_cnt3(pr_box)
    res = solve_exact(lp)
    assert all(isinstance(v, Fraction) for v in res.x)
    assert res.max_row_violation == 0 and res.max_bound_violation == 0
    assert sum(res.x) == res.objective


def test_deterministic():
    lp = lp_cnt2_level(random_system((3, 3), 5), 3)
    a, b = solve(lp), solve(lp)
    assert a.objective == b.objective and np.array_equal(a.x, b.x) and a.iterations == b.iterations


def test_warm_start_same_optimum():
    ref = solve(lp_cnt3(parity_system((3, 3), [0.0] * 3)), keep_basis=True).info["basis"]
    lp = lp_cnt3(parity_system((3, 3), [0.1, -0.1, 0.05]))
    cold, warm = solve(lp), solve(lp, basis=ref)
    assert warm.objective == pytest.approx(cold.objective, abs=1e-12)
    assert warm.iterations <= cold.iterations
    # a basis of the wrong size is ignored
    assert solve(lp_cnt1(parity_system((3, 3), [0.1] * 3)), basis=ref).status == OPTIMAL


@given(st.integers(0, 2 ** 32), st.integers(0, 20))
def test_row_scaling_invariance(seed, row):
    lp = lp_cnt1(random_system((2, 3), seed))
    row %= lp.num_rows
    D = np.ones(lp.num_rows)
    D[row] = 2.0
    scaled = LinearProgram(sp.diags(D) @ lp.A, lp.relations, lp.rhs * D, lp.c, lp.sense, lp.offset)
    assert solve(scaled).objective == pytest.approx(solve(lp).objective, abs=1e-9)


def test_residuals():
    lp = make_lp([[1, 1], [1, 0]], ["=", "<="], [1, 0.3], [1, 1])
    assert residuals(lp, [0.5, 0.5]) == (pytest.approx(0.2), 0.0)
    assert residuals(lp, [1.2, -0.2]) == (pytest.approx(0.9), pytest.approx(0.2))


@pytest.mark.parametrize("seed", range(3))
def test_float_matches_exact_small(seed):
    sys = random_system((2, 3), seed)
    for lp in (lp_cnt1(sys), lp_cnt2_level(sys, 2), lp_cnt3(sys), lp_cntf_reduced(sys)):
        f, e = solve(lp), solve_exact(lp)
        assert f.status == e.status == OPTIMAL
        assert abs(f.objective - float(e.objective)) <= 1e-7, lp.name


def test_pr_box_cnt3_exact(pr_box):
    assert solve_exact(lp_cnt3(pr_box)).objective == Fraction(4, 3)
    assert solve_exact(lp_cnt2_level(make_cyclic(4, [[0.5, 0, 0, 0.5]] * 3 + [[0, 0.5, 0.5, 0]]), 2)).objective == 2
