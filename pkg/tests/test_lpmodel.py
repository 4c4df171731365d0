import io
import math

import highspy
import numpy as np
import pytest
from hypothesis import given, strategies as st

from cbdmeasures.errors import TooLarge
from cbdmeasures.generators import make_cyclic, make_hypercyclic, parity_system, product_system, random_system
from cbdmeasures.lpmodel import (connection_patterns, constraints_A, constraints_B, equality_indicator,
                                 index_outcomes, lp_cnt1, lp_cnt2_level, lp_cnt3, lp_cntf_full, lp_cntf_reduced,
                                 pair_targets, write_lp)
from cbdmeasures.solver import solve, solve_exact

U4 = [0.25] * 4


def product_coupling(sys, idx):
    """Independent bunches: satisfies (A) by construction."""
    x = np.ones(idx.num_outcomes)
    for c in sys.contexts:
        x *= np.asarray(c.pmf)[idx.atoms(c.id)]
    return x


class TestIndexer:
    def test_sizes(self):
        idx = index_outcomes(make_cyclic(2, [U4] * 2))
        assert (idx.N, idx.num_outcomes) == (4, 16)
        idx = index_outcomes(make_hypercyclic((3, 4), [[1 / 8] * 8] * 4))
        assert (idx.N, idx.num_outcomes) == (12, 4096)

    def test_slot_order(self):
        idx = index_outcomes(make_hypercyclic((3, 3), [[1 / 8] * 8] * 3))
        # c2 measures (q2, q3, q1): q1 is its last slot
        assert idx.slots[0] == ("c1", "q1") and idx.slot_of("q1", "c2") == 5
        assert index_outcomes(make_cyclic(1, [[0.5, 0.5]])).N == 1

    def test_bits_three_slots(self):
        from cbdmeasures.system import ContextSpec, System
        sys = System(("a", "b", "c"), (ContextSpec("c1", ("a", "b", "c"), tuple([1 / 8] * 8)),))
        idx = index_outcomes(sys)
        assert [idx.bit(5, s) for s in range(3)] == [1, 0, 1]
        assert idx.atoms("c1").tolist() == list(range(8))
        assert idx.atoms("c1", (2, 0)).tolist() == [0, 2, 0, 2, 1, 3, 1, 3]

    def test_cap(self):
        sys = make_hypercyclic((3, 5), [[1 / 8] * 8] * 5)
        with pytest.raises(TooLarge) as err:
            index_outcomes(sys, max_slots=12)
        assert err.value.required == 15
        assert index_outcomes(sys).N == 15

    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv("CBD_MAX_SLOTS", "8")
        with pytest.raises(TooLarge):
            index_outcomes(make_hypercyclic((3, 3), [[1 / 8] * 8] * 3))


class TestConstraintRows:
    def test_A_counts_and_groups(self):
        for sys, rows in [(make_cyclic(2, [U4] * 2), 8), (make_hypercyclic((3, 3), [[1 / 8] * 8] * 3), 24)]:
            idx = index_outcomes(sys)
            blk = constraints_A(sys, idx)
            assert len(blk) == rows
            start = 0
            for c in sys.contexts:
                size = 2 ** c.size
                np.testing.assert_array_equal(blk.matrix[start:start + size].sum(axis=0).A1, 1)
                assert math.fsum(blk.rhs[start:start + size]) == pytest.approx(1)
                start += size

    def test_B(self):
        sys = make_hypercyclic((3, 4), [[1 / 8] * 8] * 4)
        blk = constraints_B(sys, index_outcomes(sys))
        assert len(blk) == 12 and set(blk.rhs) == {1.0}
        # c1 = (q1, q2) with Pr(q1=1) = .5; c2 = (q2, q1) with Pr(q1=1) = .6
        sys = make_cyclic(2, [U4, [0.2, 0.3, 0.2, 0.3]])
        assert pair_targets(sys) == pytest.approx([0.9, 1.0])
        blk = constraints_B(sys, index_outcomes(sys), "one")
        assert blk.rhs.tolist() == [1.0, 1.0]

    @pytest.mark.parametrize("k", [1, 2, 3])
    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_closed_form_counts(self, k, n):
        if n * k > 15:
            pytest.skip("outcome space too large for a quick count")
        sys = make_hypercyclic((k, n), [[2.0 ** -k] * 2 ** k] * n)
        N, pairs, a_rows = 2 ** (n * k), n * math.comb(k, 2), n * 2 ** k
        lp = lp_cnt1(sys)
        assert (lp.num_vars, lp.num_rows) == (N, a_rows)
        for m in range(1, k + 1):
            t = n * math.comb(k, m) * 2 ** m
            lp = lp_cnt2_level(sys, m)
            assert (lp.num_vars, lp.num_rows) == (N + t, pairs + 1 + 2 * t)
        lp = lp_cnt3(sys)
        assert (lp.num_vars, lp.num_rows) == (2 * N, a_rows + pairs)
        lp = lp_cntf_reduced(sys)
        assert (lp.num_vars, lp.num_rows) == (2 ** n, a_rows)


class TestCnt1:
    @given(st.integers(0, 2 ** 32), st.sampled_from([(2, 3), (2, 4), (3, 3)]))
    def test_frechet_deficits_nonnegative(self, seed, shape):
        sys = random_system(shape, seed)
        idx = index_outcomes(sys)
        x = product_coupling(sys, idx)
        blk = constraints_A(sys, idx)
        np.testing.assert_allclose(blk.matrix @ x, blk.rhs, atol=1e-12)
        for (_, m), target in zip(equality_indicator(sys, idx), pair_targets(sys)):
            assert target - x[m].sum() >= -1e-9
        assert lp_cnt1(sys, idx).objective_value(x) >= -1e-9

    def test_examples(self, corr_anti):
        assert solve(lp_cnt1(product_system((3, 4), 0.3))).objective == pytest.approx(0, abs=1e-9)
        assert solve_exact(lp_cnt1(corr_anti)).objective == 1
        assert solve_exact(lp_cnt1(parity_system((3, 3), [1 / 8] * 3))).objective == 0


class TestCnt2:
    def test_level_one_zero(self):
        for sys in (random_system((3, 3), 4), make_cyclic(3, [[0.1, 0.2, 0.3, 0.4]] * 3)):
            assert solve(lp_cnt2_level(sys, 1)).objective == pytest.approx(0, abs=1e-9)

    def test_parity(self):
        sys = parity_system((3, 4), [1 / 8, 1 / 8, 1 / 8, -1 / 8])
        assert solve(lp_cnt2_level(sys, 2)).objective == pytest.approx(0, abs=1e-9)
        assert solve_exact(lp_cnt2_level(sys, 3)).objective == 1.5

    def test_normalization_row_present(self):
        lp = lp_cnt2_level(make_cyclic(2, [U4] * 2), 2)
        assert "norm" in lp.row_labels


class TestCnt3:
    def test_noncontextual_is_one(self):
        lp = lp_cnt3(product_system((2, 3), [0.2, 0.7, 0.5]))
        assert solve(lp).objective == pytest.approx(1, abs=1e-9)

    def test_corr_anti(self, corr_anti):
        assert solve_exact(lp_cnt3(corr_anti)).objective == 2

    def test_complementary_slackness(self, corr_anti):
        res = solve(lp_cnt3(corr_anti))
        n = res.x.size // 2
        u, v = res.x[:n], res.x[n:]
        assert np.minimum(u, v).max() <= 1e-9
        assert res.objective == pytest.approx(np.abs(u - v).sum(), abs=1e-9)


class TestCntf:
    def test_product_full_mass(self):
        assert solve(lp_cntf_reduced(product_system((3, 4), 0.4))).objective == pytest.approx(1, abs=1e-9)
        assert solve(lp_cntf_full(product_system((2, 3), 0.4))).objective == pytest.approx(1, abs=1e-9)

    def test_pr_box_zero_mass(self, pr_box):
        assert solve_exact(lp_cntf_reduced(pr_box)).objective == 0

    def test_even_parity_r33(self):
        assert solve_exact(lp_cntf_reduced(parity_system((3, 3), [1 / 8] * 3))).objective == 1

    @given(st.integers(0, 2 ** 32))
    def test_cyclic2_full_equals_reduced(self, seed):
        sys = random_system((2, 2), seed)
        a, b = solve(lp_cntf_reduced(sys)).objective, solve(lp_cntf_full(sys)).objective
        assert a == pytest.approx(b, abs=1e-10)

    def test_r33_seed7_full_equals_reduced(self):
        sys = random_system((3, 3), 7)
        assert solve(lp_cntf_reduced(sys)).objective == pytest.approx(solve(lp_cntf_full(sys)).objective, abs=1e-10)

    def test_patterns_consistent(self):
        cp = connection_patterns(parity_system((3, 4), [0.1] * 4), "q2")
        assert cp.patterns == ((0, 0, 0), (1, 1, 1)) and cp.masses is None

    def test_patterns_comonotone(self):
        # Pr(q1=1) is .5 in c1 and .2 in c2
        sys = make_cyclic(2, [U4, [0.4, 0.1, 0.4, 0.1]])
        cp = connection_patterns(sys, "q1")
        assert cp.members == ("c1", "c2")
        assert cp.patterns == ((0, 0), (1, 0), (1, 1))
        assert cp.masses == pytest.approx((0.5, 0.3, 0.2))

    def test_consistent_matches_plain_global_assignments(self):
        """For consistent connections the reduced LP is exactly the global-assignment LP."""
        sys = parity_system((3, 4), [0.1, -0.1, 0.05, 0.0])
        lp = lp_cntf_reduced(sys)
        assert lp.num_vars == 2 ** 4
        assert all(rel == "<=" for rel in lp.relations) and lp.num_rows == 4 * 8


class TestFeasibility:
    @given(st.integers(0, 2 ** 32), st.sampled_from([(2, 2), (2, 3), (3, 3)]))
    def test_always_feasible_and_bounded(self, seed, shape):
        sys = random_system(shape, seed)
        for lp in [lp_cnt1(sys), lp_cnt3(sys), lp_cntf_reduced(sys)] + [
                lp_cnt2_level(sys, m) for m in range(1, shape[0] + 1)]:
            res = solve(lp)
            assert res.status == "OPTIMAL", lp.name
            assert res.objective >= -1e-9


class TestDump:
    def test_highs_reads_dump(self, tmp_path, pr_box):
        for lp in (lp_cnt1(pr_box), lp_cnt2_level(pr_box, 2), lp_cnt3(pr_box), lp_cntf_full(pr_box)):
            buf = io.StringIO()
            write_lp(lp, buf)
            path = tmp_path / f"{lp.name}.lp"
            path.write_text(buf.getvalue())
            h = highspy.Highs()
            h.setOptionValue("output_flag", False)
            assert h.readModel(str(path)) == highspy.HighsStatus.kOk
            h.run()
            assert h.getInfo().objective_function_value == pytest.approx(solve(lp).objective, abs=1e-9)

    def test_seventeen_digits(self):
        lp = lp_cnt1(make_cyclic(2, [[0.1, 0.2, 0.3, 0.4]] * 2))
        buf = io.StringIO()
        write_lp(lp, buf)
        assert "0.10000000000000001" in buf.getvalue()
