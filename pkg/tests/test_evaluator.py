import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from helpers import THETA, problem, reference_table
from qdisc.core import helstrom_angle, one_copy_decision_error, single_copy_error
from qdisc.evaluator import (
    RESULTS_HEADER,
    coalesced_cost,
    collective_cost,
    collective_operator,
    evaluate_schemes,
    exact_cost,
    outcome_tree,
    scheme_cost,
    symmetric_eigenvalues,
    write_results_csv,
)
from qdisc.schemes import (
    LOCAL_SCHEMES,
    SchemeKind,
    SchemeSpec,
    cost_fully_biased_pure,
    cost_local_pure,
    cost_unbiased_closed,
)

FIXED = (SchemeKind.UNBIASED, SchemeKind.FULLY_BIASED)


def policy(kind, prob, table=None):
    """angle_fn for the brute-force oracle, written from the scheme definitions."""
    if kind is SchemeKind.UNBIASED:
        return lambda n, p: helstrom_angle(prob, prob.q_plus)
    if kind is SchemeKind.FULLY_BIASED:
        return lambda n, p: prob.theta
    if kind is SchemeKind.LOCALLY_OPTIMAL:
        return lambda n, p: helstrom_angle(prob, p)
    return lambda n, p: float(np.interp(p, table.grid, table.angles[n - 1]))


class TestExactCost:
    def test_local_two_copies(self):
        assert exact_cost(problem(), SchemeSpec(SchemeKind.LOCALLY_OPTIMAL, 2)).cost == pytest.approx(
            cost_local_pure(problem(), 2), abs=1e-14)

    def test_fully_biased_two_copies(self):
        assert exact_cost(problem(), SchemeSpec(SchemeKind.FULLY_BIASED, 2)).cost == pytest.approx(0.28125, abs=1e-15)

    @pytest.mark.parametrize("nu", [0.0, 0.2])
    def test_one_copy(self, nu):
        prob = problem(nu=nu, q_plus=0.6)
        for kind in (SchemeKind.UNBIASED, SchemeKind.LOCALLY_OPTIMAL):
            assert exact_cost(prob, SchemeSpec(kind, 1)).cost == pytest.approx(single_copy_error(prob, 0.6), abs=1e-14)
        assert exact_cost(prob, SchemeSpec(SchemeKind.FULLY_BIASED, 1)).cost == pytest.approx(
            one_copy_decision_error(prob, 0.6, THETA), abs=1e-15)

    @pytest.mark.parametrize("n", range(1, 11))
    def test_noiseless_closed_forms(self, n):
        prob = problem()
        assert exact_cost(prob, SchemeSpec(SchemeKind.LOCALLY_OPTIMAL, n)).cost == pytest.approx(
            cost_local_pure(prob, n), abs=1e-10)
        assert exact_cost(prob, SchemeSpec(SchemeKind.UNBIASED, n)).cost == pytest.approx(
            cost_unbiased_closed(prob, n), abs=1e-10)
        assert exact_cost(prob, SchemeSpec(SchemeKind.FULLY_BIASED, n)).cost == pytest.approx(
            cost_fully_biased_pure(prob, n), abs=1e-10)

    @pytest.mark.parametrize("kind", list(SchemeKind))
    @pytest.mark.parametrize("nu", [0.1, 0.6])
    def test_matches_brute_force(self, kind, nu):
        prob = problem(nu=nu, q_plus=0.65)
        n = 7
        table = reference_table(nu).truncated(n) if kind is SchemeKind.GLOBALLY_OPTIMAL else None
        spec = SchemeSpec.globally_optimal(table) if table is not None else SchemeSpec(kind, n)
        expected = oracles.brute_force_cost(THETA, nu, 0.65, n, policy(kind, prob, table))
        assert exact_cost(prob, spec).cost == pytest.approx(expected, abs=1e-12)

    def test_leaf_count_bound(self):
        result = exact_cost(problem(nu=0.1), SchemeSpec(SchemeKind.LOCALLY_OPTIMAL, 10))
        assert 1 <= result.leaf_count <= 2**10

    def test_horizon_mismatch(self):
        with pytest.raises(ValueError):
            exact_cost(problem(), SchemeSpec(SchemeKind.UNBIASED, 3), horizon=4)


class TestOutcomeTree:
    @pytest.mark.parametrize("kind", [SchemeKind.UNBIASED, SchemeKind.LOCALLY_OPTIMAL, SchemeKind.GLOBALLY_OPTIMAL])
    def test_leaf_weights_sum(self, kind):
        prob = problem(nu=0.3, q_plus=0.7)
        spec = (SchemeSpec.globally_optimal(reference_table(0.3)) if kind is SchemeKind.GLOBALLY_OPTIMAL
                else SchemeSpec(kind, 10))
        for depth, w_plus, w_minus in outcome_tree(prob, spec):
            assert math.fsum(w_plus) == pytest.approx(0.7, abs=1e-12)
            assert math.fsum(w_minus) == pytest.approx(0.3, abs=1e-12)
            assert w_plus.size <= 2**depth

    def test_relabeling_symmetry(self):
        # exchanging the hypotheses maps the problem onto itself at q+ = 1/2
        prob = problem(nu=0.2)
        spec = SchemeSpec(SchemeKind.LOCALLY_OPTIMAL, 6)
        *_, (depth, w_plus, w_minus) = outcome_tree(prob, spec)
        np.testing.assert_allclose(np.sort(w_plus), np.sort(w_minus), atol=1e-15)


class TestCoalescedCost:
    def test_matches_tree(self):
        prob = problem(nu=0.1)
        for kind in FIXED:
            spec = SchemeSpec(kind, 10)
            fast = coalesced_cost(prob, spec)
            assert fast.cost == pytest.approx(exact_cost(prob, spec).cost, abs=1e-12)
            assert fast.leaf_count == 11

    def test_even_copies_stagnate(self):
        prob = problem()
        assert coalesced_cost(prob, SchemeSpec(SchemeKind.UNBIASED, 2)).cost == pytest.approx(
            coalesced_cost(prob, SchemeSpec(SchemeKind.UNBIASED, 1)).cost, abs=1e-15)

    def test_fully_biased_three(self):
        assert coalesced_cost(problem(), SchemeSpec(SchemeKind.FULLY_BIASED, 3)).cost == pytest.approx(
            0.5 * 0.75**3, abs=1e-15)

    def test_adaptive_rejected(self):
        with pytest.raises(ValueError):
            coalesced_cost(problem(), SchemeSpec(SchemeKind.LOCALLY_OPTIMAL, 3))

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.05, 0.7), st.floats(0.5, 1.0), st.floats(0.0, 1.0), st.integers(1, 9))
    def test_matches_tree_everywhere(self, theta, q_plus, nu, n):
        from qdisc.core import DiscriminationProblem
        prob = DiscriminationProblem(theta, q_plus, nu)
        for kind in FIXED:
            spec = SchemeSpec(kind, n)
            assert coalesced_cost(prob, spec).cost == pytest.approx(exact_cost(prob, spec).cost, abs=1e-12)


class TestCollective:
    def test_noiseless_closed_form(self):
        assert collective_cost(problem(), 10).cost == pytest.approx(0.0142824, abs=1e-7)

    def test_single_copy_noisy(self):
        assert collective_cost(problem(nu=0.1), 1).cost == pytest.approx(0.275, abs=1e-12)

    @pytest.mark.parametrize("n", [1, 4, 9])
    def test_fully_depolarized(self, n):
        assert collective_cost(problem(nu=1.0), n).cost == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("nu", [0.0, 0.1, 0.6])
    @pytest.mark.parametrize("n", [1, 3, 6])
    def test_matches_complex_oracle(self, nu, n):
        prob = problem(nu=nu, q_plus=0.6)
        expected = oracles.collective_error(THETA, nu, 0.6, n)
        assert collective_cost(prob, n).cost == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_jacobi_solver(self, n):
        prob = problem(nu=0.3)
        assert collective_cost(prob, n, solver="jacobi").cost == pytest.approx(
            collective_cost(prob, n).cost, abs=1e-12)

    def test_trace(self):
        prob = problem(nu=0.4, q_plus=0.8)
        assert np.trace(collective_operator(prob, 5)) == pytest.approx(0.6, abs=1e-13)

    @pytest.mark.parametrize("n", [0, 13])
    def test_range(self, n):
        with pytest.raises(ValueError):
            collective_cost(problem(nu=0.1), n)

    def test_unknown_solver(self):
        with pytest.raises(ValueError):
            collective_cost(problem(nu=0.1), 2, solver="qr")


class TestJacobi:
    def test_identity(self, backend):
        np.testing.assert_allclose(symmetric_eigenvalues(np.eye(4), backend), [1, 1, 1, 1], atol=1e-15)

    def test_diagonal(self, backend):
        np.testing.assert_allclose(symmetric_eigenvalues(np.diag([3.0, -1.0]), backend), [-1.0, 3.0], atol=1e-15)

    def test_helstrom_operator(self, backend):
        prob = problem(nu=0.1)
        eig = symmetric_eigenvalues(collective_operator(prob, 1), backend)
        np.testing.assert_allclose(eig, [-0.225, 0.225], atol=1e-14)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
    def test_two_by_two_closed_form(self, a, b, d):
        m = np.array([[a, b], [b, d]])
        mean, radius = 0.5 * (a + d), math.hypot(0.5 * (a - d), b)
        np.testing.assert_allclose(symmetric_eigenvalues(m), [mean - radius, mean + radius], atol=1e-12)

    @pytest.mark.parametrize("size", [3, 8, 17])
    def test_against_lapack(self, size, backend):
        rng = np.random.default_rng(size)
        m = rng.normal(size=(size, size))
        m = m + m.T
        np.testing.assert_allclose(symmetric_eigenvalues(m, backend), np.linalg.eigvalsh(m), atol=1e-10)

    def test_permutation_similarity(self):
        rng = np.random.default_rng(7)
        m = rng.normal(size=(9, 9))
        m = m + m.T
        perm = rng.permutation(9)
        np.testing.assert_allclose(symmetric_eigenvalues(m[np.ix_(perm, perm)]), symmetric_eigenvalues(m), atol=1e-12)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            symmetric_eigenvalues(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            symmetric_eigenvalues(np.ones((2, 3)))


class TestEvaluateSchemes:
    def test_rows_and_csv(self):
        rows = evaluate_schemes(problem(), [1, 2], ("unbiased", "collective"))
        assert [(r.scheme, r.N) for r in rows] == [("unbiased", 1), ("unbiased", 2), ("collective", 1), ("collective", 2)]
        buf = io.StringIO()
        write_results_csv(rows, buf)
        lines = buf.getvalue().splitlines()
        assert tuple(lines[0].split(",")) == RESULTS_HEADER
        fields = lines[1].split(",")
        assert fields[:5] == ["unbiased", "1", "15", "0.5", "0"]
        assert float(fields[5]) == pytest.approx(0.25, abs=1e-15)

    def test_global_uses_supplied_table(self):
        table = reference_table(0.1)
        rows = evaluate_schemes(problem(nu=0.1), range(1, 11), ("globally-optimal",), table=table)
        for row in rows:
            spec = SchemeSpec.globally_optimal(table.truncated(row.N))
            assert row.cost == exact_cost(problem(nu=0.1), spec).cost

    def test_scheme_cost_routes(self):
        prob = problem(nu=0.1)
        for name in LOCAL_SCHEMES[:3]:
            spec = SchemeSpec(SchemeKind(name), 5)
            assert scheme_cost(prob, spec).cost == pytest.approx(exact_cost(prob, spec).cost, abs=1e-12)
