import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmot.cost import CostOracle
from mmot.errors import (
    CertificateInvalidError,
    InstanceTooLargeError,
    SolverFailureError,
)
from mmot.measure import DiscreteMeasure, TransportPlan, dirac, random_measure
from mmot.solver import (
    PotentialTuple,
    duality_gap,
    greedy_initial_plan,
    round_to_feasible,
    solve_entropic,
    solve_exact,
)

from oracles import (
    dense_marginal,
    linprog_value,
    min_over_assignment_pairs,
    min_over_permutations,
)

quadratic = CostOracle.builtin("quadratic")
product = CostOracle.builtin("product")


def uniform_line(xs):
    xs = np.asarray(xs, dtype=float)
    return DiscreteMeasure(xs[:, None], np.full(xs.size, 1 / xs.size))


class TestExact:
    def test_singleton(self):
        x, y = dirac([0.25]), dirac([0.75])
        plan, pots, cert = solve_exact(quadratic, [x, y])
        assert plan.entries() == {(0, 0): 1.0}
        assert cert.primal_value == pytest.approx(0.25, abs=1e-15)
        assert cert.gap == pytest.approx(0.0, abs=1e-15)
        assert pots.dual_value([x, y]) == pytest.approx(0.25, abs=1e-15)

    def test_identity_coupling(self):
        m = uniform_line([0.0, 0.3, 0.7, 1.0])
        plan, _, cert = solve_exact(quadratic, [m, m])
        assert plan.entries() == {(i, i): 0.25 for i in range(4)}
        assert cert.primal_value == pytest.approx(0.0, abs=1e-15)

    def test_five_atoms_sorted_matching(self):
        x = uniform_line([0.9, 0.1, 0.5, 0.3, 0.7])
        y = uniform_line([0.2, 0.8, 0.4, 1.0, 0.6])
        plan, _, cert = solve_exact(quadratic, [x, y])
        # monotone rearrangement: k-th smallest to k-th smallest
        expected = {(int(i), int(j)): 0.2
                    for i, j in zip(np.argsort(x.coords[:, 0]), np.argsort(y.coords[:, 0]))}
        assert plan.entries().keys() == expected.keys()
        C = quadratic.tensor([x, y])
        assert cert.primal_value == pytest.approx(min_over_permutations(C), abs=1e-12)

    def test_three_marginal_product_cost(self):
        ms = [random_measure(4, 1, seed=s) for s in (5, 6, 7)]
        _, _, cert = solve_exact(product, ms)
        C = product.tensor(ms)
        assert cert.primal_value == pytest.approx(min_over_assignment_pairs(C), abs=1e-12)

    @given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 6),
           st.sampled_from(["quadratic", "cosine", "zero"]))
    @settings(max_examples=30, deadline=None)
    def test_matches_independent_lp(self, seed, s1, s2, name):
        cost = CostOracle.builtin(name)
        ms = [random_measure(s1, 1, seed, "random"), random_measure(s2, 1, seed + 1, "random")]
        plan, pots, cert = solve_exact(cost, ms)
        C = cost.tensor(ms)
        assert cert.primal_value == pytest.approx(linprog_value(C, ms), abs=1e-9)
        assert abs(cert.gap) <= 1e-8 * (1 + abs(cert.primal_value))
        for a in range(2):
            np.testing.assert_allclose(dense_marginal(plan.todense(), a), ms[a].weights,
                                       atol=1e-12)

    def test_vertex_sparsity(self):
        ms = [random_measure(s, 1, seed=s, weights="random") for s in (6, 7, 5)]
        plan, _, cert = solve_exact(quadratic, ms)
        assert cert.vertex
        assert plan.nnz <= sum(m.size for m in ms) - len(ms) + 1

    def test_deterministic(self):
        ms = [random_measure(8, 2, seed=s, weights="random") for s in (1, 2)]
        p1, u1, c1 = solve_exact(quadratic, ms)
        p2, u2, c2 = solve_exact(quadratic, ms)
        assert p1 == p2
        assert c1 == c2
        assert u1.to_list() == u2.to_list()

    def test_degenerate_uniform_cost(self):
        ms = [uniform_line(np.linspace(0, 1, 6))] * 2
        _, _, cert = solve_exact(CostOracle.builtin("zero"), ms)
        assert cert.primal_value == 0.0 and abs(cert.gap) <= 1e-15

    def test_bland_path_agrees(self):
        ms = [uniform_line(np.linspace(0, 1, 7)), uniform_line(np.linspace(0, 1, 7) ** 2)]
        _, _, ref = solve_exact(quadratic, ms)
        _, _, cert = solve_exact(quadratic, ms, bland_after=0)
        assert cert.primal_value == pytest.approx(ref.primal_value, abs=1e-14)

    def test_iteration_limit(self):
        ms = [random_measure(6, 1, seed=1), random_measure(6, 1, seed=2)]
        with pytest.raises(SolverFailureError) as info:
            solve_exact(quadratic, ms, max_iter=1)
        assert info.value.dump is not None

    def test_size_cap(self):
        ms = [random_measure(10, 1, seed=s) for s in range(3)]
        with pytest.raises(InstanceTooLargeError):
            solve_exact(quadratic, ms, cap=999)

    def test_greedy_start_is_feasible(self):
        ms = [random_measure(s, 1, seed=s, weights="random") for s in (3, 5, 4)]
        cells, masses = greedy_initial_plan(ms)
        plan = TransportPlan(cells, masses, ms)
        assert plan.marginal_error() <= 1e-14
        assert cells.shape[0] == sum(m.size for m in ms) - len(ms) + 1


class TestDualityGap:
    def test_zero_potentials(self):
        x, y = uniform_line([0.0, 1.0]), uniform_line([0.0, 1.0])
        plan = TransportPlan([[0, 1], [1, 0]], [0.5, 0.5], [x, y])
        zero = PotentialTuple((np.zeros(2), np.zeros(2)))
        assert duality_gap(plan, zero, quadratic) == pytest.approx(1.0)

    def test_suboptimal_plan_gap_equals_value_difference(self):
        x = uniform_line([0.0, 0.4, 1.0])
        y = uniform_line([0.1, 0.5, 0.8])
        opt, pots, cert = solve_exact(quadratic, [x, y])
        worse = TransportPlan([[0, 2], [1, 1], [2, 0]], [1 / 3] * 3, [x, y])
        C = quadratic.tensor([x, y])
        assert duality_gap(worse, pots, quadratic) == pytest.approx(
            worse.cost(C) - cert.primal_value, abs=1e-12)

    def test_infeasible_potentials(self):
        x, y = uniform_line([0.0, 1.0]), uniform_line([0.0, 1.0])
        plan, pots, _ = solve_exact(quadratic, [x, y])
        with pytest.raises(CertificateInvalidError) as info:
            duality_gap(plan, pots.shifted(0, 1.0), quadratic)
        assert info.value.violation == pytest.approx(1.0)
        assert len(info.value.point) == 2


class TestEntropic:
    def test_singleton(self):
        res = solve_entropic(quadratic, [dirac([0.0]), dirac([0.5])], 0.1)
        assert res.converged
        assert res.plan.entries() == {(0, 0): 1.0}

    def test_small_epsilon_near_exact(self):
        ms = [random_measure(5, 1, seed=1), random_measure(5, 1, seed=2)]
        _, _, cert = solve_exact(quadratic, ms)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = solve_entropic(quadratic, ms, 1e-3, max_iter=5000)
        assert res.plan.marginal_error() <= 1e-12
        assert abs(res.objective - cert.primal_value) <= 0.01 * abs(cert.primal_value)

    def test_objective_bounded_below_by_exact(self):
        ms = [random_measure(s, 1, seed=s + 10, weights="random") for s in (4, 3, 5)]
        _, _, cert = solve_exact(quadratic, ms)
        res = solve_entropic(quadratic, ms, 0.05)
        assert res.objective >= cert.primal_value - 1e-9

    def test_large_epsilon_approaches_product(self):
        ms = [random_measure(4, 1, seed=3, weights="random"),
              random_measure(5, 1, seed=4, weights="random")]
        res = solve_entropic(quadratic, ms, 1e3)
        prod = np.outer(ms[0].weights, ms[1].weights)
        assert np.abs(res.plan.todense() - prod).max() <= 1e-3

    def test_warns_when_unconverged(self):
        ms = [random_measure(5, 1, seed=1), random_measure(5, 1, seed=2)]
        with pytest.warns(RuntimeWarning):
            res = solve_entropic(quadratic, ms, 1e-3, max_iter=3)
        assert not res.converged
        assert res.plan.marginal_error() <= 1e-12

    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(ValueError):
            solve_entropic(quadratic, [dirac([0.0]), dirac([1.0])], 0.0)

    def test_rounding_restores_marginals(self):
        ms = [random_measure(3, 1, seed=1, weights="random"),
              random_measure(4, 1, seed=2, weights="random"),
              random_measure(2, 1, seed=3, weights="random")]
        P = np.random.default_rng(0).random((3, 4, 2)) * 0.05
        Q = round_to_feasible(P, ms)
        assert np.all(Q >= 0)
        for a in range(3):
            np.testing.assert_allclose(dense_marginal(Q, a), ms[a].weights, atol=1e-14)
