import numpy as np
import pytest

from mmot.cost import CostOracle, evaluate, gradient_d1, tabulate
from mmot.errors import EvaluationError, GradientUnavailableError, ShapeError
from mmot.measure import DiscreteMeasure, dirac, grid_measure, random_measure

from oracles import central_difference


def line(*xs):
    return DiscreteMeasure(np.array(xs, dtype=float)[:, None], np.full(len(xs), 1 / len(xs)))


def uniform_grid(N):
    """N+1 equispaced atoms covering [0, 1]."""
    return line(*np.linspace(0.0, 1.0, N + 1))


quadratic = CostOracle.builtin("quadratic")
two_level = CostOracle.builtin("two_level")


class TestEvaluate:
    def test_quadratic_zero_on_diagonal(self):
        assert evaluate(quadratic, (0, 0), [line(0.25), line(0.25)]) == 0.0

    def test_quadratic_unit_displacement(self):
        assert evaluate(quadratic, (0, 0), [line(0.0), line(1.0)]) == 1.0

    def test_two_level(self):
        assert evaluate(two_level, (0, 0), [line(0.25), line(0.5)]) == 0.0
        assert evaluate(two_level, (0, 0), [line(0.25), line(-0.5)]) == 0.0

    def test_quadratic_pairwise_three(self):
        spaces = [line(0.0), line(1.0), line(3.0)]
        assert evaluate(quadratic, (0, 0, 0), spaces) == 1.0 + 9.0 + 4.0

    def test_product(self):
        spaces = [line(0.5), line(0.5), line(0.2)]
        assert evaluate(CostOracle.builtin("product"), (0, 0, 0), spaces) == pytest.approx(-0.05)

    def test_cosine_periodic(self):
        cos = CostOracle.builtin("cosine")
        assert evaluate(cos, (0, 0), [line(0.1), line(0.1)]) == pytest.approx(1.0)
        assert evaluate(cos, (0, 0), [line(0.0), line(0.5)]) == pytest.approx(-1.0)

    def test_index_error(self):
        with pytest.raises(IndexError):
            evaluate(quadratic, (0, 3), [line(0.0), line(1.0, 2.0)])

    def test_tabulated_lookup_is_exact(self):
        table = np.random.default_rng(0).random((3, 4))
        oracle = CostOracle.tabulated(table)
        spaces = [random_measure(3, 1, 1), random_measure(4, 1, 2)]
        vals = [evaluate(oracle, (2, 1), spaces) for _ in range(3)]
        assert vals[0] == vals[1] == vals[2] == table[2, 1]

    def test_tabulated_shape_mismatch(self):
        oracle = CostOracle.tabulated(np.zeros((2, 2)))
        with pytest.raises(ShapeError):
            evaluate(oracle, (0, 0), [line(0.0), line(0.0, 1.0, 2.0)])

    def test_tabulated_rejects_nan(self):
        with pytest.raises(EvaluationError):
            CostOracle.tabulated([[0.0, np.nan], [1.0, 1.0]])

    def test_non_finite_builtin(self):
        big = CostOracle.builtin("quadratic", scale=1e308)
        with pytest.raises(EvaluationError):
            evaluate(big, (0, 0), [line(0.0), line(10.0)])

    def test_two_level_needs_two_marginals(self):
        with pytest.raises(ShapeError):
            two_level.tensor([line(0.0), line(0.0), line(0.0)])

    def test_tensor_matches_pointwise(self):
        spaces = [random_measure(3, 2, 1), random_measure(4, 2, 2), random_measure(2, 2, 3)]
        T = quadratic.tensor(spaces)
        for idx in np.ndindex(*T.shape):
            assert T[idx] == evaluate(quadratic, idx, spaces)

    def test_json_roundtrip(self):
        for oracle in (CostOracle.builtin("cosine", scale=2.0),
                       CostOracle.tabulated(np.arange(6.0).reshape(2, 3))):
            back = CostOracle.from_dict(oracle.to_dict())
            spaces = [random_measure(2, 1, 4), random_measure(3, 1, 5)]
            np.testing.assert_array_equal(back.tensor(spaces), oracle.tensor(spaces))


class TestGradient:
    def test_quadratic_closed_form(self):
        g = gradient_d1(quadratic, (0, 0), [line(0.5), line(0.2)])
        assert g == pytest.approx([0.6])

    def test_two_level_witness(self):
        spaces = [line(0.25), line(-0.5, 0.5)]
        g_neg = gradient_d1(two_level, (0, 0), spaces)
        g_pos = gradient_d1(two_level, (0, 1), spaces)
        assert g_neg[0] == 0.0 and g_pos[0] == 0.0

    def test_two_level_equal_off_level(self):
        spaces = [line(0.1), line(-0.5, 0.5)]
        g = [gradient_d1(two_level, (0, j), spaces)[0] for j in (0, 1)]
        assert g[0] == g[1] == pytest.approx(-2 * (0.25 - 0.1))

    @pytest.mark.parametrize("name", ["quadratic", "cosine", "two_level"])
    def test_builtin_against_central_difference(self, name):
        oracle = CostOracle.builtin(name)
        y = line(0.3)
        for x in (0.2, 0.45, 0.7):
            f = lambda t: evaluate(oracle, (0, 0), [line(t), y])
            fd = central_difference(f, x, 1e-5)
            assert gradient_d1(oracle, (0, 0), [line(x), y])[0] == pytest.approx(fd, abs=1e-8)

    def test_product_gradient(self):
        spaces = [line(0.3), line(0.5), line(0.2)]
        g = gradient_d1(CostOracle.builtin("product"), (0, 0, 0), spaces)
        assert g == pytest.approx([-0.1])

    def test_tabulated_quadratic_second_order(self):
        y = grid_measure(5)
        devs = []
        for N in (8, 16):
            x = uniform_grid(N)
            table = tabulate(quadratic, [x, y])
            pts = np.indices((N + 1, 5)).reshape(2, -1).T
            exact, _ = quadratic.gradients(pts, [x, y])
            fd, ok = table.gradients(pts, [x, y])
            assert ok.all()
            devs.append(np.abs(exact - fd).max())
            assert devs[-1] <= 1.0 * (1.0 / N) ** 2

    def test_first_order_edges_are_first_order(self):
        y = grid_measure(3)
        devs = []
        for N in (8, 16):
            x = uniform_grid(N)
            table = CostOracle.tabulated(quadratic.tensor([x, y]), edge_order=1)
            pts = np.indices((N + 1, 3)).reshape(2, -1).T
            exact, _ = quadratic.gradients(pts, [x, y])
            fd, _ = table.gradients(pts, [x, y])
            devs.append(np.abs(exact - fd).max())
        assert devs[0] / devs[1] == pytest.approx(2.0, rel=1e-6)

    def test_smooth_cost_order_on_interior(self):
        cos = CostOracle.builtin("cosine")
        y = line(0.13, 0.4)
        devs = []
        for N in (16, 32, 64):
            x = uniform_grid(N)
            fd_oracle = tabulate(cos, [x, y])
            interior = [(i, j) for i in range(1, N) for j in range(2)]
            exact, _ = cos.gradients(interior, [x, y])
            fd, _ = fd_oracle.gradients(interior, [x, y])
            devs.append(np.abs(exact - fd).max())
        assert devs[0] / devs[1] >= 3 and devs[1] / devs[2] >= 3

    def test_two_dimensional_grid(self):
        xs = np.array([[a, b] for a in (0.0, 0.5, 1.0) for b in (0.0, 0.25, 0.5, 0.75)])
        x = DiscreteMeasure(xs, np.full(12, 1 / 12))
        y = DiscreteMeasure([[0.3, 0.1], [0.6, 0.9]], [0.5, 0.5])
        table = tabulate(quadratic, [x, y])
        pts = np.indices((12, 2)).reshape(2, -1).T
        exact, _ = quadratic.gradients(pts, [x, y])
        fd, ok = table.gradients(pts, [x, y])
        assert ok.all()
        np.testing.assert_allclose(fd, exact, atol=1e-12)

    def test_nonuniform_grid(self):
        x = line(0.0, 0.1, 0.35, 0.5, 0.9, 1.0)
        y = line(0.2)
        table = tabulate(quadratic, [x, y])
        pts = [(i, 0) for i in range(6)]
        fd, _ = table.gradients(pts, [x, y])
        exact, _ = quadratic.gradients(pts, [x, y])
        np.testing.assert_allclose(fd, exact, atol=1e-12)

    def test_non_grid_support(self):
        x = DiscreteMeasure([[0.0, 0.0], [1.0, 0.5], [0.3, 0.9]], [1 / 3] * 3)
        y = DiscreteMeasure([[0.0, 0.0]], [1.0])
        table = tabulate(quadratic, [x, y])
        with pytest.raises(GradientUnavailableError):
            gradient_d1(table, (0, 0), [x, y])

    def test_single_atom_axis_unavailable(self):
        x, y = dirac([0.5]), line(0.0, 1.0)
        table = tabulate(quadratic, [x, y])
        _, ok = table.gradients([(0, 0), (0, 1)], [x, y])
        assert not ok.any()
        with pytest.raises(GradientUnavailableError):
            gradient_d1(table, (0, 0), [x, y])
