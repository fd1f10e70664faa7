import numpy as np
import pytest

from bvlimit import (
    CostOptions,
    DiscretizedPath,
    cost_functional,
    cost_gradient,
    minimize_cost,
)
from bvlimit.errors import DimensionMismatch


@pytest.fixture(scope="module")
def fast_opts():
    return CostOptions(n_schedule=(4.0, 8.0), target_h=1.0 / 16.0, maxiter=60, maxiter_final=120)


class TestFunctional:
    def test_constant_path_at_critical_point_is_zero(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        path = DiscretizedPath.line(1.0, 4.0, 257, [9.0], [9.0])
        assert cost_functional(path, pot, A, B) == pytest.approx(0.0, abs=1e-20)

    def test_constant_path_off_critical(self, appendix, appendix_matrices):
        """Hand integral: a parked path pays 2N * |gradF|^2_{B^-1} / 2."""
        pot, _ = appendix
        A, B = appendix_matrices
        x = 5.0
        N = 4.0
        path = DiscretizedPath.line(1.0, N, 257, [x], [x])
        g = pot.grad(1.0, [x])
        expect = 2 * N * 0.5 * float(g @ B.solve(g))
        assert cost_functional(path, pot, A, B) == pytest.approx(expect, rel=1e-9)

    def test_line_exceeds_energy_gap(self, appendix, appendix_matrices):
        pot, spec = appendix
        A, B = appendix_matrices
        path = DiscretizedPath.line(1.0, 8.0, 513, [0.0], [9.0])
        drop = spec.f1_value(0.0) - spec.f1_value(9.0)
        assert cost_functional(path, pot, A, B) > drop

    def test_nonnegative_random_paths(self, appendix, appendix_matrices, rng):
        pot, _ = appendix
        A, B = appendix_matrices
        for _ in range(10):
            vals = rng.uniform(-2, 10, size=(65, 1))
            path = DiscretizedPath.from_values(1.0, 2.0, vals, vals[0], vals[-1])
            assert cost_functional(path, pot, A, B) >= 0.0

    def test_energy_gap_bound_structural(self, appendix, appendix_matrices, rng):
        """The discretization preserves cost >= |F(u1) - F(u2)| exactly."""
        pot, _ = appendix
        A, B = appendix_matrices
        for _ in range(25):
            ends = rng.uniform(-2, 10, 2)
            vals = np.linspace(ends[0], ends[1], 65)[:, None] + 0.5 * rng.standard_normal((65, 1))
            path = DiscretizedPath.from_values(1.0, 4.0, vals, [ends[0]], [ends[1]])
            bound = abs(pot.f(1.0, [ends[0]]) - pot.f(1.0, [ends[1]]))
            assert cost_functional(path, pot, A, B) >= bound - 1e-10

    def test_reversal_invariance(self, appendix, appendix_matrices, rng):
        pot, _ = appendix
        A, B = appendix_matrices
        vals = np.linspace(0, 9, 129)[:, None] + 0.4 * rng.standard_normal((129, 1))
        path = DiscretizedPath.from_values(1.0, 4.0, vals, [0.0], [9.0])
        c1 = cost_functional(path, pot, A, B)
        c2 = cost_functional(path.reversed(), pot, A, B)
        assert abs(c1 - c2) <= 1e-12 * (1 + abs(c1))

    def test_quadrature_second_order(self, appendix, appendix_matrices):
        """Doubling the node count shrinks the error by ~4 on a smooth path."""
        pot, _ = appendix
        A, B = appendix_matrices
        N = 4.0

        def smooth(m):
            s = np.linspace(0, 1, m)[:, None]
            vals = 4.5 * (1 - np.cos(np.pi * s))  # 0 -> 9, C^inf
            return DiscretizedPath.from_values(1.0, N, vals, [0.0], [9.0])

        c1 = cost_functional(smooth(129), pot, A, B)
        c2 = cost_functional(smooth(257), pot, A, B)
        c4 = cost_functional(smooth(513), pot, A, B)
        ratio = (c1 - c2) / (c2 - c4)
        assert ratio == pytest.approx(4.0, rel=0.3)

    def test_path_validation(self):
        with pytest.raises(DimensionMismatch):
            DiscretizedPath.from_values(0.0, 1.0, np.zeros((5, 1)), [0.0], [0.0])


class TestGradient:
    def test_matches_finite_differences(self, appendix, appendix_matrices, rng):
        pot, _ = appendix
        A, B = appendix_matrices
        worst = 0.0
        for _ in range(5):
            m = 161
            vals = np.linspace(0, 9, m)[:, None] + 0.3 * rng.standard_normal((m, 1))
            path = DiscretizedPath.from_values(1.0, 4.0, vals, [0.0], [9.0])
            grad = cost_gradient(path, pot, A, B)
            for k in rng.integers(0, len(grad), 8):
                node = 2 + int(k)
                e = 1e-6 * (1 + abs(path.values[node, 0]))
                vp = path.values.copy()
                vp[node, 0] += e
                vm = path.values.copy()
                vm[node, 0] -= e
                fd = (
                    cost_functional(DiscretizedPath.from_values(1.0, 4.0, vp, [0.0], [9.0]), pot, A, B)
                    - cost_functional(DiscretizedPath.from_values(1.0, 4.0, vm, [0.0], [9.0]), pot, A, B)
                ) / (2 * e)
                worst = max(worst, abs(fd - grad[k]) / (1 + abs(fd)))
        assert worst <= 1e-5

    def test_quadratic_potential_gradient(self, quadratic_1d, rng):
        from bvlimit import SpdMatrix

        A = B = SpdMatrix.identity(1)
        m = 129
        vals = rng.standard_normal((m, 1))
        path = DiscretizedPath.from_values(0.5, 4.0, vals, vals[0], vals[-1])
        grad = cost_gradient(path, quadratic_1d, A, B)
        k = 10
        e = 1e-6
        vp = path.values.copy()
        vp[2 + k, 0] += e
        vm = path.values.copy()
        vm[2 + k, 0] -= e
        fd = (
            cost_functional(DiscretizedPath.from_values(0.5, 4.0, vp, vals[0], vals[-1]), quadratic_1d, A, B)
            - cost_functional(DiscretizedPath.from_values(0.5, 4.0, vm, vals[0], vals[-1]), quadratic_1d, A, B)
        ) / (2 * e)
        assert grad[k] == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_stationary_after_optimization(self, appendix, appendix_matrices, fast_opts):
        pot, _ = appendix
        A, B = appendix_matrices
        res = minimize_cost(pot, 1.0, [2.0], [1.0], A, B, fast_opts)
        gn = np.linalg.norm(cost_gradient(res.path, pot, A, B))
        assert gn <= 1e-4 * (1 + res.value)


class TestMinimize:
    def test_same_endpoints_zero(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        res = minimize_cost(pot, 1.0, [5.0], [5.0], A, B)
        assert res.value == 0.0
        assert res.converged

    def test_downhill_pair_reaches_energy_drop(self, appendix, appendix_matrices, fast_opts):
        """2 -> 1 is connected by an orbit, so the cost equals the drop."""
        pot, spec = appendix
        A, B = appendix_matrices
        res = minimize_cost(pot, 1.0, [2.0], [1.0], A, B, fast_opts)
        drop = spec.f1_value(2.0) - spec.f1_value(1.0)
        assert res.value == pytest.approx(drop, rel=0.01)

    def test_level_values_monotone(self, appendix, appendix_matrices, fast_opts):
        pot, _ = appendix
        A, B = appendix_matrices
        res = minimize_cost(pot, 1.0, [2.0], [9.0], A, B, fast_opts)
        lv = res.level_values
        assert all(b <= a + 1e-12 for a, b in zip(lv, lv[1:]))

    def test_2d_quadratic_between_points(self, quadratic_2d):
        from bvlimit import SpdMatrix

        A = B = SpdMatrix.identity(2)
        opts = CostOptions(n_schedule=(4.0,), target_h=1.0 / 8.0, maxiter=60, maxiter_final=80)
        res = minimize_cost(quadratic_2d, 0.0, [0.0, 0.0], [1.0, 1.0], A, B, opts)
        gap = abs(quadratic_2d.f(0.0, [0.0, 0.0]) - quadratic_2d.f(0.0, [1.0, 1.0]))
        assert res.value >= gap - 1e-9
