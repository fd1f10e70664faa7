import numpy as np
import pytest

from bvlimit import (
    ChainOptions,
    SpdMatrix,
    build_jump_chain,
    linearize_equilibrium,
    shoot_first_order,
    shoot_heteroclinic,
)
from bvlimit.errors import ChainStuck, NotAnEquilibrium, NotDescent


class TestLinearize:
    def test_barrier_top_has_one_unstable(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        spec = linearize_equilibrium(pot, 1.0, [2.0], A, B)
        assert len(spec.unstable_directions) == 1
        assert not spec.degenerate

    def test_wells_have_none(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        for x in (1.0, 9.0):
            spec = linearize_equilibrium(pot, 1.0, [x], A, B)
            assert len(spec.unstable_directions) == 0
            assert not spec.degenerate

    def test_flat_point_flagged_degenerate(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        spec = linearize_equilibrium(pot, 1.0, [0.0], A, B)
        assert spec.degenerate

    def test_non_equilibrium_rejected(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        with pytest.raises(NotAnEquilibrium):
            linearize_equilibrium(pot, 1.0, [5.0], A, B)

    def test_block_eigenvalues_match_scalar_reduction(self, appendix, appendix_matrices):
        # 1-D: lambda^2 + (B/A) lambda + H/A = 0
        pot, _ = appendix
        A, B = appendix_matrices
        spec = linearize_equilibrium(pot, 1.0, [2.0], A, B)
        H = pot.hess(1.0, [2.0])[0, 0]
        roots = np.roots([1.0, 0.25, H])
        assert np.allclose(sorted(spec.eigenvalues.real), sorted(roots.real), atol=1e-10)


class TestShooting:
    def test_inertial_orbit_reaches_deep_well(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        link = shoot_heteroclinic(pot, 1.0, [0.0], [1.0], 1e-4, A, B)
        assert link.to_point[0] == pytest.approx(9.0, abs=1e-3)
        assert np.linalg.norm(link.v_dot[-1]) <= 1e-5
        assert np.linalg.norm(link.v[-1] - link.to_point) <= 1e-5
        assert np.linalg.norm(link.v[0] - link.from_point) <= 1e-4  # the delta offset

    def test_overdamped_orbit_is_caught_by_near_well(self, appendix, appendix_matrices):
        pot, _ = appendix
        _, B = appendix_matrices
        link = shoot_first_order(pot, 1.0, [0.0], [1.0], 1e-4, B)
        assert link.to_point[0] == pytest.approx(1.0, abs=1e-3)

    def test_the_two_limits_differ(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        l2 = shoot_heteroclinic(pot, 1.0, [0.0], [1.0], 1e-4, A, B, check_robustness=False)
        l1 = shoot_first_order(pot, 1.0, [0.0], [1.0], 1e-4, B, check_robustness=False)
        assert abs(l2.to_point[0] - l1.to_point[0]) == pytest.approx(8.0, abs=1e-2)

    def test_cost_along_telescopes_to_drop(self, appendix, appendix_matrices):
        pot, spec = appendix
        A, B = appendix_matrices
        link = shoot_heteroclinic(pot, 1.0, [0.0], [1.0], 1e-4, A, B, check_robustness=False)
        drop = spec.f1_value(0.0) - spec.f1_value(9.0)
        assert link.cost_along == pytest.approx(drop, rel=1e-3)

    def test_ode_defect_small(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        link = shoot_heteroclinic(pot, 1.0, [0.0], [1.0], 1e-4, A, B, check_robustness=False)
        assert link.residual <= 1e-6

    def test_mechanical_energy_monotone(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        link = shoot_heteroclinic(pot, 1.0, [0.0], [1.0], 1e-4, A, B, check_robustness=False)
        en = np.array(
            [pot.f(1.0, v) + 0.5 * A.q_norm(vd) ** 2 for v, vd in zip(link.v, link.v_dot)]
        )
        running = np.minimum.accumulate(en)
        assert np.max(en - running) <= 1e-9 * (1 + np.abs(en).max())

    def test_saddle_descent_both_ways(self, appendix, appendix_matrices):
        pot, _ = appendix
        _, B = appendix_matrices
        right = shoot_first_order(pot, 1.0, [2.0], [1.0], 1e-4, B, check_robustness=False)
        left = shoot_first_order(pot, 1.0, [2.0], [-1.0], 1e-4, B, check_robustness=False)
        assert right.to_point[0] == pytest.approx(9.0, abs=1e-4)
        assert left.to_point[0] == pytest.approx(1.0, abs=1e-4)

    def test_minimum_rejects_descent(self, quadratic_1d):
        A = B = SpdMatrix.identity(1)
        with pytest.raises(NotDescent):
            shoot_heteroclinic(quadratic_1d, 0.3, [0.3], [1.0], 1e-4, A, B)

    def test_delta_robustness_cross_check(self, appendix, appendix_matrices):
        """to_point must agree between delta0 and delta0/10."""
        pot, _ = appendix
        A, B = appendix_matrices
        a = shoot_heteroclinic(pot, 1.0, [0.0], [1.0], 1e-4, A, B, check_robustness=False)
        b = shoot_heteroclinic(pot, 1.0, [0.0], [1.0], 1e-5, A, B, check_robustness=False)
        assert np.linalg.norm(a.to_point - b.to_point) < 1e-5


class TestChains:
    def test_direct_inertial_chain(self, appendix, appendix_matrices):
        pot, spec = appendix
        A, B = appendix_matrices
        chain = build_jump_chain(pot, 1.0, [0.0], [9.0], A, B)
        assert chain.m == 1
        drop = spec.f1_value(0.0) - spec.f1_value(9.0)
        assert chain.total_cost_along == pytest.approx(drop, rel=1e-3)
        assert chain.energy_drop == pytest.approx(drop, rel=1e-12)

    def test_empty_chain_for_equal_endpoints(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        chain = build_jump_chain(pot, 1.0, [1.0], [1.0], A, B)
        assert chain.m == 0

    def test_first_order_chain_to_near_well(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        opts = ChainOptions(first_order=True, damping=B)
        chain = build_jump_chain(pot, 1.0, [0.0], [1.0], A, B, opts)
        assert chain.m == 1
        assert chain.links[0].to_point[0] == pytest.approx(1.0, abs=1e-4)

    def test_unreachable_target_raises(self, appendix, appendix_matrices):
        """First-order dynamics cannot carry 0 to 9 (caught by the well at 1)."""
        pot, _ = appendix
        A, B = appendix_matrices
        opts = ChainOptions(first_order=True, damping=B)
        with pytest.raises(ChainStuck) as err:
            build_jump_chain(pot, 1.0, [0.0], [9.0], A, B, opts)
        assert err.value.partial is not None
        assert err.value.partial.m >= 1

    def test_links_share_endpoints(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        chain = build_jump_chain(pot, 1.0, [0.0], [9.0], A, B)
        cur = chain.u_minus
        for link in chain.links:
            assert np.linalg.norm(link.from_point - cur) <= 1e-5
            cur = link.to_point
        assert np.linalg.norm(cur - chain.u_plus) <= 1e-4
