import numpy as np
import pytest

from bvlimit import (
    SpdMatrix,
    StepControl,
    apriori_diagnostics,
    dissipation_measure,
    integrate_gradient_flow,
    integrate_second_order,
    make_quadratic,
    minimizer_curve_appendix,
)
from bvlimit.errors import BlowUp, MissingVelocities


def closed_form_quadratic(eps, ts):
    """Exact solution of eps^2 u'' + eps u' + (u - t) = 0, u(0)=0, u'(0)=0."""
    c = eps
    d = -eps / np.sqrt(3.0)
    w = np.sqrt(3.0) / (2 * eps)
    decay = np.exp(-ts / (2 * eps))
    return ts - eps + decay * (c * np.cos(w * ts) + d * np.sin(w * ts))


class TestSecondOrder:
    def test_matches_closed_form(self, quadratic_1d):
        eps = 0.1
        A = B = SpdMatrix.identity(1)
        traj = integrate_second_order(quadratic_1d, A, B, eps, [0.0], [0.0], (0.0, 1.5))
        exact = closed_form_quadratic(eps, traj.times)
        sup = np.abs(traj.states[:, 0] - exact).max()
        assert sup <= 1e-6

    def test_energy_identity_all_pairs(self, quadratic_1d):
        A = B = SpdMatrix.identity(1)
        traj = integrate_second_order(quadratic_1d, A, B, 0.05, [0.3], [1.0], (0.0, 1.0))
        led = traj.ledger
        assert led.max_pair_residual() <= led.tol_energy * led.scale()
        assert led.g_increase_max() <= led.tol_energy * led.scale()

    def test_tracks_minimizer_branch(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        eps = 0.05
        u0 = [-(1 + eps) * np.sqrt(1 / 3)]
        traj = integrate_second_order(pot, A, B, eps, u0, [1.0], (0.0, 0.95))
        m = (traj.times >= 0.1) & (traj.times <= 0.9)
        phi = np.array([minimizer_curve_appendix(t) for t in traj.times[m]])
        assert np.abs(traj.states[m, 0] - phi).max() <= 0.05

    def test_zero_span(self, quadratic_1d):
        A = B = SpdMatrix.identity(1)
        traj = integrate_second_order(quadratic_1d, A, B, 0.1, [0.2], [0.4], (0.5, 0.5))
        assert len(traj.times) == 1
        assert traj.states[0, 0] == 0.2
        assert traj.velocities[0, 0] == 0.4

    def test_blowup_reported(self):
        # inverted parabola ejects the state through the box
        from bvlimit.potentials import Potential

        pot = Potential(
            dim=1, name="hill",
            eval_fn=lambda t, x: -float(x[0] ** 2),
            grad_fn=lambda t, x: -2.0 * x,
            hess_fn=lambda t, x: np.array([[-2.0]]),
            dt_fn=lambda t, x: 0.0,
            dt_grad_fn=lambda t, x: np.array([0.0]),
            box=np.array([[-1.0, 1.0]]),
        )
        A = B = SpdMatrix.identity(1)
        with pytest.raises(BlowUp) as err:
            integrate_second_order(pot, A, B, 0.1, [0.5], [0.0], (0.0, 5.0))
        assert err.value.t_exit is not None

    def test_tolerance_convergence(self, quadratic_1d):
        """Staircase of control tolerances: error drops across three decades
        by well over the nominal-order-minus-safety factor."""
        A = B = SpdMatrix.identity(1)
        errs = []
        for tol in (1e-5, 1e-8):
            ctrl = StepControl().scaled(tol)
            traj = integrate_second_order(quadratic_1d, A, B, 0.1, [0.0], [0.0], (0.0, 1.0), ctrl)
            exact = closed_form_quadratic(0.1, traj.times)
            errs.append(np.abs(traj.states[:, 0] - exact).max())
        assert errs[1] < errs[0]
        assert errs[0] / errs[1] >= 3.2


class TestGradientFlow:
    def test_tracks_load_with_lag(self, quadratic_1d):
        eps = 0.01
        traj = integrate_gradient_flow(quadratic_1d, eps, [0.0], (0.0, 1.0))
        exact = traj.times - eps * (1 - np.exp(-traj.times / eps))
        assert np.abs(traj.states[:, 0] - exact).max() <= 1e-6

    def test_frozen_critical_point_stays(self, appendix, appendix_matrices):
        pot, _ = appendix
        _, B = appendix_matrices
        from bvlimit.potentials import Potential

        frozen = Potential(
            dim=1, name="frozen",
            eval_fn=lambda t, x: pot.eval_fn(1.0, x),
            grad_fn=lambda t, x: pot.grad_fn(1.0, x),
            hess_fn=lambda t, x: pot.hess_fn(1.0, x),
            dt_fn=lambda t, x: 0.0,
            dt_grad_fn=lambda t, x: np.array([0.0]),
            box=pot.box,
        )
        traj = integrate_gradient_flow(frozen, 0.05, [9.0], (0.0, 0.5), damping=B)
        assert np.abs(traj.states[:, 0] - 9.0).max() <= 1e-9

    def test_appendix_damped_tracking(self, appendix, appendix_matrices):
        pot, _ = appendix
        _, B = appendix_matrices
        eps = 0.05
        u0 = [-(1 + eps) * np.sqrt(1 / 3)]
        traj = integrate_gradient_flow(pot, eps, u0, (0.0, 0.95), damping=B)
        m = (traj.times >= 0.1) & (traj.times <= 0.9)
        phi = np.array([minimizer_curve_appendix(t) for t in traj.times[m]])
        assert np.abs(traj.states[m, 0] - phi).max() <= 0.05

    def test_first_order_has_no_velocities(self, quadratic_1d):
        traj = integrate_gradient_flow(quadratic_1d, 0.05, [0.0], (0.0, 0.2))
        assert traj.velocities is None
        assert traj.order == 1


class TestDiagnostics:
    def test_static_load_zero_dissipation(self):
        pot = make_quadratic(1, [[0.7]])  # constant load
        A = B = SpdMatrix.identity(1)
        traj = integrate_second_order(pot, A, B, 0.1, [0.7], [0.0], (0.0, 1.0))
        rep = apriori_diagnostics(traj, pot, A, B)
        assert rep.viscous_dissipation == pytest.approx(0.0, abs=1e-14)

    def test_single_checkpoint_all_zero(self, quadratic_1d):
        A = B = SpdMatrix.identity(1)
        traj = integrate_second_order(quadratic_1d, A, B, 0.1, [0.1], [0.2], (0.3, 0.3))
        rep = apriori_diagnostics(traj, quadratic_1d, A, B)
        assert rep.viscous_dissipation == 0.0
        assert rep.gradient_l2 == 0.0
        assert rep.acceleration_l2 == 0.0

    def test_requires_velocities(self, quadratic_1d):
        traj = integrate_gradient_flow(quadratic_1d, 0.05, [0.0], (0.0, 0.2))
        A = B = SpdMatrix.identity(1)
        with pytest.raises(MissingVelocities):
            apriori_diagnostics(traj, quadratic_1d, A, B)


class TestDissipationMeasure:
    def test_total_matches_ledger(self, appendix, appendix_matrices):
        pot, _ = appendix
        A, B = appendix_matrices
        eps = 0.05
        traj = integrate_second_order(pot, A, B, eps, [-(1 + eps) * np.sqrt(1 / 3)], [1.0], (0.0, 1.5))
        meas = dissipation_measure(traj, B, bins=150)
        assert meas.total == pytest.approx(traj.ledger.dissipation[-1], abs=1e-9)
        assert meas.masses.sum() == pytest.approx(meas.total, abs=1e-9)
        assert np.all(meas.masses >= -1e-15)

    def test_single_bin(self, quadratic_1d):
        A = B = SpdMatrix.identity(1)
        traj = integrate_second_order(quadratic_1d, A, B, 0.1, [0.0], [0.0], (0.0, 1.0))
        meas = dissipation_measure(traj, B, bins=1)
        assert meas.masses[0] == pytest.approx(meas.total)

    def test_static_rest_zero(self):
        pot = make_quadratic(1, [[0.2]])
        A = B = SpdMatrix.identity(1)
        traj = integrate_second_order(pot, A, B, 0.1, [0.2], [0.0], (0.0, 1.0))
        meas = dissipation_measure(traj, B, bins=20)
        assert meas.total == pytest.approx(0.0, abs=1e-14)

    def test_concentration_near_jump(self, appendix, appendix_matrices):
        """At eps = 0.0125 at least 90% of the mass falls within 0.35 of the
        jump time (the ring-down spreads it right of t = 1), and essentially
        none falls before it."""
        pot, _ = appendix
        A, B = appendix_matrices
        eps = 0.0125
        traj = integrate_second_order(pot, A, B, eps, [-(1 + eps) * np.sqrt(1 / 3)], [1.0], (0.0, 1.5))
        meas = dissipation_measure(traj, B, bins=150)
        centers = 0.5 * (meas.edges[1:] + meas.edges[:-1])
        near = np.abs(centers - 1.0) <= 0.35
        assert meas.masses[near].sum() >= 0.9 * meas.total
        before = centers < 0.95
        assert meas.masses[before].sum() <= 0.01 * meas.total

    def test_epsilon_velocity_decay(self, appendix, appendix_matrices):
        """eps^2 |u'|^2 away from the jump trends to zero along the sweep.

        Window averages, not pointwise values: the fast transient's phase at
        any single time is arbitrary.
        """
        pot, _ = appendix
        A, B = appendix_matrices
        prev = None
        for eps in (0.1, 0.05, 0.025):
            traj = integrate_second_order(
                pot, A, B, eps, [-(1 + eps) * np.sqrt(1 / 3)], [1.0], (0.0, 0.9))
            m = (traj.times >= 0.25) & (traj.times <= 0.9)
            avg = float(np.mean(eps**2 * traj.velocities[m, 0] ** 2))
            if prev is not None:
                assert avg < prev
            prev = avg
