import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvlimit import (
    build_potential,
    make_appendix,
    make_custom_spline,
    make_quadratic,
    minimizer_curve_appendix,
    verify_assumptions,
)
from bvlimit.errors import ConstructionFailed, OutOfRange
from bvlimit.potentials import Potential
from bvlimit.ppoly import PiecewisePoly


class TestQuadratic:
    def test_critical_at_load(self, quadratic_1d):
        assert quadratic_1d.grad(0.5, [0.5])[0] == pytest.approx(0.0)

    def test_value(self, quadratic_1d):
        assert quadratic_1d.f(0.0, [2.0]) == pytest.approx(2.0)  # 0.5 * 2^2

    def test_hessian_identity(self, quadratic_2d, rng):
        for _ in range(5):
            t = rng.uniform(0, 1.5)
            x = rng.standard_normal(2)
            assert np.allclose(quadratic_2d.hess(t, x), np.eye(2))


class TestAppendix:
    def test_landmark_values(self, appendix):
        pot, spec = appendix
        assert pot.f(1.0, [1.0]) == pytest.approx(-1.0, abs=1e-9)
        assert pot.f(1.0, [3.0]) == pytest.approx(-3.0, abs=1e-9)
        assert pot.f(1.0, [2.0]) == pytest.approx(-1.0 + spec.eta, abs=1e-9)

    def test_zero_at_origin_any_time(self, appendix):
        pot, _ = appendix
        for t in (0.0, 0.3, 1.0, 1.5):
            assert pot.f(t, [0.0]) == pytest.approx(0.0, abs=1e-14)

    def test_minimizer_branch_is_critical(self, appendix):
        pot, _ = appendix
        assert pot.grad(0.5, [minimizer_curve_appendix(0.5)])[0] == pytest.approx(0.0, abs=1e-12)

    def test_minimizer_curve_values(self):
        assert minimizer_curve_appendix(0.0) == pytest.approx(-math.sqrt(1 / 3))
        assert minimizer_curve_appendix(0.25) == pytest.approx(-0.5)
        assert abs(minimizer_curve_appendix(1.0 - 1e-12)) < 1e-5

    def test_minimizer_curve_range(self):
        with pytest.raises(OutOfRange):
            minimizer_curve_appendix(1.0)
        with pytest.raises(OutOfRange):
            minimizer_curve_appendix(-0.1)

    def test_time_enters_linearly(self, appendix, rng):
        """F_t(x) - F_s(x) = -(t-s) x with no error at all."""
        pot, _ = appendix
        for _ in range(50):
            t, s = rng.uniform(0, 1.5, 2)
            x = rng.uniform(-3, 12)
            lhs = pot.f(t, [x]) - pot.f(s, [x])
            assert lhs == pytest.approx(-(t - s) * x, rel=1e-12, abs=1e-12)

    def test_cubic_on_negative_axis(self, appendix, rng):
        pot, _ = appendix
        for _ in range(40):
            t = rng.uniform(0, 1.5)
            x = rng.uniform(-3, 0)
            expect = -x * (t - 1 + x * x)
            assert pot.f(t, [x]) == pytest.approx(expect, rel=1e-12, abs=1e-12)

    def test_time_derivatives_exact(self, appendix, rng):
        pot, _ = appendix
        for _ in range(20):
            t = rng.uniform(0, 1.5)
            x = rng.uniform(-3, 12)
            assert pot.dt(t, [x]) == pytest.approx(-x, abs=1e-14)
            assert pot.dt_grad(t, [x])[0] == pytest.approx(-1.0)

    def test_eta_range_constructs(self):
        for eta in (0.002, 0.01, 0.05, 0.1):
            pot, spec = make_appendix(eta=eta)
            assert spec.f1_value(2.0) == pytest.approx(-1.0 + eta, abs=1e-9)

    def test_eta_out_of_range(self):
        with pytest.raises(OutOfRange):
            make_appendix(eta=0.2)
        with pytest.raises(OutOfRange):
            make_appendix(eta=0.0)

    def test_spurious_root_fails_loudly(self):
        """Tampering with the shaped slope must be caught at construction."""

        def sabotage(f1_prime):
            # plant an extra root of S' inside (2, 3)
            breaks = f1_prime.breaks
            coeffs = [c.copy() for c in f1_prime.coeffs]
            k = int(np.searchsorted(breaks, 2.6)) - 1
            coeffs[k][0] += 5.0  # lift the segment, slope crosses zero twice
            return PiecewisePoly(breaks, coeffs)

        with pytest.raises(ConstructionFailed):
            make_appendix(eta=0.05, _knot_hook=sabotage)

    def test_c3_continuity(self, appendix):
        pot, spec = appendix
        sp = spec.f1_prime
        for k, b in enumerate(sp.breaks[1:-1], start=1):
            for der in range(3):
                left_c = sp._der_coeffs(sp.coeffs[k - 1], der)
                lo = float(np.polyval(left_c[::-1], b - sp.breaks[k - 1]))
                hi = sp(b, der=der)
                assert hi == pytest.approx(lo, rel=1e-6, abs=1e-6)


class TestVerifyAssumptions:
    def test_quadratic_all_pass(self, quadratic_1d):
        rep = verify_assumptions(quadratic_1d, samples=300, seed=1)
        assert rep.ok, rep.flags
        assert rep.power_max_violation <= 1e-9

    def test_appendix_all_pass(self, appendix):
        pot, _ = appendix
        rep = verify_assumptions(pot, samples=1000, seed=2)
        assert rep.ok, (rep.flags, rep.appendix_flags)
        assert rep.appendix_flags is not None
        assert all(rep.appendix_flags.values())

    def test_fault_injection_caught(self, appendix):
        pot, _ = appendix
        broken = Potential(
            dim=1, name="broken",
            eval_fn=pot.eval_fn,
            grad_fn=lambda t, x: 1.1 * pot.grad_fn(t, x),
            hess_fn=pot.hess_fn, dt_fn=pot.dt_fn, dt_grad_fn=pot.dt_grad_fn,
            box=pot.box, horizon=pot.horizon,
        )
        rep = verify_assumptions(broken, samples=200, seed=3)
        assert not rep.flags["grad_fd"]

    def test_sample_floor(self, quadratic_1d):
        with pytest.raises(OutOfRange):
            verify_assumptions(quadratic_1d, samples=10)


@given(
    t=st.floats(0.0, 1.5),
    x=st.floats(-3.0, 12.0),
)
@settings(max_examples=300, deadline=None)
def test_appendix_derivatives_consistent(t, x):
    pot, _ = _APPENDIX
    h = 1e-6 * (1 + abs(x))
    fd = (pot.f(t, [x + h]) - pot.f(t, [x - h])) / (2 * h)
    g = pot.grad(t, [x])[0]
    assert abs(g - fd) <= 1e-6 * (1 + abs(g))
    fd2 = (pot.grad(t, [x + h])[0] - pot.grad(t, [x - h])[0]) / (2 * h)
    hess = pot.hess(t, [x])[0, 0]
    assert abs(hess - fd2) <= 1e-5 * (1 + abs(hess))


_APPENDIX = make_appendix()


class TestCustomSpline:
    def test_double_well(self):
        # S with minima at +-1 and a maximum at 0
        pot = make_custom_spline(
            knots=[-1.0, 0.0, 1.0],
            values=[-1.0, 0.0, -1.0],
            derivs=[0.0, 0.0, 0.0],
            second_derivs=[8.0, -2.0, 8.0],
        )
        assert pot.f(1.0, [-1.0]) == pytest.approx(-1.0)
        assert pot.grad(1.0, [0.0])[0] == pytest.approx(0.0)
        assert pot.hess(1.0, [0.0])[0, 0] == pytest.approx(-2.0)

    def test_registry_round_trip(self):
        pot = build_potential({"kind": "quadratic", "load": "t", "dim": 1})
        assert pot.grad(0.3, [0.3])[0] == pytest.approx(0.0)
        pot2 = build_potential({"kind": "appendix", "eta": 0.05})
        assert pot2.appendix is not None
