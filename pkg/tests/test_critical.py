import numpy as np
import pytest

from bvlimit import find_critical_points, make_quadratic, min_gap, minimizer_curve_appendix, newton_polish
from bvlimit.critical import classify
from bvlimit.errors import NoConvergence, TooFewPoints


class TestFindCriticalPoints:
    def test_appendix_t1_set(self, appendix):
        pot, _ = appendix
        pts = find_critical_points(pot, 1.0)
        locs = [float(q.location[0]) for q in pts]
        assert len(pts) == 4
        assert np.allclose(locs, [0.0, 1.0, 2.0, 9.0], atol=1e-6)
        kinds = [q.kind for q in pts]
        assert kinds == ["degenerate", "minimum", "maximum", "minimum"]
        assert all(q.residual <= 1e-9 for q in pts)

    def test_quadratic_single_minimum(self, quadratic_1d):
        pts = find_critical_points(quadratic_1d, 0.7, grid_per_axis=16)
        assert len(pts) == 1
        assert pts[0].location[0] == pytest.approx(0.7, abs=1e-10)
        assert pts[0].kind == "minimum"

    def test_quadratic_2d(self, quadratic_2d):
        pts = find_critical_points(quadratic_2d, 0.5, grid_per_axis=8)
        assert len(pts) == 1
        assert np.allclose(pts[0].location, [0.5, 0.0], atol=1e-9)

    def test_minimizer_branch_found(self, appendix):
        pot, _ = appendix
        for t in np.linspace(0.0, 0.984375, 64):
            pts = find_critical_points(pot, t)
            phi = minimizer_curve_appendix(t)
            match = [q for q in pts if abs(q.location[0] - phi) < 1e-6]
            assert match, f"branch point missing at t={t}"
            assert match[0].kind == "minimum"

    def test_refinement_monotone(self, appendix):
        pot, _ = appendix
        coarse = find_critical_points(pot, 1.0, grid_per_axis=64)
        fine = find_critical_points(pot, 1.0, grid_per_axis=128)
        for q in coarse:
            assert any(np.linalg.norm(q.location - r.location) < 1e-6 for r in fine)


class TestNewtonPolish:
    def test_appendix_root_9(self, appendix):
        pot, _ = appendix
        out = newton_polish(pot, 1.0, [8.7])
        assert out[0] == pytest.approx(9.0, abs=1e-10)

    def test_quadratic_single_step(self, quadratic_1d):
        out = newton_polish(quadratic_1d, 0.4, [123.0])
        assert out[0] == pytest.approx(0.4, abs=1e-12)

    def test_iteration_cap(self, appendix):
        pot, _ = appendix
        with pytest.raises(NoConvergence):
            newton_polish(pot, 1.0, [0.5], max_iter=1)


class TestMinGap:
    def test_appendix_gap(self, appendix):
        pot, _ = appendix
        pts = find_critical_points(pot, 1.0)
        assert min_gap(pts) == pytest.approx(1.0, abs=1e-6)

    def test_singleton_raises(self, quadratic_1d):
        pts = find_critical_points(quadratic_1d, 0.2, grid_per_axis=16)
        with pytest.raises(TooFewPoints):
            min_gap(pts)

    def test_matches_brute_force(self, rng):
        pts = [rng.standard_normal(3) for _ in range(5)]
        expect = min(
            np.linalg.norm(a - b) for i, a in enumerate(pts) for b in pts[i + 1 :]
        )
        assert min_gap(pts) == pytest.approx(expect)


class TestClassify:
    def test_signs(self):
        assert classify(np.array([2.0, 3.0])) == "minimum"
        assert classify(np.array([-2.0, -0.5])) == "maximum"
        assert classify(np.array([-1.0, 4.0])) == "saddle"

    def test_degenerate_band(self):
        assert classify(np.array([0.0])) == "degenerate"
        assert classify(np.array([1e-9, 5.0])) == "degenerate"
