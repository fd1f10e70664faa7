"""Time-dependent potentials and their verified construction.

Three families are registered: a convex quadratic tracking a moving load, a
1-D double-well-with-deep-well potential whose energy landscape is shaped by
a spline (the "tilted" family: time enters only through a linear term), and
a user-supplied spline with the same tilt structure.

The tilted potential F_t(x) = S(x) - (t-1) x is assembled by designing the
derivative S'(x) as a C^2 piecewise quintic/sextic Hermite spline and taking
the exact antiderivative, so S is C^3 everywhere including the knots.  Every
structural condition on S (root set of S', prescribed values, plateau slope,
well curvatures, coercive tail) is re-verified numerically at construction
time and a violation raises ConstructionFailed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConstructionFailed, DimensionMismatch, OutOfRange
from .ppoly import PiecewisePoly, hermite_segment, poly_integral


@dataclass(frozen=True)
class Potential:
    """Bundle of F and the derivatives the analysis needs.

    eval/grad/hess/dt/dt_grad all take (t, x) with x of shape (dim,).
    ``box`` is the axis-aligned domain of interest, shape (dim, 2);
    ``horizon`` the time interval of interest.
    """

    dim: int
    name: str
    eval_fn: Callable = field(repr=False)
    grad_fn: Callable = field(repr=False)
    hess_fn: Callable = field(repr=False)
    dt_fn: Callable = field(repr=False)
    dt_grad_fn: Callable = field(repr=False)
    box: np.ndarray = field(repr=False, default=None)
    horizon: tuple = (0.0, 1.5)
    appendix: Optional["AppendixSpec"] = field(repr=False, default=None)
    grad_batch_fn: Optional[Callable] = field(repr=False, default=None)
    hess_batch_fn: Optional[Callable] = field(repr=False, default=None)
    eval_batch_fn: Optional[Callable] = field(repr=False, default=None)

    def f(self, t, x) -> float:
        return float(self.eval_fn(t, np.atleast_1d(np.asarray(x, dtype=float))))

    def grad(self, t, x) -> np.ndarray:
        return np.atleast_1d(self.grad_fn(t, np.atleast_1d(np.asarray(x, dtype=float))))

    def hess(self, t, x) -> np.ndarray:
        h = np.asarray(self.hess_fn(t, np.atleast_1d(np.asarray(x, dtype=float))))
        return h.reshape(self.dim, self.dim)

    def dt(self, t, x) -> float:
        return float(self.dt_fn(t, np.atleast_1d(np.asarray(x, dtype=float))))

    def dt_grad(self, t, x) -> np.ndarray:
        return np.atleast_1d(self.dt_grad_fn(t, np.atleast_1d(np.asarray(x, dtype=float))))

    def grad_batch(self, t, xs) -> np.ndarray:
        """Gradients at many points, shape (n, dim)."""
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        if self.grad_batch_fn is not None:
            return self.grad_batch_fn(t, xs)
        return np.stack([self.grad(t, x) for x in xs])

    def eval_batch(self, t, xs) -> np.ndarray:
        """Energies at many points, shape (n,)."""
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        if self.eval_batch_fn is not None:
            return self.eval_batch_fn(t, xs)
        return np.array([self.f(t, x) for x in xs])

    def hess_batch(self, t, xs) -> np.ndarray:
        """Hessians at many points, shape (n, dim, dim)."""
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dim)
        if self.hess_batch_fn is not None:
            return self.hess_batch_fn(t, xs)
        return np.stack([self.hess(t, x) for x in xs])

    def inflated_box(self, factor: float = 0.5) -> np.ndarray:
        center = self.box.mean(axis=1)
        half = 0.5 * (self.box[:, 1] - self.box[:, 0]) * (1.0 + factor)
        return np.stack([center - half, center + half], axis=1)


@dataclass(frozen=True)
class AppendixSpec:
    """Construction record of the tilted 1-D potential.

    ``f1_prime`` is the spline S' (C^2), ``f1`` its exact antiderivative
    shifted so S(0) = 0.  ``params`` records the shape constants actually
    used; downstream tests read landmark values (for example S(9)) from here
    rather than hard-coding them.
    """

    eta: float
    knots: np.ndarray
    f1_prime: PiecewisePoly = field(repr=False)
    f1: PiecewisePoly = field(repr=False)
    f1_shift: float
    x_max: float
    growth_coeff: float
    params: dict = field(repr=False)

    def f1_value(self, x):
        return self.f1(x) - self.f1_shift

    def f1_deriv(self, x, order: int = 1):
        if order < 1:
            return self.f1_value(x)
        return self.f1_prime(x, der=order - 1)


# landmark structure of the tilted family: roots of S' and prescribed values
_ROOTS = (0.0, 1.0, 2.0, 9.0)
_PLATEAU_SLOPE = -1.5  # S' on [3, 8]
_WELL_1_CURV = 14.0  # S''(1)
_WELL_9_CURV = 60.0  # S''(9)
_TAIL_SLOPE = 3.0  # S' at the last knot before the quartic tail
_SPIKE_PEAK_CAP = 0.58  # max of S' on (1, 2) at the default barrier height
_SPIKE_PEAK_PER_ETA = _SPIKE_PEAK_CAP / 0.05


def _build_f1_prime(eta: float, growth_coeff: float) -> tuple[PiecewisePoly, dict]:
    """Design S' on knots; returns the spline and the shape parameters.

    The barrier bump on (1, 2) integrates to exactly eta (the barrier height)
    while rising steeply enough at 1 that the post-fold minimum stays close
    to 1 under moderate tilts.  Bump geometry scales similarly with eta so
    the construction stays sign-correct across the admissible range.
    """
    peak = min(_SPIKE_PEAK_CAP, _SPIKE_PEAK_PER_ETA * eta)
    sig = peak / _SPIKE_PEAK_CAP
    k1 = _WELL_1_CURV
    k2 = 0.3 * sig
    xp = 1.0 + (1.5 * _SPIKE_PEAK_CAP / k1) * sig
    xq = xp + 0.03 * sig
    ddp = -120.0 / sig

    plateau = eta / 2.0
    for _ in range(4):
        rise = hermite_segment(xp - 1.0, (0.0, k1, 0.0), (peak, 0.0, ddp))
        decay = hermite_segment(xq - xp, (peak, 0.0, ddp), (plateau, -0.1 * plateau, 0.0))
        rem = eta - poly_integral(rise, xp - 1.0) - poly_integral(decay, xq - xp)
        if rem <= 0.0:
            raise ConstructionFailed("barrier bump leaves no integral budget for the tail")
        plateau = 2.0 * rem / (2.0 - xq) / 1.3

    knots = {
        -1.0: (-3.0, 6.0, -6.0),  # -3x^2 jet, keeps the left piece exactly cubic-derived
        0.0: (0.0, 0.0, -6.0),
        1.0: (0.0, k1, 0.0),
        xp: (peak, 0.0, ddp),
        xq: (plateau, -0.1 * plateau, 0.0),
        2.0: (0.0, -k2, 0.0),
        2.5: (-3.1, 0.0, 0.0),
        3.0: (_PLATEAU_SLOPE, 0.0, 0.0),
        8.0: (_PLATEAU_SLOPE, 0.0, 0.0),
        8.9: (_PLATEAU_SLOPE, 0.0, 0.0),
        9.0: (0.0, _WELL_9_CURV, 0.0),
        9.3: (_TAIL_SLOPE, 0.0, 0.0),
        10.0: (_TAIL_SLOPE, 0.0, 0.0),
    }
    xs = sorted(knots)
    built = {}
    for a, b in zip(xs[:-1], xs[1:]):
        built[(a, b)] = hermite_segment(b - a, knots[a], knots[b])
    # integral conditions pin the prescribed values of S at 1, 2, 3, 8
    built[(0.0, 1.0)] = hermite_segment(1.0, knots[0.0], knots[1.0], integral=-1.0)
    rem = eta - poly_integral(built[(1.0, xp)], xp - 1.0) - poly_integral(built[(xp, xq)], xq - xp)
    built[(xq, 2.0)] = hermite_segment(2.0 - xq, knots[xq], knots[2.0], integral=rem)
    i_23a = poly_integral(built[(2.0, 2.5)], 0.5)
    built[(2.5, 3.0)] = hermite_segment(0.5, knots[2.5], knots[3.0], integral=(-2.0 - eta) - i_23a)
    built[(3.0, 8.0)] = hermite_segment(5.0, knots[3.0], knots[8.0], integral=-7.5)

    breaks = np.array(xs + [12.0])
    coeffs = [built[(a, b)] for a, b in zip(xs[:-1], xs[1:])]
    coeffs.append(np.array([_TAIL_SLOPE, 0.0, 0.0, 4.0 * growth_coeff]))
    params = {
        "k1": k1,
        "k2": k2,
        "k9": _WELL_9_CURV,
        "peak": peak,
        "peak_x": xp,
        "plateau": plateau,
        "tail_slope": _TAIL_SLOPE,
        "knot_xs": xs,
    }
    return PiecewisePoly(breaks, coeffs), params


def _isolate_roots_1d(fun, lo, hi, samples=60000, polish_tol=1e-11):
    """Roots of a scalar function on [lo, hi]: sign changes plus touch points."""
    xs = np.linspace(lo, hi, samples)
    vals = fun(xs)
    roots = []
    sign = np.sign(vals)
    flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    import scipy.optimize

    for i in flips:
        roots.append(scipy.optimize.brentq(lambda x: float(fun(np.array([x]))[0]), xs[i], xs[i + 1], xtol=1e-14))
    # touch roots: interior local minima of |f| that dip near zero
    av = np.abs(vals)
    scale = max(av.max(), 1.0)
    interior = np.arange(1, samples - 1)
    lm = interior[(av[interior] <= av[interior - 1]) & (av[interior] <= av[interior + 1])]
    lm = lm[av[lm] < 1e-4 * scale]
    for i in lm:
        x = xs[i]
        for _ in range(80):  # damped Newton on f, linear rate at double roots
            f = float(fun(np.array([x]))[0])
            if abs(f) < polish_tol * scale:
                break
            d = (float(fun(np.array([x + 1e-7]))[0]) - float(fun(np.array([x - 1e-7]))[0])) / 2e-7
            if d == 0.0:
                break
            x = x - np.clip(f / d, -0.01 * (hi - lo), 0.01 * (hi - lo))
        if abs(float(fun(np.array([x]))[0])) < 1e-9 * scale:
            roots.append(float(x))
    roots.sort()
    merged = []
    for r in roots:
        if not merged or r - merged[-1] > 1e-6 * (hi - lo):
            merged.append(r)
    return merged


def _verify_appendix(spec: AppendixSpec) -> None:
    """Re-check every structural condition; raise ConstructionFailed loudly."""
    sp = spec.f1_prime
    f1 = spec.f1_value
    box_lo, box_hi = -3.0, 12.0

    roots = _isolate_roots_1d(lambda x: sp(x), box_lo, box_hi)
    expected = list(_ROOTS)
    # a double root under residual tolerance r is only located to sqrt(r)
    if len(roots) != len(expected) or any(abs(r - e) > 1e-4 for r, e in zip(roots, expected)):
        raise ConstructionFailed(f"critical set of the frozen slice is {roots}, expected {expected}")

    checks = [
        ("value at 1", abs(f1(1.0) + 1.0) < 1e-9),
        ("value at 2", abs(f1(2.0) - (-1.0 + spec.eta)) < 1e-9),
        ("value at 3", abs(f1(3.0) + 3.0) < 1e-9),
        ("curvature at 1", sp(1.0, der=1) > 0.0),
        ("curvature at 9", sp(9.0, der=1) > 0.0),
        ("base value", abs(f1(0.0)) < 1e-12),
    ]
    for name, ok in checks:
        if not ok:
            raise ConstructionFailed(f"condition failed: {name}")

    xs = np.linspace(3.0, 8.0, 2001)
    if sp(xs).max() > -1.0:
        raise ConstructionFailed("slope plateau rises above -1 on [3, 8]")
    xs = np.linspace(9.0 + 1e-9, box_hi + 6.0, 4001)  # coercive tail, past the box
    if sp(xs).min() <= 0.0:
        raise ConstructionFailed("tail slope is not positive beyond the last root")
    # S is C^3 iff S' is C^2 across the knots; compare exact one-sided limits
    for k, b in enumerate(sp.breaks[1:-1], start=1):
        for der in range(3):
            left_c = sp._der_coeffs(sp.coeffs[k - 1], der)
            lo_v = float(np.polyval(left_c[::-1], b - sp.breaks[k - 1]))
            hi_v = sp(b, der=der)
            scale = max(abs(lo_v), abs(hi_v), 1.0)
            if abs(hi_v - lo_v) > 1e-6 * scale:
                raise ConstructionFailed(f"S' not C^{der} at knot {b}: jump {hi_v - lo_v:.3e}")


def make_appendix(eta: float = 0.05, growth_coeff: float = 1.0, _knot_hook=None):
    """The tilted 1-D potential F_t(x) = S(x) - (t-1) x.

    S(x) agrees with -x^3 for x <= 0 exactly and is shaped so that at t = 1
    the stationary set is {0, 1, 2, 9} with a barrier of height ``eta``
    between the shallow well at 1 and the deep well at 9.  ``_knot_hook`` is
    a test hook that may tamper with the spline before verification.
    """
    if not (0.0 < eta <= 0.1):
        raise OutOfRange(f"eta must lie in (0, 0.1], got {eta}")
    f1_prime, params = _build_f1_prime(eta, growth_coeff)
    if _knot_hook is not None:
        f1_prime = _knot_hook(f1_prime)
    f1_raw = f1_prime.antiderivative()
    shift = float(f1_raw(0.0))
    spec = AppendixSpec(
        eta=eta,
        knots=np.asarray(params["knot_xs"]),
        f1_prime=f1_prime,
        f1=f1_raw,
        f1_shift=shift,
        x_max=10.0,
        growth_coeff=growth_coeff,
        params=params,
    )
    _verify_appendix(spec)

    def eval_fn(t, x):
        return (f1_raw(x[0]) - shift) - (t - 1.0) * x[0]

    def grad_fn(t, x):
        return np.array([f1_prime(x[0]) - (t - 1.0)])

    def hess_fn(t, x):
        return np.array([[f1_prime(x[0], der=1)]])

    def dt_fn(t, x):
        return -x[0]

    def dt_grad_fn(t, x):
        return np.array([-1.0])

    pot = Potential(
        dim=1,
        name="appendix",
        eval_fn=eval_fn,
        grad_fn=grad_fn,
        hess_fn=hess_fn,
        dt_fn=dt_fn,
        dt_grad_fn=dt_grad_fn,
        box=np.array([[-3.0, 12.0]]),
        horizon=(0.0, 1.5),
        appendix=spec,
        grad_batch_fn=lambda t, xs: (f1_prime(xs[:, 0]) - (t - 1.0))[:, None],
        hess_batch_fn=lambda t, xs: f1_prime(xs[:, 0], der=1)[:, None, None],
        eval_batch_fn=lambda t, xs: (f1_raw(xs[:, 0]) - shift) - (t - 1.0) * xs[:, 0],
    )
    return pot, spec


def minimizer_curve_appendix(t: float) -> float:
    """The pre-jump branch of local minimizers, -sqrt((1-t)/3) for t in [0, 1)."""
    if not (0.0 <= t < 1.0):
        raise OutOfRange(f"the minimizer branch exists for 0 <= t < 1, got t={t}")
    return -math.sqrt((1.0 - t) / 3.0)


def make_quadratic(dim: int, load, horizon=(0.0, 1.5), box_margin: float = 3.0) -> Potential:
    """F(t, x) = 0.5 ||x - load(t)||^2 with a polynomial load.

    ``load`` is an array of polynomial coefficients, shape (k, dim) ascending
    in t (so load=[[0],[1]] is the 1-D ramp t).
    """
    coeffs = np.asarray(load, dtype=float)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    if coeffs.shape[1] != dim:
        raise DimensionMismatch(f"load coefficients have {coeffs.shape[1]} columns, expected {dim}")
    dcoeffs = coeffs[1:] * np.arange(1, coeffs.shape[0])[:, None] if coeffs.shape[0] > 1 else np.zeros((1, dim))

    def ell(t):
        return np.polynomial.polynomial.polyval(t, coeffs)

    def dell(t):
        return np.polynomial.polynomial.polyval(t, dcoeffs)

    ts = np.linspace(horizon[0], horizon[1], 101)
    path = np.stack([ell(t) for t in ts])
    box = np.stack([path.min(axis=0) - box_margin, path.max(axis=0) + box_margin], axis=1)

    eye = np.eye(dim)
    return Potential(
        dim=dim,
        name="quadratic",
        eval_fn=lambda t, x: 0.5 * float(np.sum((x - ell(t)) ** 2)),
        grad_fn=lambda t, x: x - ell(t),
        hess_fn=lambda t, x: eye,
        dt_fn=lambda t, x: -float((x - ell(t)) @ dell(t)),
        dt_grad_fn=lambda t, x: -dell(t),
        box=box,
        horizon=tuple(horizon),
        grad_batch_fn=lambda t, xs: xs - ell(t),
        hess_batch_fn=lambda t, xs: np.broadcast_to(eye, (xs.shape[0], dim, dim)),
        eval_batch_fn=lambda t, xs: 0.5 * np.sum((xs - ell(t)) ** 2, axis=1),
    )


def make_custom_spline(knots, values, derivs, second_derivs, horizon=(0.0, 1.5)) -> Potential:
    """Tilted 1-D potential with user-shaped S: F_t(x) = S(x) - (t-1) x.

    S is the quintic Hermite interpolant of (value, d1, d2) rows; outside the
    knot range it continues as the quadratic jet of the boundary knot.
    """
    xs = np.asarray(knots, dtype=float)
    vals = np.asarray(values, dtype=float)
    d1 = np.asarray(derivs, dtype=float)
    d2 = np.asarray(second_derivs, dtype=float)
    if not (len(xs) >= 2 and len(xs) == len(vals) == len(d1) == len(d2)):
        raise DimensionMismatch("knots/values/derivs/second_derivs must share a length >= 2")
    if np.any(np.diff(xs) <= 0):
        raise OutOfRange("knots must be strictly increasing")

    # quadratic continuations match the (value, d1, d2) jet of the end knots;
    # the left piece is expanded about its own origin xs[0]-1
    v0, s0, c0 = vals[0], d1[0], d2[0] / 2.0
    left = np.array([v0 - s0 + c0, s0 - 2.0 * c0, c0])
    pieces = [left]
    breaks = [xs[0] - 1.0]
    for a, b, j in zip(xs[:-1], xs[1:], range(len(xs) - 1)):
        pieces.append(
            hermite_segment(b - a, (vals[j], d1[j], d2[j]), (vals[j + 1], d1[j + 1], d2[j + 1]))
        )
        breaks.append(a)
    breaks.append(xs[-1])
    breaks.append(xs[-1] + 1.0)
    pieces.append(np.array([vals[-1], d1[-1], d2[-1] / 2.0]))
    sq = PiecewisePoly(np.asarray(breaks), pieces)

    return Potential(
        dim=1,
        name="custom-spline",
        eval_fn=lambda t, x: float(sq(x[0])) - (t - 1.0) * x[0],
        grad_fn=lambda t, x: np.array([sq(x[0], der=1) - (t - 1.0)]),
        hess_fn=lambda t, x: np.array([[sq(x[0], der=2)]]),
        dt_fn=lambda t, x: -x[0],
        dt_grad_fn=lambda t, x: np.array([-1.0]),
        box=np.array([[xs[0], xs[-1]]]),
        horizon=tuple(horizon),
        grad_batch_fn=lambda t, pts: (sq(pts[:, 0], der=1) - (t - 1.0))[:, None],
        hess_batch_fn=lambda t, pts: sq(pts[:, 0], der=2)[:, None, None],
        eval_batch_fn=lambda t, pts: sq(pts[:, 0]) - (t - 1.0) * pts[:, 0],
    )


@dataclass
class AssumptionReport:
    """Numerical audit of the structural assumptions on a potential."""

    grad_fd_max_rel: float
    hess_fd_max_rel: float
    dt_fd_max_rel: float
    power_c1: float
    power_c2: float
    power_max_violation: float
    critical_min_gap: float
    boundary_coercivity_margin: float
    flags: dict
    appendix_flags: dict | None = None

    @property
    def ok(self) -> bool:
        good = all(self.flags.values())
        if self.appendix_flags is not None:
            good = good and all(self.appendix_flags.values())
        return good


GRAD_FD_TOL = 1e-6
HESS_FD_TOL = 1e-5
DT_FD_TOL = 1e-6


def verify_assumptions(p: Potential, samples: int = 1000, seed: int = 0) -> AssumptionReport:
    """Sampled audit: derivative consistency, power control fit, critical-set
    separation, boundary coercivity, plus the construction flags when the
    potential carries an appendix record."""
    if samples < 100:
        raise OutOfRange("need at least 100 samples")
    rng = np.random.default_rng(seed)
    t0, t1 = p.horizon
    ts = rng.uniform(t0, t1, samples)
    xs = rng.uniform(p.box[:, 0], p.box[:, 1], size=(samples, p.dim))

    grad_err = hess_err = dt_err = 0.0
    dtf_vals = np.empty(samples)
    f_vals = np.empty(samples)
    for i in range(samples):
        t, x = ts[i], xs[i]
        g = p.grad(t, x)
        h_step = 1e-6 * (1.0 + np.abs(x))
        fd_g = np.array(
            [
                (p.f(t, x + h_step[j] * _e(p.dim, j)) - p.f(t, x - h_step[j] * _e(p.dim, j)))
                / (2 * h_step[j])
                for j in range(p.dim)
            ]
        )
        grad_err = max(grad_err, np.abs(g - fd_g).max() / (1.0 + np.abs(g).max()))
        hess = p.hess(t, x)
        fd_h = np.stack(
            [
                (p.grad(t, x + h_step[j] * _e(p.dim, j)) - p.grad(t, x - h_step[j] * _e(p.dim, j)))
                / (2 * h_step[j])
                for j in range(p.dim)
            ]
        )
        hess_err = max(hess_err, np.abs(hess - fd_h).max() / (1.0 + np.abs(hess).max()))
        dt_step = 1e-6 * (1.0 + abs(t))
        fd_dt = (p.f(t + dt_step, x) - p.f(t - dt_step, x)) / (2 * dt_step)
        dv = p.dt(t, x)
        dt_err = max(dt_err, abs(dv - fd_dt) / (1.0 + abs(dv)))
        dtf_vals[i] = dv
        f_vals[i] = p.f(t, x)

    # power control |dF/dt| <= C1 F + C2: scan C1, take the tight C2
    best = None
    for c1 in np.linspace(0.0, 4.0, 17):
        c2 = float(np.max(np.abs(dtf_vals) - c1 * f_vals))
        if best is None or c2 < best[1]:
            best = (float(c1), max(c2, 0.0))
    c1, c2 = best
    violation = float(np.max(np.abs(dtf_vals) - (c1 * f_vals + c2)))

    from .critical import find_critical_points, min_gap  # deferred, avoids a cycle

    gaps = []
    grid = 64 if p.dim == 1 else 8
    for t in np.linspace(t0, t1, 9):
        pts = find_critical_points(p, t, grid_per_axis=grid)
        if len(pts) >= 2:
            gaps.append(min_gap(pts))
    crit_gap = float(min(gaps)) if gaps else float("inf")

    # boundary coercivity proxy: F on box faces vs F on the middle-half region
    nb = 200
    boundary_min = np.inf
    for j in range(p.dim):
        for side in (0, 1):
            pts = rng.uniform(p.box[:, 0], p.box[:, 1], size=(nb, p.dim))
            pts[:, j] = p.box[j, side]
            for t in np.linspace(t0, t1, 5):
                boundary_min = min(boundary_min, min(p.f(t, q) for q in pts))
    center = p.box.mean(axis=1)
    half = 0.25 * (p.box[:, 1] - p.box[:, 0])
    cpts = rng.uniform(center - half, center + half, size=(nb, p.dim))
    center_max = max(p.f(t, q) for t in np.linspace(t0, t1, 5) for q in cpts)
    margin = float(boundary_min - center_max)

    flags = {
        "grad_fd": grad_err <= GRAD_FD_TOL,
        "hess_fd": hess_err <= HESS_FD_TOL,
        "dt_fd": dt_err <= DT_FD_TOL,
        "power_control": violation <= 1e-9,
        "critical_separation": crit_gap > 1e-6,
        "boundary_coercive": margin > 0.0,
    }
    appendix_flags = None
    if p.appendix is not None:
        spec = p.appendix
        try:
            _verify_appendix(spec)
            h_ok = True
        except ConstructionFailed:
            h_ok = False
        appendix_flags = {
            "h1_roots": h_ok,
            "h2_value_at_1": abs(spec.f1_value(1.0) + 1.0) < 1e-9,
            "h3_value_at_2": abs(spec.f1_value(2.0) - (-1.0 + spec.eta)) < 1e-9,
            "h4_plateau": spec.f1_value(3.0) == -3.0
            or abs(spec.f1_value(3.0) + 3.0) < 1e-9,
            "h5_curvatures": spec.f1_deriv(1.0, 2) > 0 and spec.f1_deriv(9.0, 2) > 0,
            "coercive_tail": bool(np.all(spec.f1_prime(np.linspace(10.0, 18.0, 400)) > 0)),
        }
    return AssumptionReport(
        grad_fd_max_rel=float(grad_err),
        hess_fd_max_rel=float(hess_err),
        dt_fd_max_rel=float(dt_err),
        power_c1=c1,
        power_c2=c2,
        power_max_violation=violation,
        critical_min_gap=crit_gap,
        boundary_coercivity_margin=margin,
        flags=flags,
        appendix_flags=appendix_flags,
    )


def _e(dim, j):
    v = np.zeros(dim)
    v[j] = 1.0
    return v


def build_potential(config: dict) -> Potential:
    """Construct a registered potential from its JSON config block."""
    kind = config.get("kind")
    if kind == "appendix":
        pot, _ = make_appendix(eta=config.get("eta", 0.05))
        return pot
    if kind == "quadratic":
        load = config.get("load", [[0.0], [1.0]])
        if load == "t":
            load = [[0.0], [1.0]]
        arr = np.asarray(load, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        return make_quadratic(
            dim=int(config.get("dim", arr.shape[1])),
            load=arr,
            horizon=tuple(config.get("horizon", (0.0, 1.5))),
        )
    if kind == "custom-spline":
        return make_custom_spline(
            config["knots"],
            config["values"],
            config["derivs"],
            config["second_derivs"],
            horizon=tuple(config.get("horizon", (0.0, 1.5))),
        )
    raise OutOfRange(f"unknown potential kind {kind!r}")
