"""Locate and classify the stationary set of F(t, .) inside the box."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .algebra import eig_sym
from .errors import NoConvergence, TooFewPoints
from .potentials import Potential

TOL_CRIT = 1e-9
TOL_DEGENERATE = 1e-6


@dataclass(frozen=True)
class CriticalPoint:
    t: float
    location: np.ndarray
    residual: float
    hess_eigs: np.ndarray
    kind: str  # minimum | saddle | maximum | degenerate


class CriticalPointList(list):
    """A list of CriticalPoint with search statistics attached."""

    def __init__(self, items=(), seeds=0, converged=0, diverged=0):
        super().__init__(items)
        self.seeds = seeds
        self.converged = converged
        self.diverged = diverged


def classify(hess_eigs: np.ndarray, tol_degenerate: float = TOL_DEGENERATE) -> str:
    """Sign pattern of the Hessian spectrum with a degeneracy band.

    The band is relative to the spectral radius but floored at 1, so an
    exactly singular Hessian (or one that is singular up to round-off) is
    reported degenerate rather than classified from noise.
    """
    eigs = np.asarray(hess_eigs, dtype=float)
    thr = tol_degenerate * max(1.0, float(np.abs(eigs).max()))
    if np.any(np.abs(eigs) <= thr):
        return "degenerate"
    if np.all(eigs > 0):
        return "minimum"
    if np.all(eigs < 0):
        return "maximum"
    return "saddle"


def _bracket_root_1d(p: Potential, t: float, x0: float, tol: float) -> np.ndarray:
    """Expanding search for a sign change of the 1-D gradient, then brentq.

    Rescues polishing from gradient plateaus, where both the Newton step and
    |gradF|^2 descent vanish while the gradient itself does not.
    """
    box = p.inflated_box()[0]
    g0 = float(p.grad(t, np.array([x0]))[0])
    step = 1e-3 * (box[1] - box[0])
    while step <= (box[1] - box[0]):
        for sgn in (1.0, -1.0):
            x1 = np.clip(x0 + sgn * step, box[0], box[1])
            g1 = float(p.grad(t, np.array([x1]))[0])
            if g0 * g1 < 0:
                lo, hi = sorted((x0, float(x1)))
                r = scipy.optimize.brentq(
                    lambda x: float(p.grad(t, np.array([x]))[0]), lo, hi, xtol=1e-15)
                if abs(float(p.grad(t, np.array([r]))[0])) <= tol:
                    return np.array([r])
        step *= 2.0
    raise NoConvergence("no sign change of the gradient inside the box")


def newton_polish(p: Potential, t: float, guess, tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
    """Drive the gradient to ``tol`` from ``guess``.

    Newton steps with Armijo damping on |gradF|^2, falling back to gradient
    descent on |gradF|^2 at a degenerate Hessian; in one dimension a stall on
    a gradient plateau falls through to bracketed root finding.
    """
    x = np.atleast_1d(np.asarray(guess, dtype=float)).copy()
    box = p.inflated_box()
    diam = float(np.linalg.norm(box[:, 1] - box[:, 0]))
    stalled = None
    for _ in range(max_iter):
        g = p.grad(t, x)
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return x
        h = p.hess(t, x)
        step = None
        try:
            cand = np.linalg.solve(h, -g)
            if np.isfinite(cand).all():
                step = cand
        except np.linalg.LinAlgError:
            step = None
        if step is None or float(np.linalg.norm(step)) > diam:
            # degenerate Hessian: descend on half the squared gradient norm
            step = -(h @ g)
            sn = float(np.linalg.norm(step))
            if sn == 0.0:
                stalled = "zero search direction at a non-critical point"
                break
            step *= min(1.0, 0.1 * diam / sn)
        alpha = 1.0
        phi0 = 0.5 * gn * gn
        for _ in range(40):
            xn = x + alpha * step
            gnew = p.grad(t, xn)
            if 0.5 * float(gnew @ gnew) <= phi0 * (1.0 - 1e-4 * alpha):
                x = xn
                break
            alpha *= 0.5
        else:
            stalled = f"line search stalled at |grad|={gn:.3e}"
            break
    g = p.grad(t, x)
    if float(np.linalg.norm(g)) <= tol:
        return x
    if stalled is not None and p.dim == 1:
        return _bracket_root_1d(p, t, float(x[0]), tol)
    raise NoConvergence(stalled or f"no convergence after {max_iter} iterations, |grad|={np.linalg.norm(g):.3e}")


def _refine_degenerate_1d(p: Potential, t: float, x: np.ndarray, tol_crit: float) -> np.ndarray:
    """Near a double root, |grad| <= tol only pins the location to sqrt(tol).

    The Hessian has a simple zero there, so Newton on the Hessian recovers
    the location to full precision; keep the refinement only if it stays a
    root of the gradient.
    """
    y = x.copy()
    step = 1e-6
    for _ in range(30):
        h = p.hess(t, y)[0, 0]
        if abs(h) < 1e-12:
            break
        dh = (p.hess(t, y + step)[0, 0] - p.hess(t, y - step)[0, 0]) / (2 * step)
        if dh == 0.0:
            return x
        y = y - h / dh
        if abs(float(y[0] - x[0])) > 1e-2:
            return x
    return y if float(np.abs(p.grad(t, y))[0]) <= tol_crit else x


def _find_1d(p: Potential, t: float, grid: int, tol_crit: float) -> tuple[list, int, int]:
    lo, hi = p.box[0]
    n = max(grid, 2048)
    xs = np.linspace(lo, hi, n)
    vals = p.grad_batch(t, xs[:, None])[:, 0]
    scale = max(np.abs(vals).max(), 1.0)
    roots = []
    diverged = 0
    sign = np.sign(vals)
    for i in np.nonzero(sign[:-1] * sign[1:] < 0)[0]:
        r = scipy.optimize.brentq(lambda x: p.grad(t, np.array([x]))[0], xs[i], xs[i + 1], xtol=1e-14)
        roots.append(np.array([r]))
    # touch roots (no sign change): local minima of |grad| dipping near zero
    av = np.abs(vals)
    interior = np.arange(1, n - 1)
    lm = interior[(av[interior] <= av[interior - 1]) & (av[interior] <= av[interior + 1])]
    for i in lm[av[lm] < 1e-4 * scale]:
        try:
            r = newton_polish(p, t, np.array([xs[i]]), tol=tol_crit)
            roots.append(_refine_degenerate_1d(p, t, r, tol_crit))
        except NoConvergence:
            diverged += 1
    seeds = len(np.nonzero(sign[:-1] * sign[1:] < 0)[0]) + len(lm)
    return roots, seeds, diverged


def find_critical_points(
    p: Potential,
    t: float,
    grid_per_axis: int = 64,
    tol_crit: float = TOL_CRIT,
    tol_degenerate: float = TOL_DEGENERATE,
    merge_radius: float | None = None,
) -> CriticalPointList:
    """Grid-seeded search for the stationary set at frozen time t.

    Seeds that fail to polish are dropped and counted in the returned list's
    statistics.  Results are merged within ``merge_radius`` and sorted
    lexicographically by coordinates.
    """
    if grid_per_axis < 8:
        raise ValueError("grid_per_axis must be at least 8")
    box = p.box
    diam = float(np.linalg.norm(box[:, 1] - box[:, 0]))
    if merge_radius is None:
        merge_radius = 1e-6 * diam
    diverged = 0
    if p.dim == 1:
        roots, seeds, diverged = _find_1d(p, t, 32 * grid_per_axis, tol_crit)
    else:
        axes = [np.linspace(lo, hi, grid_per_axis) for lo, hi in box]
        seeds = 0
        roots = []
        for seed in itertools.product(*axes):
            seeds += 1
            try:
                roots.append(newton_polish(p, t, np.array(seed), tol=tol_crit))
            except NoConvergence:
                diverged += 1
    # de-duplicate and confine to the box
    kept = []
    for r in roots:
        if np.any(r < box[:, 0] - merge_radius) or np.any(r > box[:, 1] + merge_radius):
            continue
        if float(np.linalg.norm(p.grad(t, r))) > tol_crit:
            continue
        if all(np.linalg.norm(r - q) > merge_radius for q in kept):
            kept.append(r)
    kept.sort(key=lambda r: tuple(r))
    pts = []
    for r in kept:
        eigs, _ = eig_sym(p.hess(t, r))
        pts.append(
            CriticalPoint(
                t=float(t),
                location=r,
                residual=float(np.linalg.norm(p.grad(t, r))),
                hess_eigs=eigs,
                kind=classify(eigs, tol_degenerate),
            )
        )
    return CriticalPointList(pts, seeds=seeds, converged=len(roots), diverged=diverged)


def min_gap(points) -> float:
    """Smallest pairwise distance within a set of critical points."""
    if len(points) < 2:
        raise TooFewPoints("min_gap needs at least two points")
    locs = [pt.location if isinstance(pt, CriticalPoint) else np.atleast_1d(pt) for pt in points]
    best = np.inf
    for i in range(len(locs)):
        for j in range(i + 1, len(locs)):
            best = min(best, float(np.linalg.norm(locs[i] - locs[j])))
    return best
