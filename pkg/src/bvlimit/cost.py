"""Discretized transition cost between states at a frozen time.

The cost of a clamped path v on [-N, N] is

    1/2 int ||gradF_t(v) + A v''||_{B^-1}^2 + ||v'||_B^2 ds ,

discretized with second-order central differences for v'' at the nodes and
midpoint differences for v' on the cells.  (A central-difference first
derivative at the nodes admits a sawtooth null mode that lets discrete paths
undercut the true infimum badly; the staggered form does not.)  The whole
functional is an exact sum of squares, so the minimizer is a banded
Levenberg/Gauss-Newton iteration on the free interior nodes; its normal
matrix is assembled sparse and factorized directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import splu

from .algebra import SpdMatrix
from .errors import DidNotConverge, DimensionMismatch
from .potentials import Potential


@dataclass(frozen=True)
class DiscretizedPath:
    """Clamped path: the first two and last two nodes are pinned, which
    encodes v(-N)=u1, v(N)=u2 and the zero-velocity endpoint constraint."""

    t: float
    N: float
    values: np.ndarray  # (m, dim)
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] < 9:
            raise DimensionMismatch("a path needs at least 9 nodes of shape (m, dim)")
        for row in (0, 1):
            if not np.array_equal(v[row], self.u1):
                raise DimensionMismatch("left clamp violated")
        for row in (-2, -1):
            if not np.array_equal(v[row], self.u2):
                raise DimensionMismatch("right clamp violated")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def h(self) -> float:
        return 2.0 * self.N / (self.m - 1)

    @property
    def s_grid(self) -> np.ndarray:
        return np.linspace(-self.N, self.N, self.m)

    @staticmethod
    def from_values(t, N, values, u1, u2) -> "DiscretizedPath":
        vals = np.atleast_2d(np.asarray(values, dtype=float)).copy()
        if vals.shape[0] == 1:
            vals = vals.T
        u1 = np.atleast_1d(np.asarray(u1, dtype=float))
        u2 = np.atleast_1d(np.asarray(u2, dtype=float))
        vals[0] = vals[1] = u1
        vals[-1] = vals[-2] = u2
        return DiscretizedPath(t=float(t), N=float(N), values=vals, u1=u1, u2=u2)

    @staticmethod
    def line(t, N, m, u1, u2) -> "DiscretizedPath":
        u1 = np.atleast_1d(np.asarray(u1, dtype=float))
        u2 = np.atleast_1d(np.asarray(u2, dtype=float))
        s = np.linspace(0.0, 1.0, m)[:, None]
        return DiscretizedPath.from_values(t, N, u1 + (u2 - u1) * s, u1, u2)

    @staticmethod
    def through_waypoint(t, N, m, u1, w, u2) -> "DiscretizedPath":
        u1 = np.atleast_1d(np.asarray(u1, dtype=float))
        u2 = np.atleast_1d(np.asarray(u2, dtype=float))
        w = np.atleast_1d(np.asarray(w, dtype=float))
        half = m // 2
        a = u1 + (w - u1) * np.linspace(0, 1, half)[:, None]
        b = w + (u2 - w) * np.linspace(0, 1, m - half)[:, None]
        return DiscretizedPath.from_values(t, N, np.vstack([a, b]), u1, u2)

    def reversed(self) -> "DiscretizedPath":
        return DiscretizedPath.from_values(self.t, self.N, self.values[::-1], self.u2, self.u1)


@dataclass
class CostOptions:
    n_schedule: tuple = (4.0, 8.0, 16.0, 32.0)
    target_h: float = 1.0 / 32.0
    restarts: int = 4
    maxiter: int = 80  # basin-finding levels; the final level gets maxiter_final
    maxiter_final: int = 200
    opt_tol_rel: float = 1e-6
    seed: int = 0
    use_rollout: bool = True
    waypoints: tuple = ()  # extra user waypoints; critical points are added automatically
    level_stop_rel: float = 1e-4  # stop the ladder when a level improves less than this


@dataclass
class CostResult:
    value: float
    path: DiscretizedPath
    N_used: float
    restarts_used: int
    converged: bool
    gradient_norm: float
    level_values: tuple = ()


# Gauss-Legendre chord rule for the mean gradient in dimension > 1
_GL_TAU = np.array([0.5 - np.sqrt(0.15), 0.5, 0.5 + np.sqrt(0.15)])
_GL_W = np.array([5.0, 8.0, 5.0]) / 18.0


def _mean_gradients(path: DiscretizedPath, p: Potential):
    """Chord-averaged gradient per cell.

    In one dimension the average is the exact energy difference quotient, so
    the discrete cost inherits the energy-gap lower bound exactly; in higher
    dimensions a three-point Gauss rule approximates it.
    """
    v = path.values
    a, b = v[:-1], v[1:]
    if path.dim == 1:
        dv = (b - a)[:, 0]
        fa = p.eval_batch(path.t, a)
        fb = p.eval_batch(path.t, b)
        mid_g = p.grad_batch(path.t, 0.5 * (a + b))[:, 0]
        tiny = np.abs(dv) < 1e-10
        with np.errstate(divide="ignore", invalid="ignore"):
            gbar = np.where(tiny, mid_g, (fb - fa) / np.where(tiny, 1.0, dv))
        return gbar[:, None]
    acc = np.zeros_like(a)
    for tau, wq in zip(_GL_TAU, _GL_W):
        acc += wq * p.grad_batch(path.t, a + tau * (b - a))
    return acc


def _cell_arrays(path: DiscretizedPath, p: Potential, A: SpdMatrix):
    """Cell velocities, cell accelerations (central over cells, one-sided at
    the end cells), and chord-mean gradients."""
    v, h = path.values, path.h
    d_cells = (v[1:] - v[:-1]) / h  # (m-1, dim)
    vdd = np.empty_like(d_cells)
    vdd[1:-1] = (d_cells[2:] - d_cells[:-2]) / (2.0 * h)
    vdd[0] = (d_cells[1] - d_cells[0]) / h
    vdd[-1] = (d_cells[-1] - d_cells[-2]) / h
    gbar = _mean_gradients(path, p)
    return d_cells, vdd, gbar


def _residuals(path: DiscretizedPath, p: Potential, A: SpdMatrix, B: SpdMatrix):
    """Residual vector rho with cost = ||rho||^2 / 2.

    All integrand pieces live on the cells; with the chord-mean gradient and
    the staggered acceleration the inequality
        cost >= |F(u1) - F(u2)|
    holds for every discrete path, not just in the h -> 0 limit (the
    cross-term telescopes exactly because the end cells are clamped).
    """
    h = path.h
    d_cells, vdd, gbar = _cell_arrays(path, p, A)
    isqB = B.inv_sqrt()
    sqB = B.sqrt()
    r1 = (gbar + vdd @ A.entries.T) @ isqB.T * np.sqrt(h)
    r2 = d_cells @ sqB.T * np.sqrt(h)
    return np.concatenate([r1.ravel(), r2.ravel()]), h


def cost_functional(path: DiscretizedPath, p: Potential, A: SpdMatrix, B: SpdMatrix) -> float:
    rho, _ = _residuals(path, p, A, B)
    return 0.5 * float(rho @ rho)


def _mean_gradient_jacobian_blocks(path: DiscretizedPath, p: Potential):
    """d gbar_c / d v_c and d gbar_c / d v_{c+1}, shape (m-1, dim, dim)."""
    v = path.values
    a, b = v[:-1], v[1:]
    if path.dim == 1:
        dv = (b - a)[:, 0]
        ga = p.grad_batch(path.t, a)[:, 0]
        gb = p.grad_batch(path.t, b)[:, 0]
        gbar = _mean_gradients(path, p)[:, 0]
        mid_h = p.hess_batch(path.t, 0.5 * (a + b))[:, 0, 0]
        tiny = np.abs(dv) < 1e-10
        safe = np.where(tiny, 1.0, dv)
        da = np.where(tiny, 0.5 * mid_h, (gbar - ga) / safe)
        db = np.where(tiny, 0.5 * mid_h, (gb - gbar) / safe)
        return da[:, None, None], db[:, None, None]
    n = path.dim
    da = np.zeros((len(a), n, n))
    db = np.zeros_like(da)
    for tau, wq in zip(_GL_TAU, _GL_W):
        hq = p.hess_batch(path.t, a + tau * (b - a))
        da += wq * (1.0 - tau) * hq
        db += wq * tau * hq
    return da, db


def _jacobian(path: DiscretizedPath, p: Potential, A: SpdMatrix, B: SpdMatrix, h):
    """Sparse Jacobian of the residual vector w.r.t. all node coordinates.

    r1 rows (force balance on cell c) couple nodes c-1 .. c+2; r2 rows
    (velocity on cell c) couple nodes c and c+1.
    """
    m, d = path.m, path.dim
    nc = m - 1
    isqB = B.inv_sqrt()
    sqB = B.sqrt()
    sh = np.sqrt(h)
    iA = isqB @ A.entries
    da, db = _mean_gradient_jacobian_blocks(path, p)
    da = np.einsum("ab,cbe->cae", isqB, da)
    db = np.einsum("ab,cbe->cae", isqB, db)

    blk_r, blk_c = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    blk_r = blk_r.ravel()
    blk_c = blk_c.ravel()
    rows_parts, cols_parts, vals_parts = [], [], []

    def add(rows_nodes, cols_nodes, blocks):
        # rows_nodes, cols_nodes: (k,), blocks: (k, d, d)
        rows_parts.append((rows_nodes[:, None] * d + blk_r[None, :]).ravel())
        cols_parts.append((cols_nodes[:, None] * d + blk_c[None, :]).ravel())
        vals_parts.append(blocks.reshape(len(rows_nodes), -1).ravel())

    cells = np.arange(nc)
    # mean-gradient coupling
    add(cells, cells, sh * da)
    add(cells, cells + 1, sh * db)
    # acceleration stencils: interior cells couple nodes c-1, c, c+1, c+2 with
    # coefficients (1, -1, -1, 1)/(2 h^2); end cells use one-sided forms
    interior = cells[1:-1]
    cf = sh / (2.0 * h * h)
    for off, sign in ((-1, 1.0), (0, -1.0), (1, -1.0), (2, 1.0)):
        blocks = np.broadcast_to(sign * cf * iA, (len(interior), d, d))
        add(interior, interior + off, blocks)
    cf_end = sh / (h * h)
    for cell, stencil in ((0, ((0, 1.0), (1, -2.0), (2, 1.0))),
                          (nc - 1, ((m - 3, 1.0), (m - 2, -2.0), (m - 1, 1.0)))):
        for node, sign in stencil:
            add(np.array([cell]), np.array([node]),
                (sign * cf_end * iA)[None])
    # velocity rows start after the nc force rows
    vel_blk = (sqB * (sh / h)).reshape(1, d, d)
    add(nc + cells, cells + 1, np.broadcast_to(vel_blk, (nc, d, d)))
    add(nc + cells, cells, np.broadcast_to(-vel_blk, (nc, d, d)))

    rows = np.concatenate(rows_parts)
    cols = np.concatenate(cols_parts)
    vals = np.concatenate(vals_parts)
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * nc * d, m * d))


def cost_gradient(path: DiscretizedPath, p: Potential, A: SpdMatrix, B: SpdMatrix) -> np.ndarray:
    """Exact gradient of cost_functional w.r.t. the free interior nodes."""
    rho, h = _residuals(path, p, A, B)
    J = _jacobian(path, p, A, B, h)
    full = J.T @ rho
    d = path.dim
    return full[2 * d : (path.m - 2) * d]


def _gn_minimize(path, p, A, B, opts: CostOptions, maxiter=None):
    """Levenberg-damped Gauss-Newton on the free nodes of one path."""
    m, d = path.m, path.dim
    free = np.arange(2 * d, (m - 2) * d)
    vals = path.values.copy()
    cur = replace(path, values=vals)
    rho, w = _residuals(cur, p, A, B)
    cost = 0.5 * float(rho @ rho)
    lam = 1e-6
    moved = False
    gnorm = np.inf
    window = []  # cost 8 iterations back, for the stall exit
    for _ in range(maxiter if maxiter is not None else opts.maxiter):
        J = _jacobian(cur, p, A, B, w)[:, free]
        grad = J.T @ rho
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= opts.opt_tol_rel * (1.0 + cost):
            return cost, cur, gnorm, True, moved
        window.append(cost)
        if len(window) > 8:
            if window[-9] - cost < 1e-9 * (1.0 + cost):
                break
            window.pop(0)
        JTJ = (J.T @ J).tocsc()
        eye = sp.identity(len(free), format="csc")
        accepted = False
        for _ in range(60):
            try:
                delta = splu(JTJ + lam * eye).solve(-grad)
            except RuntimeError:
                lam *= 10.0
                continue
            trial = vals.copy()
            trial.ravel()[free] += delta
            cand = replace(cur, values=trial)
            rho_n, w_n = _residuals(cand, p, A, B)
            cost_n = 0.5 * float(rho_n @ rho_n)
            if cost_n < cost:
                pred = -float(grad @ delta) - 0.5 * float(delta @ (JTJ @ delta))
                gain = (cost - cost_n) / max(pred, 1e-300)
                vals, cur, rho, w, cost = trial, cand, rho_n, w_n, cost_n
                lam = max(lam * (0.2 if gain > 0.7 else 0.7), 1e-14)
                accepted = True
                moved = True
                break
            lam *= 5.0
        if not accepted:
            break
    return cost, cur, gnorm, gnorm <= opts.opt_tol_rel * (1.0 + cost), moved


def _orbit_profile(p, t, u1, u2, A, B, cache=None):
    """Damped relaxation orbit from u1 nudged toward u2, as a dense solution.

    Returns (sol, s_end, x_end) or None; s_end marks settling near u2 or the
    closest approach to it.  Profiles are cached per endpoint pair.
    """
    u1 = np.atleast_1d(u1).astype(float)
    u2 = np.atleast_1d(u2).astype(float)
    key = (u1.tobytes(), u2.tobytes())
    if cache is not None and key in cache:
        return cache[key]
    gap = float(np.linalg.norm(u2 - u1))
    if gap == 0.0:
        return None
    dirn = (u2 - u1) / gap
    x0 = u1 + dirn * max(1e-3, 0.02 * gap)
    dim = len(u1)
    a_inv, b_m = A.inv_entries(), B.entries
    grad_fn = p.grad_fn

    def rhs(s, z):
        u, v = z[:dim], z[dim:]
        return np.concatenate([v, a_inv @ (-(b_m @ v + grad_fn(t, u)))])

    # force-scaled settling near the target: parking the blend where gradF is
    # still large is exactly what the transition cost punishes
    settle_tol = 0.01 * (1.0 + 0.1 * gap)

    def settled(s, z):
        quiet = np.linalg.norm(grad_fn(t, z[:dim])) + np.linalg.norm(z[dim:]) - settle_tol
        near = np.linalg.norm(z[:dim] - u2) - 0.25 * gap
        return max(quiet, near)

    settled.terminal = True
    settled.direction = -1.0
    try:
        sol = solve_ivp(rhs, (0.0, 300.0), np.concatenate([x0, np.zeros(dim)]),
                        max_step=2.0, rtol=1e-7, atol=1e-9, dense_output=True,
                        events=[settled])
    except Exception:
        return None
    if not sol.success:
        return None
    if sol.status == 1:
        s_end = float(sol.t_events[0][0])
    else:
        ss = np.linspace(0.0, sol.t[-1], 2001)
        xs = sol.sol(ss)[:dim].T
        s_end = float(ss[np.argmin(np.linalg.norm(xs - u2, axis=1))])
    x_end = sol.sol([s_end])[:dim, 0]
    out = (sol, s_end, x_end)
    if cache is not None:
        cache[key] = out
    return out


def _profile_values(p, t, u1, u2, A, B, grid_times, cache=None):
    """Sample an orbit profile from u1 to u2 on [0, T]: smooth lead-in from
    rest, the orbit (time-compressed when it does not fit), and a smooth
    blend onto u2."""
    prof = _orbit_profile(p, t, u1, u2, A, B, cache=cache)
    if prof is None:
        return None
    sol, s_end, x_end = prof
    u1 = np.atleast_1d(u1).astype(float)
    u2 = np.atleast_1d(u2).astype(float)
    span = float(grid_times[-1] - grid_times[0])
    lead = blend = min(4.0, span / 8.0)
    scale = min(1.0, (span - lead - blend) / max(s_end, 1e-9))
    grid = grid_times - grid_times[0]
    x0 = sol.sol([0.0])[: len(u1), 0]
    t1 = np.clip(grid / max(lead, 1e-12), 0.0, 1.0)[:, None]
    lead_vals = u1 + (x0 - u1) * (3 * t1**2 - 2 * t1**3)
    s_samp = np.clip((grid - lead) / max(scale, 1e-12), 0.0, s_end)
    orb_vals = sol.sol(s_samp)[: len(u1)].T
    t3 = np.clip((grid - lead - s_end * scale) / max(blend, 1e-12), 0.0, 1.0)[:, None]
    blend_vals = x_end + (u2 - x_end) * (3 * t3**2 - 2 * t3**3)
    return np.where(
        grid[:, None] < lead, lead_vals,
        np.where(grid[:, None] < lead + s_end * scale, orb_vals, blend_vals),
    )


def _frozen_rollout(p, t, u1, u2, A, B, N, m, reverse=False, cache=None):
    """Single-orbit start candidate on the full window."""
    a, b = (u1, u2) if not reverse else (u2, u1)
    grid = np.linspace(0.0, 2.0 * N, m)
    vals = _profile_values(p, t, np.atleast_1d(a), np.atleast_1d(b), A, B, grid, cache=cache)
    if vals is None:
        return None
    path = DiscretizedPath.from_values(t, N, vals, np.atleast_1d(a), np.atleast_1d(b))
    return path.reversed() if reverse else path


def _composite_rollout(p, t, u1, u2, w, A, B, N, m, cache=None):
    """Two-leg start through waypoint w.

    Each leg uses the orbit that actually reaches its target (the mirrored
    reverse orbit handles uphill legs); window shares are allocated by the
    orbits' settling times so neither ring-down gets time-compressed.
    """
    u1 = np.atleast_1d(u1).astype(float)
    u2 = np.atleast_1d(u2).astype(float)
    w = np.atleast_1d(w).astype(float)
    legs = []
    for a, b in ((u1, w), (w, u2)):
        gap = float(np.linalg.norm(b - a))
        if gap == 0.0:
            return None
        direct = _orbit_profile(p, t, a, b, A, B, cache=cache)
        rev = _orbit_profile(p, t, b, a, A, B, cache=cache)
        use_rev = False
        s_need = None
        if direct is not None and np.linalg.norm(direct[2] - b) <= 0.05 * gap + 1e-9:
            s_need = direct[1]
        elif rev is not None and np.linalg.norm(rev[2] - a) <= 0.05 * gap + 1e-9:
            use_rev, s_need = True, rev[1]
        elif direct is not None:
            s_need = direct[1]
        else:
            return None
        legs.append((a, b, use_rev, s_need + 8.0))
    total = sum(leg[3] for leg in legs)
    spans = [2.0 * N * leg[3] / total for leg in legs]
    k1 = max(9, min(m - 9, int(round(m * spans[0] / (2.0 * N)))))
    ks = (k1, m - k1)
    halves = []
    for (a, b, use_rev, _), span, k in zip(legs, spans, ks):
        grid = np.linspace(0.0, span, k)
        if use_rev:
            vals = _profile_values(p, t, b, a, A, B, grid, cache=cache)
            vals = None if vals is None else vals[::-1]
        else:
            vals = _profile_values(p, t, a, b, A, B, grid, cache=cache)
        if vals is None:
            return None
        halves.append(vals)
    return DiscretizedPath.from_values(t, N, np.vstack(halves), u1, u2)


def minimize_cost(p: Potential, t: float, u1, u2, A: SpdMatrix, B: SpdMatrix,
                  opts: CostOptions = CostOptions(), _orbit_cache=None) -> CostResult:
    """Best cost over a ladder of windows and a structured multistart.

    The window half-width runs through ``opts.n_schedule`` (the infimum over
    a larger window is no larger, so the reported value is monotone along
    the ladder); each level is warm-started by constant extension of the
    previous optimum and additionally tries a straight line, piecewise-linear
    detours through every other stationary point, the damped relaxation
    orbit in both orientations, and one seeded random perturbation.
    """
    u1 = np.atleast_1d(np.asarray(u1, dtype=float))
    u2 = np.atleast_1d(np.asarray(u2, dtype=float))
    if np.array_equal(u1, u2):
        m = max(9, int(round(2 * opts.n_schedule[0] / opts.target_h)) + 1)
        path = DiscretizedPath.line(t, opts.n_schedule[0], m, u1, u2)
        return CostResult(0.0, path, opts.n_schedule[0], 0, True, 0.0)

    from .critical import find_critical_points  # local import; no cycle

    waypoints = list(opts.waypoints)
    try:
        for cp in find_critical_points(p, t, grid_per_axis=64 if p.dim == 1 else 8):
            if (np.linalg.norm(cp.location - u1) > 1e-8
                    and np.linalg.norm(cp.location - u2) > 1e-8):
                waypoints.append(cp.location)
    except Exception:
        pass

    rng = np.random.default_rng(opts.seed)
    orbit_cache = _orbit_cache if _orbit_cache is not None else {}
    best = None  # (value, path, gnorm, converged)
    moved_any = False
    restarts_used = 0
    level_values = []
    schedule = tuple(opts.n_schedule)
    for level, N in enumerate(schedule):
        last = level == len(schedule) - 1
        m = int(round(2 * N / opts.target_h)) + 1
        starts = []
        if best is not None:
            warm = best[1].values
            ext = np.tile(u2, (m, 1))
            ext[: warm.shape[0]] = warm[:m]
            starts.append(DiscretizedPath.from_values(t, N, ext, u1, u2))
        if level == 0:
            # full structural multistart on the cheapest window; the winning
            # basin is carried up the ladder by the warm start
            starts.append(DiscretizedPath.line(t, N, m, u1, u2))
            for wpt in waypoints:
                starts.append(DiscretizedPath.through_waypoint(t, N, m, u1, wpt, u2))
            bump = np.sin(np.pi * np.linspace(0, 1, m))[:, None] * rng.standard_normal((1, len(u1)))
            starts.append(DiscretizedPath.from_values(
                t, N, DiscretizedPath.line(t, N, m, u1, u2).values + 0.5 * bump, u1, u2))
        if opts.use_rollout and (level == 0 or last):
            # orbit-shaped candidates: direct, mirrored, and two-leg detours
            for rev in (False, True):
                ro = _frozen_rollout(p, t, u1, u2, A, B, N, m, reverse=rev, cache=orbit_cache)
                if ro is not None:
                    starts.append(ro)
            for wpt in waypoints:
                comp = _composite_rollout(p, t, u1, u2, wpt, A, B, N, m, cache=orbit_cache)
                if comp is not None:
                    starts.append(comp)

        screened = []
        for k, start in enumerate(starts):
            # cheap filter: skip cold starts that open far above the incumbent
            if best is not None and k > 0:
                if cost_functional(start, p, A, B) > 10.0 * (best[0] + 1.0):
                    continue
            restarts_used += 1
            val, pth, gnorm, conv, moved = _gn_minimize(
                start, p, A, B, opts, maxiter=opts.maxiter)
            moved_any = moved_any or moved
            cand = (val, pth, gnorm, conv)
            screened.append(cand)
            if best is None or _beats(cand, best):
                best = cand
        if last and screened:
            # polish the contenders (near-winners may sit in a better basin
            # that needs the full budget to reveal itself)
            screened.sort(key=lambda c: c[0])
            lead = screened[0][0]
            for cand0 in screened[:3]:
                if cand0[0] > 1.15 * (lead + 1e-9) + 1e-9:
                    break
                restarts_used += 1
                val, pth, gnorm, conv, moved = _gn_minimize(
                    cand0[1], p, A, B, opts, maxiter=opts.maxiter_final)
                moved_any = moved_any or moved
                cand = (val, pth, gnorm, conv)
                if _beats(cand, best):
                    best = cand
        level_values.append(float(best[0]))
        if (
            not last
            and len(level_values) >= 2
            and level_values[-2] - level_values[-1]
            < opts.level_stop_rel * (1.0 + abs(level_values[-1]))
        ):
            # window growth exhausted; run the orbit candidates once at this
            # final width before leaving the ladder
            extra = []
            for rev in (False, True):
                ro = _frozen_rollout(p, t, u1, u2, A, B, N, m, reverse=rev, cache=orbit_cache)
                if ro is not None:
                    extra.append(ro)
            for wpt in waypoints:
                comp = _composite_rollout(p, t, u1, u2, wpt, A, B, N, m, cache=orbit_cache)
                if comp is not None:
                    extra.append(comp)
            screened = [best]
            for start in extra:
                if cost_functional(start, p, A, B) > 10.0 * (best[0] + 1.0):
                    continue
                restarts_used += 1
                val, pth, gnorm, conv, moved = _gn_minimize(
                    start, p, A, B, opts, maxiter=opts.maxiter)
                moved_any = moved_any or moved
                screened.append((val, pth, gnorm, conv))
            screened.sort(key=lambda c: c[0])
            lead = screened[0][0]
            for cand0 in screened[:3]:
                if cand0[0] > 1.15 * (lead + 1e-9) + 1e-9:
                    break
                restarts_used += 1
                val, pth, gnorm, conv, moved = _gn_minimize(
                    cand0[1], p, A, B, opts, maxiter=opts.maxiter_final)
                moved_any = moved_any or moved
                cand = (val, pth, gnorm, conv)
                if _beats(cand, best):
                    best = cand
            level_values[-1] = float(best[0])
            break
    if best is None or (not moved_any and not best[3]):
        raise DidNotConverge("no restart made progress", best=best)
    value, path, gnorm, conv = best
    return CostResult(
        value=float(value), path=path, N_used=float(path.N),
        restarts_used=restarts_used, converged=bool(conv), gradient_norm=float(gnorm),
        level_values=tuple(level_values),
    )


def _arc_length(path: DiscretizedPath) -> float:
    return float(np.sum(np.linalg.norm(np.diff(path.values, axis=0), axis=1)))


def _beats(a, b) -> bool:
    """Smaller value wins; near-ties go to the shorter path."""
    if a[0] < b[0] - 1e-12:
        return True
    if abs(a[0] - b[0]) <= 1e-12:
        return _arc_length(a[1]) < _arc_length(b[1])
    return False


@dataclass
class AxiomReport:
    points: list
    values: np.ndarray  # ordered cost matrix, diagonal exactly zero
    sym_max_rel: float
    lower_bound_min_margin: float  # min over pairs of c(a,b) - |F(a)-F(b)|
    triangle_max_violation: float  # max over triples of c(a,b) - c(a,m) - c(m,b)
    diag_zero: bool

    def passes(self, sym_tol=1e-2, bound_tol=1e-3, triangle_tol=1e-3) -> bool:
        return (
            self.diag_zero
            and self.sym_max_rel <= sym_tol
            and self.lower_bound_min_margin >= -bound_tol
            and self.triangle_max_violation <= triangle_tol
        )


def _concat_paths(a: DiscretizedPath, b: DiscretizedPath) -> DiscretizedPath:
    """Join two clamped paths end-to-start on the combined window."""
    vals = np.vstack([a.values, b.values[1:]])
    return DiscretizedPath.from_values(a.t, a.N + b.N, vals, a.u1, b.u2)


def _repolish(path, p, A, B, opts, maxiter):
    val, pth, gnorm, conv, _ = _gn_minimize(path, p, A, B, opts, maxiter=maxiter)
    return val, pth


def check_cost_axioms(p: Potential, t: float, points, A: SpdMatrix, B: SpdMatrix,
                      opts: CostOptions = CostOptions()) -> AxiomReport:
    """Evaluate symmetry, the energy-gap lower bound, and the triangle
    inequality on every ordered pair/triple from ``points``.

    After the independent pairwise runs, a refinement sweep re-polishes each
    pair from the reversed optimum of its mirror and from concatenations of
    optimal sub-paths.  Those are ordinary admissible starts on wider
    windows; they matter because within a fixed window a direct run cannot
    represent a detour whose legs need the window twice over.
    """
    if len(points) < 2:
        raise DimensionMismatch("need at least two points")
    pts = [np.atleast_1d(np.asarray(q, dtype=float)) for q in points]
    k = len(pts)
    c = np.zeros((k, k))
    paths = {}
    shared_orbits = {}
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            res = minimize_cost(p, t, pts[i], pts[j], A, B, opts,
                                _orbit_cache=shared_orbits)
            c[i, j] = res.value
            paths[(i, j)] = res.path
    for _ in range(3):
        improved = False
        for i in range(k):
            for j in range(k):
                if i == j:
                    continue
                cands = []
                if c[j, i] < c[i, j] - 1e-9:
                    cands.append(paths[(j, i)].reversed())
                for l in range(k):
                    if l in (i, j):
                        continue
                    if c[i, l] + c[l, j] < c[i, j] - 1e-6:
                        cands.append(_concat_paths(paths[(i, l)], paths[(l, j)]))
                for cand in cands:
                    val, pth = _repolish(cand, p, A, B, opts, maxiter=100)
                    if val < c[i, j] - 1e-12:
                        c[i, j] = val
                        paths[(i, j)] = pth
                        improved = True
        if not improved:
            break
    f_vals = [p.f(t, q) for q in pts]
    sym = 0.0
    bound = np.inf
    for i in range(k):
        for j in range(i + 1, k):
            scale = max(abs(c[i, j]), abs(c[j, i]), 1e-30)
            sym = max(sym, abs(c[i, j] - c[j, i]) / scale)
            bound = min(bound, c[i, j] - abs(f_vals[i] - f_vals[j]))
            bound = min(bound, c[j, i] - abs(f_vals[i] - f_vals[j]))
    tri = -np.inf
    for i in range(k):
        for j in range(k):
            for l in range(k):
                if len({i, j, l}) < 3:
                    continue
                tri = max(tri, c[i, j] - c[i, l] - c[l, j])
    return AxiomReport(
        points=pts, values=c, sym_max_rel=float(sym),
        lower_bound_min_margin=float(bound), triangle_max_violation=float(tri),
        diag_zero=bool(np.all(np.diag(c) == 0.0)),
    )
