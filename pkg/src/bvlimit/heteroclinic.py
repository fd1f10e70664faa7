"""Connecting orbits of the unscaled autonomous system A v'' + B v' + gradF_t(v) = 0.

Orbits are computed by shooting from a small offset along an unstable (or
descent) direction of an equilibrium and integrating until the state settles
at another stationary point.  Along exact solutions the transition-cost
integrand collapses to ||v'||_B^2, which is accumulated as an extra state,
so the cost carried by an accepted orbit telescopes to the energy drop up to
integrator error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .algebra import SpdMatrix
from .critical import find_critical_points, newton_polish
from .errors import ChainStuck, Escaped, NoConvergence, NoSettle, NotAnEquilibrium, NotDescent
from .potentials import Potential

ENDPOINT_TOL = 1e-5
SETTLE_TOL = 1e-7
SETTLE_RUN = 5  # consecutive checkpoints below threshold
DEGENERATE_RE = 1e-8


@dataclass(frozen=True)
class EquilibriumSpectrum:
    eigenvalues: np.ndarray  # complex, 2n of them
    eigenvectors: np.ndarray  # columns, phase-space
    unstable_directions: list  # position-space unit vectors, one per unstable eigenvalue
    degenerate: bool


@dataclass
class Heteroclinic:
    t: float
    from_point: np.ndarray
    to_point: np.ndarray
    s: np.ndarray
    v: np.ndarray  # (n_s, dim)
    v_dot: np.ndarray
    residual: float  # max ODE defect against the stated tolerance band
    endpoint_gap: float  # max of position/velocity mismatch at the two ends
    cost_along: float
    first_order: bool = False


@dataclass
class JumpChain:
    t: float
    u_minus: np.ndarray
    u_plus: np.ndarray
    links: list
    total_cost_along: float
    energy_drop: float
    waypoints: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.links)


def linearize_equilibrium(p: Potential, t: float, point, A: SpdMatrix, B: SpdMatrix,
                          tol_crit: float = 1e-7) -> EquilibriumSpectrum:
    """Spectrum of the phase-space linearization [[0, I], [-A^-1 H, -A^-1 B]]."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    g = p.grad(t, point)
    if float(np.linalg.norm(g)) > tol_crit * (1.0 + float(np.linalg.norm(point))):
        raise NotAnEquilibrium(f"gradient residual {np.linalg.norm(g):.3e} at the base point")
    n = p.dim
    H = p.hess(t, point)
    M = np.zeros((2 * n, 2 * n))
    M[:n, n:] = np.eye(n)
    M[n:, :n] = -np.linalg.solve(A.entries, H)
    M[n:, n:] = -np.linalg.solve(A.entries, B.entries)
    w, V = np.linalg.eig(M)
    order = np.argsort(w.real)
    w, V = w[order], V[:, order]
    unstable = []
    for k in range(2 * n):
        if w[k].real > DEGENERATE_RE:
            pos = V[:n, k]
            cand = pos.real if np.linalg.norm(pos.real) >= np.linalg.norm(pos.imag) else pos.imag
            norm = np.linalg.norm(cand)
            if norm > 0:
                unstable.append(cand / norm)
    return EquilibriumSpectrum(
        eigenvalues=w, eigenvectors=V, unstable_directions=unstable,
        degenerate=bool(np.any(np.abs(w.real) <= DEGENERATE_RE)),
    )


def _settle_scan(ok):
    """First index at which ``ok`` has held for SETTLE_RUN consecutive samples."""
    if len(ok) < SETTLE_RUN:
        return None
    runs = np.convolve(ok.astype(int), np.ones(SETTLE_RUN, dtype=int), mode="valid")
    hits = np.nonzero(runs >= SETTLE_RUN)[0]
    return int(hits[0]) + SETTLE_RUN - 1 if len(hits) else None


def _shoot(p, t, start_state, A, B, horizon, first_order, damping, escape_radius, rtol,
           light=False):
    """Integrate until settle; returns (s, v, v_dot, q).

    ``light`` drops the fine sampling used for defect estimation (the
    delta-robustness rerun only needs the landing point).
    """
    dim = p.dim
    from_pos = start_state[:dim].copy()
    D = damping
    grad_fn = p.grad_fn

    if first_order:
        d_inv, d_m = D.inv_entries(), D.entries

        def rhs(s, z):
            u = z[:dim]
            du = -(d_inv @ grad_fn(t, u))
            return np.concatenate([du, [du @ (d_m @ du)]])

        z0 = np.concatenate([start_state[:dim], [0.0]])
    else:
        a_inv, b_m = A.inv_entries(), B.entries

        def rhs(s, z):
            u, v = z[:dim], z[dim : 2 * dim]
            bv = b_m @ v
            acc = a_inv @ (-(bv + grad_fn(t, u)))
            return np.concatenate([v, acc, [v @ bv]])

        z0 = np.concatenate([start_state, [0.0]])

    box = p.inflated_box()
    chunk = 50.0
    ds_fine, s_fine_until = 0.01, 250.0
    s_all, v_all, vd_all, q_all = [], [], [], []
    s0 = 0.0
    settled = False
    while s0 < horizon and not settled:
        s1 = min(s0 + chunk, horizon)
        sol = solve_ivp(rhs, (s0, s1), z0, method="RK45", dense_output=True,
                        rtol=rtol, atol=rtol * 1e-3, max_step=2.0)
        if not sol.success:
            raise NoSettle(f"integrator failed at s={sol.t[-1]:.3g}: {sol.message}")
        ds = ds_fine if (s0 < s_fine_until and not light) else 0.25
        n = max(int(round((s1 - s0) / ds)), 1)
        ss = np.linspace(s0, s1, n + 1)
        Z = sol.sol(ss).T
        vs = Z[:, :dim]
        grads = p.grad_batch(t, vs)
        if first_order:
            vds = -D.solve(grads)
            qs = Z[:, dim]
        else:
            vds = Z[:, dim : 2 * dim]
            qs = Z[:, 2 * dim]
        if np.any(vs < box[:, 0]) or np.any(vs > box[:, 1]):
            raise Escaped("orbit left the safety box")
        armed = np.linalg.norm(vs - from_pos, axis=1) > escape_radius
        # near a stiff equilibrium the gradient cannot drop below the
        # integrator's position noise times the curvature; widen accordingly
        h_scale = float(np.abs(p.hess(t, vs[-1])).max())
        tol_dyn = max(SETTLE_TOL, 100.0 * rtol * (1.0 + h_scale) * (1.0 + float(np.abs(vs).max())))
        ok = (
            (np.linalg.norm(vds, axis=1) <= tol_dyn)
            & (np.linalg.norm(grads, axis=1) <= tol_dyn)
            & armed
        )
        idx = _settle_scan(ok)
        if idx is not None:
            settled = True
            ss, vs, vds, qs = ss[: idx + 1], vs[: idx + 1], vds[: idx + 1], qs[: idx + 1]
        drop_head = 1 if s_all else 0  # chunk boundaries repeat a sample
        s_all.append(ss[drop_head:])
        v_all.append(vs[drop_head:])
        vd_all.append(vds[drop_head:])
        q_all.append(qs[drop_head:])
        z0 = sol.y[:, -1]
        s0 = s1
    if not settled:
        raise NoSettle(f"horizon {horizon:g} exhausted without settling")
    return np.concatenate(s_all), np.vstack(v_all), np.vstack(vd_all), np.concatenate(q_all)


def _defect(p, t, s, v, vd, A, B, first_order, damping):
    """Max normalized ODE defect, derivatives re-estimated from the samples.

    Fourth-order centered differencing on the uniformly-sampled fine prefix;
    the stencil error stays below the defect tolerance band there.
    """
    n = len(s)
    if n < 9:
        return 0.0
    ds = s[1] - s[0]
    irregular = np.nonzero(np.abs(np.diff(s) - ds) > 1e-9 * max(ds, 1.0))[0]
    stop = int(irregular[0]) if len(irregular) else n - 1
    if stop < 9:
        return 0.0
    idx = np.arange(2, stop - 2)
    grads = p.grad_batch(t, v[idx])
    if first_order:
        vdot = (v[idx - 2] - 8 * v[idx - 1] + 8 * v[idx + 1] - v[idx + 2]) / (12 * ds)
        defect = vdot @ damping.entries.T + grads
    else:
        vddot = (vd[idx - 2] - 8 * vd[idx - 1] + 8 * vd[idx + 1] - vd[idx + 2]) / (12 * ds)
        defect = vddot @ A.entries.T + vd[idx] @ B.entries.T + grads
    scale = 1.0 + np.linalg.norm(grads, axis=1)
    return float((np.linalg.norm(defect, axis=1) / scale).max())


def _single_shot(p, t, from_point, direction, delta0, A, B, horizon, first_order,
                 damping, rtol, light=False):
    from_point = np.atleast_1d(np.asarray(from_point, dtype=float))
    dim = p.dim
    if direction is None:
        start = np.concatenate([from_point, np.zeros(dim)])
        escape = 0.0
    else:
        direction = np.atleast_1d(np.asarray(direction, dtype=float))
        direction = direction / np.linalg.norm(direction)
        probe = from_point + delta0 * direction
        if float(p.grad(t, probe) @ direction) >= 0.0:
            raise NotDescent("offset direction does not descend")
        start = np.concatenate([probe, np.zeros(dim)])
        escape = 100.0 * delta0
    D = damping if damping is not None else B
    s, v, vd, q = _shoot(p, t, start, A, B, horizon, first_order, D, escape, rtol, light=light)
    to_point = newton_polish(p, t, v[-1], tol=1e-12 * (1.0 + np.linalg.norm(v[-1])))
    gap = max(
        float(np.linalg.norm(v[0] - from_point)),
        float(np.linalg.norm(vd[0])),
        float(np.linalg.norm(v[-1] - to_point)),
        float(np.linalg.norm(vd[-1])),
    )
    residual = 0.0 if light else _defect(p, t, s, v, vd, A, B, first_order, D)
    return Heteroclinic(
        t=float(t), from_point=from_point, to_point=to_point,
        s=s, v=v, v_dot=vd, residual=residual,
        endpoint_gap=gap, cost_along=float(q[-1]), first_order=first_order,
    )


def shoot_heteroclinic(p: Potential, t: float, from_point, direction, delta0: float,
                       A: SpdMatrix, B: SpdMatrix, horizon: float = 1e4,
                       endpoint_tol: float = ENDPOINT_TOL, rtol: float = 1e-9,
                       check_robustness: bool = True) -> Heteroclinic:
    """Orbit of A v'' + B v' + gradF_t(v) = 0 leaving ``from_point``.

    ``direction`` may be None for the non-stationary initial-datum case (the
    orbit then starts exactly at rest at ``from_point``).  With a direction,
    the start is offset by ``delta0`` and the result is cross-checked at
    delta0/10: the landing point must agree within ``endpoint_tol``.
    """
    link = _single_shot(p, t, from_point, direction, delta0, A, B, horizon, False, None, rtol)
    if check_robustness and direction is not None:
        probe = _single_shot(p, t, from_point, direction, delta0 / 10.0, A, B,
                             horizon, False, None, rtol, light=True)
        drift = float(np.linalg.norm(probe.to_point - link.to_point))
        if drift > endpoint_tol:
            raise NoConvergence(f"landing point moved by {drift:.3e} under delta0/10")
    return link


def shoot_first_order(p: Potential, t: float, from_point, direction, delta0: float,
                      damping: SpdMatrix, horizon: float = 1e4,
                      endpoint_tol: float = ENDPOINT_TOL, rtol: float = 1e-9,
                      check_robustness: bool = True) -> Heteroclinic:
    """Orbit of the damped gradient flow D v' = -gradF_t(v) leaving ``from_point``."""
    link = _single_shot(p, t, from_point, direction, delta0, None, damping, horizon,
                        True, damping, rtol)
    if check_robustness and direction is not None:
        probe = _single_shot(p, t, from_point, direction, delta0 / 10.0, None, damping,
                             horizon, True, damping, rtol, light=True)
        drift = float(np.linalg.norm(probe.to_point - link.to_point))
        if drift > endpoint_tol:
            raise NoConvergence(f"landing point moved by {drift:.3e} under delta0/10")
    return link


@dataclass
class ChainOptions:
    first_order: bool = False
    damping: Optional[SpdMatrix] = None
    delta0: float = 1e-4
    horizon: float = 1e4
    endpoint_tol: float = ENDPOINT_TOL
    rtol: float = 1e-9
    initial_datum: bool = False
    check_robustness: bool = False  # per-link robustness; the demo re-checks the headline link


def _candidate_directions(p, t, point, A, B, opts: ChainOptions):
    """Unstable eigendirections when they exist, otherwise descent probes."""
    dirs = []
    try:
        spec = linearize_equilibrium(p, t, point, A, B)
        for d in spec.unstable_directions:
            dirs.extend([d, -d])
        degenerate = spec.degenerate
    except NotAnEquilibrium:
        degenerate = True
    if not dirs or degenerate:
        eye = np.eye(p.dim)
        for j in range(p.dim):
            dirs.extend([eye[j], -eye[j]])
    # keep only genuine descent offsets
    out = []
    for d in dirs:
        probe = np.atleast_1d(point) + opts.delta0 * d
        if float(p.grad(t, probe) @ d) < 0.0 and not any(np.allclose(d, e) for e in out):
            out.append(d)
    return out


def build_jump_chain(p: Potential, t: float, u_minus, u_plus, A: SpdMatrix, B: SpdMatrix,
                     opts: ChainOptions = ChainOptions()) -> JumpChain:
    """Greedy descent chain of connecting orbits from u_minus to u_plus.

    From the current point, shoot along every admissible direction; take the
    link that reaches u_plus if one does, otherwise the one with the largest
    energy drop, and recurse.  The chain length is capped by the number of
    stationary points in the box.
    """
    u_minus = np.atleast_1d(np.asarray(u_minus, dtype=float))
    u_plus = np.atleast_1d(np.asarray(u_plus, dtype=float))
    drop_total = p.f(t, u_minus) - p.f(t, u_plus)
    if float(np.linalg.norm(u_minus - u_plus)) <= opts.endpoint_tol:
        return JumpChain(t=float(t), u_minus=u_minus, u_plus=u_plus, links=[],
                         total_cost_along=0.0, energy_drop=drop_total)
    try:
        max_links = max(1, len(find_critical_points(p, t, grid_per_axis=64 if p.dim == 1 else 8)))
    except Exception:
        max_links = 8

    def one_link(point, use_initial_datum):
        candidates = []
        if use_initial_datum:
            try:
                candidates.append(_shoot_link(p, t, point, None, opts, A, B))
            except (Escaped, NoSettle, NotDescent):
                pass
        else:
            for d in _candidate_directions(p, t, point, A, B, opts):
                try:
                    candidates.append(_shoot_link(p, t, point, d, opts, A, B))
                except (Escaped, NoSettle, NotDescent, NoConvergence):
                    continue
        admissible = [c for c in candidates if p.f(t, c.to_point) < p.f(t, point) - 1e-12]
        if not admissible:
            return None
        hits = [c for c in admissible if np.linalg.norm(c.to_point - u_plus) <= 10 * opts.endpoint_tol]
        if hits:
            return hits[0]
        return max(admissible, key=lambda c: p.f(t, point) - p.f(t, c.to_point))

    links = []
    current = u_minus
    for step in range(max_links):
        link = one_link(current, opts.initial_datum and step == 0)
        if link is None:
            raise ChainStuck(
                f"no admissible link from {current} after {len(links)} links",
                partial=JumpChain(t=float(t), u_minus=u_minus, u_plus=u_plus, links=links,
                                  total_cost_along=sum(l.cost_along for l in links),
                                  energy_drop=drop_total),
            )
        links.append(link)
        current = link.to_point
        if float(np.linalg.norm(current - u_plus)) <= 10 * opts.endpoint_tol:
            break
    else:
        raise ChainStuck(
            f"chain did not reach the target within {max_links} links",
            partial=JumpChain(t=float(t), u_minus=u_minus, u_plus=u_plus, links=links,
                              total_cost_along=sum(l.cost_along for l in links),
                              energy_drop=drop_total),
        )
    return JumpChain(
        t=float(t), u_minus=u_minus, u_plus=u_plus, links=links,
        total_cost_along=float(sum(l.cost_along for l in links)),
        energy_drop=float(drop_total),
        waypoints=[l.to_point for l in links],
    )


def _shoot_link(p, t, point, direction, opts: ChainOptions, A, B):
    if opts.first_order:
        D = opts.damping if opts.damping is not None else B
        return shoot_first_order(p, t, point, direction, opts.delta0, D,
                                 horizon=opts.horizon, endpoint_tol=opts.endpoint_tol,
                                 rtol=opts.rtol, check_robustness=opts.check_robustness)
    return shoot_heteroclinic(p, t, point, direction, opts.delta0, A, B,
                              horizon=opts.horizon, endpoint_tol=opts.endpoint_tol,
                              rtol=opts.rtol, check_robustness=opts.check_robustness)
