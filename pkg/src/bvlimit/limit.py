"""Sweep orchestration and the limit evolution it determines.

The sweep integrates the dynamics for a decreasing list of eps on a shared
checkpoint grid.  The limit estimate is the smallest-eps trajectory; jump
windows are found where the dissipation mass concentrates AND the state
increment is comparable to the separation of stationary points.  Each jump
is then certified at a frozen time: the jump time is refined by polishing
the saddle-node condition (gradF = 0 with singular Hessian) that terminates
the pre-jump branch, the one-sided limits are polished onto stationary
points, the dissipation atom is read off the accumulated ledger, the
transition cost is minimized, and a chain of connecting orbits is assembled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .algebra import SpdMatrix
from .cost import CostOptions, minimize_cost
from .critical import find_critical_points, min_gap, newton_polish
from .errors import ChainStuck, NoConvergence
from .flow import StepControl, Trajectory, integrate_gradient_flow, integrate_second_order
from .heteroclinic import ChainOptions, build_jump_chain
from .potentials import Potential


@dataclass
class SweepConfig:
    potential: Potential
    B: SpdMatrix
    epsilons: tuple
    span: tuple
    A: Optional[SpdMatrix] = None
    dynamics: str = "second-order"  # or "first-order"
    ctrl: StepControl = field(default_factory=StepControl)
    u0_rule: Optional[callable] = None  # eps -> u0
    v0_rule: Optional[callable] = None  # eps -> v0
    u0: Optional[np.ndarray] = None
    v0: Optional[np.ndarray] = None

    def __post_init__(self):
        eps = tuple(self.epsilons)
        if len(eps) < 3:
            raise ValueError("a sweep needs at least 3 epsilon values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must decrease")
        ratios = [a / b for a, b in zip(eps, eps[1:])]
        if any(r < 1.5 or r > 4.0 for r in ratios):
            raise ValueError(f"consecutive epsilon ratios must lie in [1.5, 4], got {ratios}")
        self.epsilons = eps
        if self.dynamics == "second-order" and self.A is None:
            raise ValueError("second-order dynamics needs the mass matrix A")

    def initial_state(self, eps):
        u0 = self.u0_rule(eps) if self.u0_rule is not None else self.u0
        v0 = self.v0_rule(eps) if self.v0_rule is not None else self.v0
        if u0 is None:
            raise ValueError("no initial state configured")
        return np.atleast_1d(np.asarray(u0, dtype=float)), (
            None if v0 is None else np.atleast_1d(np.asarray(v0, dtype=float))
        )


@dataclass
class LimitThresholds:
    agree_cap: float = 5e-2
    atom_fraction: float = 2e-2  # a bin is "hot" above this share of the total mass
    jump_threshold: Optional[float] = None  # default 0.25 * min gap of the stationary set
    coarse_bins: int = 150
    flank_points: int = 10
    stab_tol: float = 5e-2
    balance_tol: float = 5e-2
    noconv_fraction: float = 0.2
    atom_window_scale: float = 40.0  # window half-width = scale * eps * ||A|| / coercivity(B)
    # ring-down amplitude goes like sqrt(remaining energy), so the bracket
    # must chase the dissipation tail far down for the off-bracket gradient
    # residual to clear stab_tol
    tail_mass_fraction: float = 1e-6


@dataclass
class JumpRecord:
    t_star: float
    bracket: tuple
    u_minus: np.ndarray
    u_plus: np.ndarray
    energy_drop: float = np.nan
    mu_atom: float = np.nan
    cost_value: Optional[float] = None
    chain: object = None
    chain_cost: Optional[float] = None
    atom_vs_drop: float = np.nan
    cost_vs_drop: Optional[float] = None
    initial_datum: bool = False
    failures: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return not self.failures


@dataclass
class LimitReport:
    times: np.ndarray
    limit: np.ndarray  # (n, dim) raw limit from the smallest eps
    agree_flags: np.ndarray
    jumps: list
    dynamics: str
    epsilons: tuple
    convergence_table: list  # per consecutive eps pair: sup difference outside brackets
    disagreement_fraction: float
    stability_residuals: np.ndarray  # |gradF| at grid times, nan inside brackets
    f_values: Optional[np.ndarray] = None
    bv_limit: Optional[np.ndarray] = None
    dissipation_acc: Optional[np.ndarray] = None

    def bracket_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.times), dtype=bool)
        for rec in self.jumps:
            a, b = rec.bracket
            mask |= (self.times >= a) & (self.times <= b)
        return mask


@dataclass
class BalanceReport:
    max_residual: float
    f_monotone_slack: float
    residual_profile: np.ndarray
    scale: float

    def passes(self, tol: float) -> bool:
        return self.max_residual <= tol * self.scale and self.f_monotone_slack <= tol * self.scale


def run_epsilon_sweep(cfg: SweepConfig) -> list:
    """One trajectory per eps, all on the same checkpoint grid."""
    out = []
    for eps in cfg.epsilons:
        u0, v0 = cfg.initial_state(eps)
        if cfg.dynamics == "second-order":
            traj = integrate_second_order(
                cfg.potential, cfg.A, cfg.B, eps, u0,
                v0 if v0 is not None else np.zeros_like(u0), cfg.span, cfg.ctrl,
            )
        else:
            traj = integrate_gradient_flow(cfg.potential, eps, u0, cfg.span, cfg.ctrl, damping=cfg.B)
        out.append(traj)
    return out


def _concentration_groups(times, acc, thresholds: LimitThresholds):
    """Contiguous coarse bins carrying at least atom_fraction of the mass."""
    edges = np.linspace(times[0], times[-1], thresholds.coarse_bins + 1)
    masses = np.diff(np.interp(edges, times, acc))
    total = acc[-1] - acc[0]
    if total <= 0:
        return []
    hot = masses >= thresholds.atom_fraction * total
    groups = []
    start = None
    for i, flag in enumerate(hot):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            groups.append((edges[start], edges[i]))
            start = None
    if start is not None:
        groups.append((edges[start], edges[-1]))
    return groups


def estimate_limit(trajs: list, p: Potential, thresholds: LimitThresholds = LimitThresholds()) -> LimitReport:
    """Pointwise limit from the smallest eps, plus jump windows.

    Raises NoConvergence when the two smallest trajectories disagree beyond
    the cap on more than ``noconv_fraction`` of the grid outside the detected
    concentration windows (inside a window transient disagreement is the
    expected behaviour at finite eps).
    """
    if len(trajs) < 3:
        raise ValueError("need at least 3 trajectories")
    trajs = sorted(trajs, key=lambda tr: tr.epsilon, reverse=True)
    small, second = trajs[-1], trajs[-2]
    times = small.times
    u = small.states
    diff = np.linalg.norm(u - second.states, axis=1)
    agree = diff <= thresholds.agree_cap

    acc = small.ledger.dissipation
    groups = _concentration_groups(times, acc, thresholds)

    jump_threshold = thresholds.jump_threshold
    records = []
    fl = thresholds.flank_points
    for gi, (lo, hi) in enumerate(groups):
        ia = int(np.searchsorted(times, lo))
        ib = min(int(np.searchsorted(times, hi)), len(times) - 1)
        # extend the right edge over the slow dissipation tail (ring-down)
        limit_idx = len(times) - 1
        if gi + 1 < len(groups):
            limit_idx = int(np.searchsorted(times, groups[gi + 1][0])) - 1
        group_mass = acc[min(limit_idx, len(acc) - 1)] - acc[ia]
        if group_mass > 0:
            remaining = acc[limit_idx] - acc[ib:limit_idx + 1]
            grown = np.nonzero(remaining <= thresholds.tail_mass_fraction * group_mass)[0]
            if len(grown):
                ib = ib + int(grown[0])
        ia = max(ia - 2, 0)
        left = u[max(ia - fl, 0) : ia] if ia > 0 else u[:1]
        right = u[ib + 1 : ib + 1 + fl] if ib + 1 < len(times) else u[-1:]
        u_minus_raw = np.median(left, axis=0) if len(left) else u[0]
        u_plus_raw = np.median(right, axis=0) if len(right) else u[-1]
        # seed time: cell with the largest dissipation mass inside the window
        cell_mass = np.diff(acc[ia : ib + 1])
        t_seed = float(times[ia + int(np.argmax(cell_mass))]) if len(cell_mass) else float(0.5 * (lo + hi))
        thr = jump_threshold
        if thr is None:
            try:
                pts = find_critical_points(p, t_seed, grid_per_axis=64 if p.dim == 1 else 8)
                thr = 0.25 * min_gap(pts) if len(pts) >= 2 else None
            except Exception:
                thr = None
        if thr is None:
            med = np.median(np.abs(np.diff(u, axis=0)).sum(axis=1))
            thr = 10.0 * max(med, 1e-8)
        if float(np.linalg.norm(u_plus_raw - u_minus_raw)) > thr:
            records.append(
                JumpRecord(
                    t_star=t_seed, bracket=(float(times[ia]), float(times[ib])),
                    u_minus=u_minus_raw, u_plus=u_plus_raw,
                    initial_datum=bool(ia <= 1),
                )
            )

    mask = np.zeros(len(times), dtype=bool)
    for rec in records:
        a, b = rec.bracket
        mask |= (times >= a) & (times <= b)
    outside = ~mask
    frac = float(np.mean(~agree[outside])) if outside.any() else 0.0
    if frac > thresholds.noconv_fraction:
        raise NoConvergence(
            f"smallest two eps disagree on {100 * frac:.1f}% of the grid outside jump windows"
        )

    table = []
    for a, b in zip(trajs[:-1], trajs[1:]):
        d = np.linalg.norm(a.states - b.states, axis=1)
        table.append(float(d[outside].max()) if outside.any() else float(d.max()))

    stab = np.array([float(np.linalg.norm(p.grad(t, q))) for t, q in zip(times, u)])

    f_raw = _f_values(times, u, p)
    return LimitReport(
        times=times, limit=u, agree_flags=agree, jumps=records,
        dynamics="second-order" if small.order == 2 else "first-order",
        epsilons=tuple(tr.epsilon for tr in trajs),
        convergence_table=table, disagreement_fraction=frac,
        stability_residuals=stab, f_values=f_raw,
        dissipation_acc=acc,
    )


def _f_values(times, states, p):
    dtf = np.array([p.dt(t, q) for t, q in zip(times, states)])
    power = np.concatenate([[0.0], np.cumsum(0.5 * (dtf[1:] + dtf[:-1]) * np.diff(times))])
    fv = np.array([p.f(t, q) for t, q in zip(times, states)])
    return fv - power


def _fold_polish(p, t0, x0, max_iter=60):
    """Joint Newton on (gradF(t,x), det hess(t,x)) = 0: the branch fold."""
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    t = float(t0)
    n = p.dim
    for _ in range(max_iter):
        g = p.grad(t, x)
        h = p.hess(t, x)
        det = float(np.linalg.det(h))
        r = np.concatenate([g, [det]])
        if np.linalg.norm(r) < 1e-11:
            return t, x
        # Jacobian of the residual in (x, t)
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = h
        J[:n, n] = p.dt_grad(t, x)
        step = 1e-6
        for j in range(n):
            e = np.zeros(n)
            e[j] = step * (1.0 + abs(x[j]))
            J[n, j] = (np.linalg.det(p.hess(t, x + e)) - np.linalg.det(p.hess(t, x - e))) / (2 * e[j])
        J[n, n] = (np.linalg.det(p.hess(t + step, x)) - np.linalg.det(p.hess(t - step, x))) / (2 * step)
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise NoConvergence("singular fold system")
        x = x + delta[:n]
        t = t + float(delta[n])
    raise NoConvergence("fold polish did not converge")


@dataclass
class CertifyOptions:
    cost_opts: CostOptions = field(default_factory=CostOptions)
    chain_opts: ChainOptions = field(default_factory=ChainOptions)
    tol_crit: float = 1e-8
    with_cost: bool = True


def certify_jumps(report: LimitReport, p: Potential, A: Optional[SpdMatrix], B: SpdMatrix,
                  opts: CertifyOptions = CertifyOptions(),
                  thresholds: LimitThresholds = LimitThresholds()) -> LimitReport:
    """Complete every jump record in place; failures are recorded, not raised."""
    first_order = report.dynamics == "first-order"
    eps_min = report.epsilons[-1]
    times, acc = report.times, report.dissipation_acc
    span = (float(times[0]), float(times[-1]))
    w_atom = max(
        5.0 * (times[1] - times[0]),
        thresholds.atom_window_scale * eps_min * ((A.operator_norm if A is not None else 1.0) / B.coercivity),
    )
    for rec in report.jumps:
        t_left = rec.bracket[0]
        accept_radius = max(0.25 * float(np.linalg.norm(rec.u_plus - rec.u_minus)), 1e-3)
        # --- jump time and left limit ---
        try:
            if rec.initial_datum and np.linalg.norm(p.grad(span[0], rec.u_minus)) > opts.tol_crit:
                rec.t_star = span[0]
                # u_minus stays the raw initial datum
            else:
                # a branch that dies at a fold is the generic cause of the jump;
                # polish the fold first, else fall back to an ordinary polish
                placed = False
                try:
                    t_fold, x_fold = _fold_polish(p, t_left, rec.u_minus)
                    in_window = rec.bracket[0] - 10 * w_atom <= t_fold <= rec.bracket[1]
                    if in_window and np.linalg.norm(x_fold - rec.u_minus) <= accept_radius:
                        rec.t_star, rec.u_minus = float(t_fold), x_fold
                        placed = True
                except NoConvergence:
                    pass
                if not placed:
                    cand = newton_polish(p, t_left, rec.u_minus, tol=opts.tol_crit)
                    if np.linalg.norm(cand - rec.u_minus) > accept_radius:
                        raise NoConvergence("left limit polished away from the flank value")
                    rec.u_minus = cand
                    rec.t_star = t_left
        except NoConvergence as exc:
            rec.failures.append(f"left limit: {exc}")
            continue
        # --- right limit ---
        try:
            rec.u_plus = newton_polish(p, rec.t_star, rec.u_plus, tol=opts.tol_crit)
        except NoConvergence as exc:
            rec.failures.append(f"right limit: {exc}")
            continue
        if float(np.linalg.norm(p.grad(rec.t_star, rec.u_plus))) > opts.tol_crit:
            rec.failures.append("right limit is not a stationary point")
            continue
        rec.energy_drop = p.f(rec.t_star, rec.u_minus) - p.f(rec.t_star, rec.u_plus)
        # --- dissipation atom from the accumulated ledger ---
        lo = max(rec.t_star - w_atom, span[0])
        hi = min(rec.t_star + w_atom, span[1])
        rec.mu_atom = float(np.interp(hi, times, acc) - np.interp(lo, times, acc))
        rec.atom_vs_drop = abs(rec.mu_atom - rec.energy_drop)
        if rec.mu_atom <= 0:
            rec.failures.append("dissipation atom is not positive")
        # --- transition cost (second-order jump identity) ---
        if opts.with_cost and not first_order:
            try:
                res = minimize_cost(p, rec.t_star, rec.u_minus, rec.u_plus, A, B, opts.cost_opts)
                rec.cost_value = res.value
                rec.cost_vs_drop = abs(res.value - rec.energy_drop)
            except Exception as exc:
                rec.failures.append(f"cost: {exc}")
        # --- chain of connecting orbits ---
        chain_opts = opts.chain_opts
        chain_opts.first_order = first_order
        chain_opts.initial_datum = rec.initial_datum
        if first_order and chain_opts.damping is None:
            chain_opts.damping = B
        try:
            rec.chain = build_jump_chain(p, rec.t_star, rec.u_minus, rec.u_plus, A, B, chain_opts)
            rec.chain_cost = rec.chain.total_cost_along
        except ChainStuck as exc:
            rec.chain = exc.partial
            rec.failures.append(f"chain: {exc}")
        except Exception as exc:
            rec.failures.append(f"chain: {exc}")
    # idealized limit: branch values inside the brackets
    bv = report.limit.copy()
    for rec in report.jumps:
        a, b = rec.bracket
        inside = (report.times >= a) & (report.times <= b)
        pre = inside & (report.times < rec.t_star)
        post = inside & (report.times >= rec.t_star)
        bv[pre] = rec.u_minus
        bv[post] = rec.u_plus
    report.bv_limit = bv
    report.f_values = _f_values(report.times, bv, p)
    return report


def verify_energy_balance(report: LimitReport, p: Potential) -> BalanceReport:
    """Residual of F(t, u+(t)) + mu([s,t]) = F(s, u-(s)) + int_s^t dF/dr dr
    over all checkpoint pairs, using the idealized limit and measured atoms."""
    u = report.bv_limit if report.bv_limit is not None else report.limit
    times = report.times
    fv = _f_values(times, u, p)
    atoms = np.zeros_like(times)
    for rec in report.jumps:
        if np.isfinite(rec.mu_atom):
            atoms[times >= rec.t_star] += rec.mu_atom
    r = fv + atoms
    max_resid = float(r.max() - r.min())
    # f must not increase along continuity regions
    mask = report.bracket_mask()
    slack = 0.0
    run_start = None
    for i in range(len(times)):
        if not mask[i]:
            if run_start is None:
                run_start = i
        else:
            if run_start is not None:
                seg = fv[run_start:i]
                slack = max(slack, float(np.max(seg - np.minimum.accumulate(seg))))
                run_start = None
    if run_start is not None:
        seg = fv[run_start:]
        slack = max(slack, float(np.max(seg - np.minimum.accumulate(seg))))
    scale = 1.0 + float(np.abs([p.f(t, q) for t, q in zip(times, u)]).max())
    return BalanceReport(
        max_residual=max_resid, f_monotone_slack=slack,
        residual_profile=r - r[0], scale=scale,
    )
