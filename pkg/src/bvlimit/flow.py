"""Integration of the damped dynamics with an exact energy ledger.

Both the second-order system

    eps^2 A u'' + eps B u' + gradF(t, u) = 0

and the overdamped comparison flow  eps D u' + gradF(t, u) = 0  are driven
through scipy's adaptive Dormand-Prince pair with the step size capped at a
fraction of eps.  The viscous dissipation eps int ||u'||_B^2 and the power
int dF/dt are integrated as extra state components, so the energy-identity
residual at the checkpoints reflects integrator error only, not checkpoint
quadrature error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .algebra import SpdMatrix
from .errors import BlowUp, MissingVelocities, StepUnderflow
from .potentials import Potential

TOL_ENERGY = 1e-6


@dataclass(frozen=True)
class StepControl:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step_factor: float = 0.5  # cap = factor * eps
    checkpoints_per_unit: int = 2000
    box_inflation: float = 0.5
    tol_energy: float = TOL_ENERGY

    def scaled(self, tol: float) -> "StepControl":
        """Same control with rtol replaced (atol follows three decades below)."""
        return StepControl(
            rtol=tol,
            atol=tol * 1e-3,
            max_step_factor=self.max_step_factor,
            checkpoints_per_unit=self.checkpoints_per_unit,
            box_inflation=self.box_inflation,
            tol_energy=self.tol_energy,
        )


@dataclass
class EnergyLedger:
    """Per-checkpoint energy bookkeeping.

    ``dissipation`` and ``power`` are the accumulated integrals from the
    start of the span.  ``residuals`` is R(t) - R(t0) with
    R = dissipation + kinetic + potential - power; the residual of the
    energy identity between any checkpoint pair (s, t) is R(t) - R(s).
    """

    times: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    dissipation: np.ndarray
    power: np.ndarray
    g_values: np.ndarray
    residuals: np.ndarray
    tol_energy: float = TOL_ENERGY

    def max_pair_residual(self) -> float:
        return float(self.residuals.max() - self.residuals.min())

    def g_increase_max(self) -> float:
        """Largest increase of g over any checkpoint pair (0 when monotone)."""
        running_min = np.minimum.accumulate(self.g_values)
        return float(np.max(self.g_values - running_min)) if len(self.g_values) else 0.0

    def scale(self) -> float:
        return 1.0 + float(np.abs(self.potential).max())


@dataclass
class Trajectory:
    epsilon: float
    order: int  # 2 = inertial, 1 = overdamped
    times: np.ndarray
    states: np.ndarray  # (n_t, dim)
    velocities: Optional[np.ndarray]  # (n_t, dim) or None for order 1
    ledger: EnergyLedger
    A: Optional[SpdMatrix]
    B: SpdMatrix
    potential_name: str = ""

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def to_csv(self, path) -> None:
        n = self.dim
        cols = ["t"]
        cols += [f"u_{i+1}" for i in range(n)]
        cols += [f"v_{i+1}" for i in range(n)]
        cols += ["F", "kinetic", "dissipation", "power", "g", "residual"]
        led = self.ledger
        vel = self.velocities if self.velocities is not None else np.zeros_like(self.states)
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for k in range(len(self.times)):
                row = [self.times[k], *self.states[k], *vel[k], led.potential[k],
                       led.kinetic[k], led.dissipation[k], led.power[k],
                       led.g_values[k], led.residuals[k]]
                fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


@dataclass
class DissipationMeasure:
    edges: np.ndarray
    masses: np.ndarray
    total: float


def _checkpoint_grid(span, ctrl: StepControl) -> np.ndarray:
    t0, t1 = span
    n = max(int(round((t1 - t0) * ctrl.checkpoints_per_unit)), 1) + 1
    return np.linspace(t0, t1, n)


def _box_event(p: Potential, ctrl: StepControl, dim: int):
    box = p.inflated_box(ctrl.box_inflation)

    def event(t, z):
        u = z[:dim]
        return float(np.min(np.minimum(u - box[:, 0], box[:, 1] - u)))

    event.terminal = True
    event.direction = -1.0
    return event


def _run_ivp(rhs, span, z0, ctrl, max_step, events, dense=False):
    sol = solve_ivp(
        rhs,
        span,
        z0,
        method="RK45",
        t_eval=None if dense else _checkpoint_grid(span, ctrl),
        dense_output=dense,
        rtol=ctrl.rtol,
        atol=ctrl.atol,
        max_step=max_step,
        events=events,
    )
    return sol


def _ledger_second_order(ts, us, vs, q1, q2, p, A, eps, tol) -> EnergyLedger:
    kin = 0.5 * eps**2 * np.array([A.q_norm(v) ** 2 for v in vs])
    pot = np.array([p.f(t, u) for t, u in zip(ts, us)])
    g = pot + kin - q2
    r = q1 + kin + pot - q2
    return EnergyLedger(
        times=ts, kinetic=kin, potential=pot, dissipation=q1, power=q2,
        g_values=g, residuals=r - r[0], tol_energy=tol,
    )


def integrate_second_order(
    p: Potential,
    A: SpdMatrix,
    B: SpdMatrix,
    epsilon: float,
    u0,
    v0,
    span,
    ctrl: StepControl = StepControl(),
) -> Trajectory:
    """Solve eps^2 A u'' + eps B u' + gradF = 0 on ``span`` from (u0, v0)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    dim = p.dim
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    t0, t1 = span
    if t1 == t0:
        ts = np.array([t0])
        led = _ledger_second_order(ts, u0[None], v0[None], np.zeros(1), np.zeros(1), p, A, epsilon, ctrl.tol_energy)
        return Trajectory(epsilon, 2, ts, u0[None].copy(), v0[None].copy(), led, A, B, p.name)

    a_inv = A.inv_entries()
    b_m = B.entries
    grad_fn, dt_fn = p.grad_fn, p.dt_fn

    def rhs(t, z):
        u, v = z[:dim], z[dim : 2 * dim]
        bv = b_m @ v
        acc = a_inv @ (-(epsilon * bv + grad_fn(t, u))) / epsilon**2
        return np.concatenate([v, acc, [epsilon * (v @ bv), dt_fn(t, u)]])

    z0 = np.concatenate([u0, v0, [0.0, 0.0]])
    sol = _run_ivp(rhs, (t0, t1), z0, ctrl, ctrl.max_step_factor * epsilon, [_box_event(p, ctrl, dim)])
    if sol.status == 1:  # terminated by the box event
        raise BlowUp(f"state left the safety box at t={sol.t_events[0][0]:.6g}", t_exit=float(sol.t_events[0][0]))
    if not sol.success:
        raise StepUnderflow(sol.message)
    ts = sol.t
    us = sol.y[:dim].T
    vs = sol.y[dim : 2 * dim].T
    if not np.all(np.isfinite(us)):
        raise BlowUp("non-finite state", t_exit=float(ts[np.argmax(~np.isfinite(us).all(axis=1))]))
    led = _ledger_second_order(ts, us, vs, sol.y[2 * dim], sol.y[2 * dim + 1], p, A, epsilon, ctrl.tol_energy)
    return Trajectory(epsilon, 2, ts, us, vs, led, A, B, p.name)


def integrate_gradient_flow(
    p: Potential,
    epsilon: float,
    u0,
    span,
    ctrl: StepControl = StepControl(),
    damping: Optional[SpdMatrix] = None,
) -> Trajectory:
    """Solve eps D u' + gradF = 0; D defaults to the identity."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    dim = p.dim
    D = damping if damping is not None else SpdMatrix.identity(dim)
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    t0, t1 = span
    if t1 == t0:
        ts = np.array([t0])
        led = EnergyLedger(
            times=ts, kinetic=np.zeros(1), potential=np.array([p.f(t0, u0)]),
            dissipation=np.zeros(1), power=np.zeros(1),
            g_values=np.array([p.f(t0, u0)]), residuals=np.zeros(1), tol_energy=ctrl.tol_energy,
        )
        return Trajectory(epsilon, 1, ts, u0[None].copy(), None, led, None, D, p.name)

    d_inv = D.inv_entries()
    d_m = D.entries
    grad_fn, dt_fn = p.grad_fn, p.dt_fn

    def rhs(t, z):
        u = z[:dim]
        du = -(d_inv @ grad_fn(t, u)) / epsilon
        return np.concatenate([du, [epsilon * (du @ (d_m @ du)), dt_fn(t, u)]])

    z0 = np.concatenate([u0, [0.0, 0.0]])
    sol = _run_ivp(rhs, (t0, t1), z0, ctrl, ctrl.max_step_factor * epsilon, [_box_event(p, ctrl, dim)])
    if sol.status == 1:
        raise BlowUp(f"state left the safety box at t={sol.t_events[0][0]:.6g}", t_exit=float(sol.t_events[0][0]))
    if not sol.success:
        raise StepUnderflow(sol.message)
    ts = sol.t
    us = sol.y[:dim].T
    q1, q2 = sol.y[dim], sol.y[dim + 1]
    pot = np.array([p.f(t, u) for t, u in zip(ts, us)])
    g = pot - q2
    r = q1 + pot - q2
    led = EnergyLedger(
        times=ts, kinetic=np.zeros_like(q1), potential=pot, dissipation=q1,
        power=q2, g_values=g, residuals=r - r[0], tol_energy=ctrl.tol_energy,
    )
    return Trajectory(epsilon, 1, ts, us, None, led, None, D, p.name)


@dataclass
class DiagnosticsReport:
    """The eight a-priori monitors of the inertial system."""

    sup_state: float
    sup_eps_velocity: float
    sup_eps2_acceleration: float
    viscous_dissipation: float
    combined_force_l2: float  # (1/2eps) int ||gradF + eps^2 A u''||^2
    inertial_power: float  # eps |int <u'', gradF>|
    gradient_l2: float  # (1/2eps) int ||gradF||^2
    acceleration_l2: float  # eps^3 int ||u''||^2

    def as_dict(self) -> dict:
        return {
            "sup_state": self.sup_state,
            "sup_eps_velocity": self.sup_eps_velocity,
            "sup_eps2_acceleration": self.sup_eps2_acceleration,
            "viscous_dissipation": self.viscous_dissipation,
            "combined_force_l2": self.combined_force_l2,
            "inertial_power": self.inertial_power,
            "gradient_l2": self.gradient_l2,
            "acceleration_l2": self.acceleration_l2,
        }


def apriori_diagnostics(traj: Trajectory, p: Potential, A: SpdMatrix, B: SpdMatrix) -> DiagnosticsReport:
    """Checkpoint estimates of the eight boundedness monitors.

    u'' is reconstructed exactly from the equation of motion rather than
    finite-differenced, so the L2 monitors are quadrature-limited only.
    """
    if traj.velocities is None:
        raise MissingVelocities("a-priori diagnostics need a second-order trajectory")
    eps = traj.epsilon
    ts, us, vs = traj.times, traj.states, traj.velocities
    grads = np.stack([p.grad(t, u) for t, u in zip(ts, us)])
    accs = np.stack([A.solve(-(eps * B.matvec(v) + g)) / eps**2 for v, g in zip(vs, grads)])

    def l2(fvals):
        return float(np.trapezoid(fvals, ts)) if len(ts) > 1 else 0.0

    norms = np.linalg.norm
    combined = grads + eps**2 * np.stack([A.matvec(a) for a in accs])
    return DiagnosticsReport(
        sup_state=float(norms(us, axis=1).max()),
        sup_eps_velocity=float(eps * norms(vs, axis=1).max()),
        sup_eps2_acceleration=float(eps**2 * norms(accs, axis=1).max()),
        viscous_dissipation=float(traj.ledger.dissipation[-1]),
        combined_force_l2=l2(norms(combined, axis=1) ** 2) / (2 * eps),
        inertial_power=eps * abs(l2(np.sum(accs * grads, axis=1))),
        gradient_l2=l2(norms(grads, axis=1) ** 2) / (2 * eps),
        acceleration_l2=eps**3 * l2(norms(accs, axis=1) ** 2),
    )


def dissipation_measure(traj: Trajectory, B: SpdMatrix, bins: int) -> DissipationMeasure:
    """Binned mass of eps ||u'||_B^2 dt.

    Masses are increments of the ledger's accumulated dissipation, so the
    total telescopes to the ledger value exactly.
    """
    if traj.velocities is None:
        raise MissingVelocities("the dissipation measure needs a second-order trajectory")
    if bins < 1:
        raise ValueError("need at least one bin")
    edges = np.linspace(traj.times[0], traj.times[-1], bins + 1)
    acc = np.interp(edges, traj.times, traj.ledger.dissipation)
    masses = np.diff(acc)
    return DissipationMeasure(edges=edges, masses=masses, total=float(traj.ledger.dissipation[-1] - traj.ledger.dissipation[0]))
