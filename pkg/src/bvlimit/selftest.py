"""Embedded invariant suite behind the ``selftest`` subcommand.

Fast sanity layer: weighted-norm identities on random SPD matrices,
derivative consistency of the registered potentials, the exactness of the
path-cost gradient, and a reduced cost-axiom check on the landmark points of
the shipped tilted potential.  ``fault`` deliberately corrupts one check to
exercise the failure path.
"""

from __future__ import annotations

import numpy as np

from .algebra import SpdMatrix, eig_sym
from .cost import CostOptions, DiscretizedPath, check_cost_axioms, cost_functional, cost_gradient
from .potentials import make_appendix, make_quadratic, verify_assumptions


def _spd_random(rng, dim):
    m = rng.standard_normal((dim, dim))
    return SpdMatrix.from_entries(dim, m @ m.T + dim * np.eye(dim))


def _check_algebra(rng, fault=None):
    for dim in (1, 2, 3, 5):
        q = _spd_random(rng, dim)
        for _ in range(20):
            z1 = rng.standard_normal(dim)
            z2 = rng.standard_normal(dim)
            lhs = abs(float(z1 @ z2))
            if fault == "algebra":
                lhs = lhs + 1.0
            if lhs > q.q_inv_norm(z1) * q.q_norm(z2) + 1e-10:
                return False, f"pairing bound violated at dim {dim}"
            prod = q.q_inv_norm(z1) * q.q_norm(z2)
            if prod > 0.5 * (q.q_inv_norm(z1) ** 2 + q.q_norm(z2) ** 2) + 1e-10:
                return False, "arithmetic-geometric bound violated"
            lhs2 = q.q_inv_norm(z1 + q.matvec(z2)) ** 2
            rhs2 = q.q_inv_norm(z1) ** 2 + 2 * float(z1 @ z2) + q.q_norm(z2) ** 2
            if abs(lhs2 - rhs2) > 1e-9 * (1 + abs(rhs2)):
                return False, "expansion identity violated"
            if abs(q.q_norm(z1) - np.linalg.norm(q.sqrt() @ z1)) > 1e-10 * (1 + q.q_norm(z1)):
                return False, "principal-root norm mismatch"
        w, v = eig_sym(q)
        recon = (v * w) @ v.T
        if np.abs(recon - q.entries).max() > 1e-10 * max(1.0, np.abs(q.entries).max()):
            return False, "eigendecomposition reconstruction failed"
    return True, ""


def _check_derivatives(rng, fault=None):
    pot, _ = make_appendix()
    if fault == "gradient":
        object.__setattr__(pot, "grad_fn", lambda t, x, _g=pot.grad_fn: 1.1 * _g(t, x))
        object.__setattr__(pot, "grad_batch_fn", None)
    rep = verify_assumptions(pot, samples=300, seed=int(rng.integers(1 << 30)))
    if not rep.flags["grad_fd"]:
        return False, f"gradient inconsistent with finite differences ({rep.grad_fd_max_rel:.2e})"
    if not rep.flags["hess_fd"] or not rep.flags["dt_fd"]:
        return False, "second/time derivative inconsistent with finite differences"
    quad = make_quadratic(2, [[0.0, 0.0], [1.0, 0.0]])
    rep_q = verify_assumptions(quad, samples=150, seed=0)
    if not all(rep_q.flags.values()):
        return False, f"quadratic potential failed: {rep_q.flags}"
    return True, ""


def _check_cost_gradient(rng, fault=None):
    pot, _ = make_appendix()
    A = SpdMatrix.identity(1)
    B = SpdMatrix.scalar(1, 0.25)
    m = 161
    vals = np.linspace(0.0, 9.0, m)[:, None]
    vals += 0.3 * np.sin(np.linspace(0, np.pi, m))[:, None] * rng.standard_normal((1, 1))
    path = DiscretizedPath.from_values(1.0, 4.0, vals, [0.0], [9.0])
    grad = cost_gradient(path, pot, A, B)
    if fault == "cost-gradient":
        grad = grad * 1.05
    idx = rng.integers(0, len(grad), 10)
    worst = 0.0
    for k in idx:
        node = 2 + int(k)
        e = 1e-6 * (1.0 + abs(path.values[node, 0]))
        vp = path.values.copy()
        vp[node, 0] += e
        vm = path.values.copy()
        vm[node, 0] -= e
        up = cost_functional(DiscretizedPath.from_values(1.0, 4.0, vp, [0.0], [9.0]), pot, A, B)
        um = cost_functional(DiscretizedPath.from_values(1.0, 4.0, vm, [0.0], [9.0]), pot, A, B)
        fd = (up - um) / (2 * e)
        worst = max(worst, abs(fd - grad[k]) / (1 + abs(fd)))
    if worst > 1e-5:
        return False, f"cost gradient off by {worst:.2e} against finite differences"
    return True, ""


def _check_cost_axioms(rng, fault=None):
    pot, spec = make_appendix()
    A = SpdMatrix.identity(1)
    B = SpdMatrix.scalar(1, 0.25)
    opts = CostOptions(n_schedule=(4.0, 8.0), target_h=1.0 / 16.0, maxiter=120)
    rep = check_cost_axioms(pot, 1.0, [[0.0], [1.0], [9.0]], A, B, opts)
    # reduced windows: keep a loose symmetry band, the exact bound/zero checks
    if not rep.diag_zero:
        return False, "self-cost is not exactly zero"
    if rep.lower_bound_min_margin < -1e-3:
        return False, f"energy-gap lower bound violated by {-rep.lower_bound_min_margin:.2e}"
    if rep.sym_max_rel > 0.05:
        return False, f"cost asymmetry {rep.sym_max_rel:.2%} at the reduced budget"
    if rep.triangle_max_violation > 5e-2:
        return False, f"triangle violation {rep.triangle_max_violation:.3e}"
    return True, ""


CHECKS = (
    ("algebra-identities", _check_algebra),
    ("derivative-consistency", _check_derivatives),
    ("cost-gradient", _check_cost_gradient),
    ("cost-axioms", _check_cost_axioms),
)


def run_selftest(fault: str | None = None, quiet: bool = False, seed: int = 0) -> int:
    rng = np.random.default_rng(seed)
    failures = []
    width = max(len(name) for name, _ in CHECKS)
    for name, check in CHECKS:
        ok, msg = check(rng, fault=fault)
        if not quiet:
            print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}{('  ' + msg) if msg else ''}")
        if not ok:
            failures.append(name)
    if failures and not quiet:
        print("failed checks: " + ", ".join(failures))
    return 1 if failures else 0
