"""Vanishing inertia-and-viscosity limits of damped potential systems.

The package integrates eps^2 A u'' + eps B u' + gradF(t, u) = 0 across a
decreasing sweep of eps, extracts the limiting evolution, certifies its
jumps through an energy-dissipation transition cost and chains of
heteroclinic orbits of the unscaled equation, and verifies the resulting
energy balance.
"""

__version__ = "0.1.0"

from .algebra import SpdMatrix, eig_sym, q_inv_norm, q_norm, spd_from_entries
from .cost import (
    AxiomReport,
    CostOptions,
    CostResult,
    DiscretizedPath,
    check_cost_axioms,
    cost_functional,
    cost_gradient,
    minimize_cost,
)
from .critical import CriticalPoint, classify, find_critical_points, min_gap, newton_polish
from .flow import (
    DissipationMeasure,
    EnergyLedger,
    StepControl,
    Trajectory,
    apriori_diagnostics,
    dissipation_measure,
    integrate_gradient_flow,
    integrate_second_order,
)
from .heteroclinic import (
    ChainOptions,
    Heteroclinic,
    JumpChain,
    build_jump_chain,
    linearize_equilibrium,
    shoot_first_order,
    shoot_heteroclinic,
)
from .limit import (
    BalanceReport,
    CertifyOptions,
    JumpRecord,
    LimitReport,
    LimitThresholds,
    SweepConfig,
    certify_jumps,
    estimate_limit,
    run_epsilon_sweep,
    verify_energy_balance,
)
from .potentials import (
    AppendixSpec,
    AssumptionReport,
    Potential,
    build_potential,
    make_appendix,
    make_custom_spline,
    make_quadratic,
    minimizer_curve_appendix,
    verify_assumptions,
)

__all__ = [name for name in dir() if not name.startswith("_")]
