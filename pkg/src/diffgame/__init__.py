"""Simulator and verification harness for approximate public-signal
correlated equilibria in two-player nonzero-sum differential games."""

from .errors import ConfigurationError, LatticeRefusal, NumericError
from .games import (
    ControlGrid,
    GameSpec,
    Trajectory,
    eval_rhs,
    integrate_step,
    make_game,
    terminal_payoffs,
)
from .guides import (
    GeneratorSpec,
    check_condition_stability,
    check_noise_conditions,
    estimate_psi,
    martingale_residual,
    mirror_guide,
    sample_guide_batch,
    sample_guide_path,
    sigma_and_g,
)
from .shift import (
    ShiftConstants,
    alpha_tilde,
    decision_bound,
    epsilon_modulus,
    select_extremal,
    theorem_epsilon,
)
from .values import (
    ClosedFormPair,
    GridPair,
    ZeroSumValue,
    clip,
    eval_value_and_gradient,
    load_lattice,
    make_pair,
    save_lattice,
    smooth_case_residuals,
    solve_parabolic_system,
    solve_zero_sum_value,
)
from .equilibrium import (
    CorrelatedProfile,
    DeviationSpec,
    RolloutRecord,
    SignalState,
    advance_signal,
    build_profile,
    deviation_gain,
    estimate_equilibrium,
    limit_experiment,
    nash_payoff_check,
    rollout,
    uniform_partition,
    verify_tracking_bounds,
)
from .scenario import Scenario, run_scenario

__version__ = "0.1.0"
