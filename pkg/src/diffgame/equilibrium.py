"""Public-signal correlated profiles and their verification experiments.

The profile couples the real motion to three simulated guides sharing one
public randomness stream: Y0 follows the joint equilibrium policy, while Y1
and Y2 are punishment guides that stay glued to Y0 until a deviation is
detected.  On each partition step the players aim at their guide with the
extremal-shift selector; deviation detection compares the one-step forecast
statistic Psi against the quantitative decision bound.  Everything random is
keyed by (master_seed, rollout_id, step, branch) so rollouts are bit-for-bit
reproducible and the public signal is identical across counterfactual paths
that agree at the partition nodes.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, LatticeRefusal, NumericError
from .games import Array, GameSpec, Trajectory, as_control, integrate_step, terminal_payoffs
from .guides import (
    GeneratorSpec,
    RelaxedControlPolicy,
    check_noise_conditions,
    estimate_psi,
    sample_guide_batch,
)
from .shift import ShiftConstants, decision_bound, select_extremal, theorem_epsilon
from .values import ZeroSumValue

# RNG branch tags
BRANCH_Y0, BRANCH_Y1, BRANCH_Y2, BRANCH_PSI, BRANCH_DEV = 0, 1, 2, 3, 4


def rng_stream(master_seed: int, rollout_id: int, step: int, branch: int) -> np.random.Generator:
    """Deterministic counter-based stream keyed by (seed, rollout, step, branch)."""
    digest = hashlib.blake2b(
        struct.pack("<qqqq", master_seed, rollout_id, step, branch), digest_size=16
    ).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))


# ---------------------------------------------------------------------------
# profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelatedProfile:
    game: GameSpec
    guide: GeneratorSpec
    pair: object  # ClosedFormPair or GridPair
    partition: Array
    eq_policy: RelaxedControlPolicy
    punish1: Callable[[Array], RelaxedControlPolicy]  # frozen v -> mixture
    punish2: Callable[[Array], RelaxedControlPolicy]  # frozen u -> mixture
    constants: ShiftConstants
    psi_mode: str = "closed-form"  # or "mc"
    psi_n_inner: int = 256
    master_seed: int = 0
    ode_substeps: int = 4
    guide_substeps: int = 16
    noise_convention: str = "dimension-adjusted"

    @property
    def d_delta(self) -> float:
        return float(np.max(np.diff(self.partition)))


def uniform_partition(t0: float, T: float, n: int) -> Array:
    return np.linspace(t0, T, n + 1)


def build_profile(
    game: GameSpec,
    guide: GeneratorSpec,
    pair,
    partition: Array,
    eq_policy: RelaxedControlPolicy,
    punish1: Callable,
    punish2: Callable,
    constants: ShiftConstants | None = None,
    psi_mode: str = "closed-form",
    psi_n_inner: int = 256,
    master_seed: int = 0,
    noise_convention: str = "dimension-adjusted",
    boundary_tol: float = 1e-9,
) -> CorrelatedProfile:
    """Validate the ingredients and assemble an immutable profile.

    Checks the pair's terminal boundary condition on a sample cloud, runs the
    guide-closeness audit under the scenario's delta convention, and checks
    the partition is increasing over the horizon.
    """
    partition = np.asarray(partition, dtype=float)
    if partition.ndim != 1 or len(partition) < 2 or np.any(np.diff(partition) <= 0):
        raise ConfigurationError("partition must be an increasing time grid")
    if abs(partition[-1] - game.horizon) > 1e-12:
        raise ConfigurationError("partition must end at the horizon")
    rng = np.random.default_rng(12345)
    cloud = rng.uniform(-2.0, 2.0, size=(64, game.dim))
    b1 = np.max(np.abs(np.asarray(pair.value(1, game.horizon, cloud)) - np.asarray(game.gamma1(cloud))))
    b2 = np.max(np.abs(np.asarray(pair.value(2, game.horizon, cloud)) - np.asarray(game.gamma2(cloud))))
    if max(float(b1), float(b2)) > max(boundary_tol, 1e-3):
        raise ConfigurationError(
            f"value pair violates the terminal boundary condition (residual {max(float(b1), float(b2)):.3e})"
        )
    audit = check_noise_conditions(guide, game, convention=noise_convention)
    if not audit.passed:
        raise ConfigurationError(
            "guide fails the noise-closeness audit "
            f"(sigma {audit.max_sigma_ratio:.3f}, drift {audit.max_drift_gap_ratio:.3f}, "
            f"reward {audit.max_reward_ratio:.3f})"
        )
    if psi_mode not in ("closed-form", "mc"):
        raise ConfigurationError(f"unknown psi mode {psi_mode!r}")
    mix = eq_policy.mixture(float(partition[0]), np.zeros(game.dim))
    if not mix.support_in(game.u_grid, game.v_grid):
        raise ConfigurationError("equilibrium policy support outside control grids")
    if constants is None:
        constants = ShiftConstants.from_game(game, guide.delta)
    return CorrelatedProfile(
        game=game,
        guide=guide,
        pair=pair,
        partition=partition,
        eq_policy=eq_policy,
        punish1=punish1,
        punish2=punish2,
        constants=constants,
        psi_mode=psi_mode,
        psi_n_inner=psi_n_inner,
        master_seed=master_seed,
        noise_convention=noise_convention,
    )


# ---------------------------------------------------------------------------
# signal state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SignalState:
    k: int
    Y0: Array
    Y1: Array
    Y2: Array
    switched: bool
    theta: float | None
    carry: float
    last_psi: float = 0.0
    last_bound: float = 0.0


def initial_signal_state(x0: Array) -> SignalState:
    x0 = np.asarray(x0, dtype=float)
    return SignalState(
        k=0, Y0=x0.copy(), Y1=x0.copy(), Y2=x0.copy(),
        switched=False, theta=None, carry=0.0,
    )


def signal_controls(
    profile: CorrelatedProfile, state: SignalState, x_prev: Array
) -> tuple[Array, Array]:
    """Aim-point controls for the interval starting at the current node:
    player 1 steers toward Y1, player 2 toward Y2."""
    t = float(profile.partition[state.k])
    u_star, _ = select_extremal(profile.game, "u-toward", t, x_prev, state.Y1)
    v_star, _ = select_extremal(profile.game, "v-toward", t, x_prev, state.Y2)
    return u_star, v_star


def _advance_guide(
    profile: CorrelatedProfile,
    y: Array,
    s: float,
    r: float,
    policy: RelaxedControlPolicy,
    rng: np.random.Generator,
) -> Array:
    batch = sample_guide_batch(
        profile.guide, s, r, y, policy, profile.guide_substeps, rng, n=1
    )
    return batch.terminal[0]


def advance_signal(
    profile: CorrelatedProfile,
    state: SignalState,
    x_prev: Array,
    x_now: Array,
    rollout_id: int,
) -> tuple[SignalState, Array, Array]:
    """One step of the public signal: detection, then guide advances.

    Evaluates the forecast statistic Psi(x_now, Y0) for the step just
    traversed and compares it against the decision bound with the carried
    squared gap.  A violation flips the absorbing ``switched`` flag and
    records theta at the last node where all inequalities held.  Y0 advances
    under the joint policy; the punishment guides either stay glued to Y0 or,
    after the switch, advance under the punishment mixtures against the
    opponent's worst-case (gap-maximizing) frozen control.

    Returns the new state plus the aim controls (u*, v*) that applied on the
    traversed interval (computed from the pre-advance guide states).
    """
    k = state.k + 1
    if k >= len(profile.partition):
        raise ConfigurationError("partition exhausted")
    t_prev = float(profile.partition[k - 1])
    t_now = float(profile.partition[k])
    dt = t_now - t_prev
    u_star, v_star = signal_controls(profile, state, x_prev)

    if profile.psi_mode == "closed-form":
        psi, half = estimate_psi(
            profile.guide, t_prev, t_now, x_now, state.Y0, profile.eq_policy,
            n_inner=0, mode="closed-form",
        )
        psi_cmp = psi
    else:
        rng_psi = rng_stream(profile.master_seed, rollout_id, k, BRANCH_PSI)
        psi, half = estimate_psi(
            profile.guide, t_prev, t_now, x_now, state.Y0, profile.eq_policy,
            n_inner=profile.psi_n_inner, rng=rng_psi,
            substeps=profile.guide_substeps, mode="mc",
        )
        # conservative comparison: never switch on MC noise alone
        psi_cmp = psi + half
    bound = decision_bound(profile.constants, state.carry, dt)

    switched = state.switched
    theta = state.theta
    if not switched and psi_cmp > bound:
        switched = True
        theta = t_prev

    rng0 = rng_stream(profile.master_seed, rollout_id, k, BRANCH_Y0)
    Y0 = _advance_guide(profile, state.Y0, t_prev, t_now, profile.eq_policy, rng0)
    if switched:
        v_sharp, _ = select_extremal(profile.game, "v-away", t_prev, x_prev, state.Y1)
        u_sharp, _ = select_extremal(profile.game, "u-away", t_prev, x_prev, state.Y2)
        rng1 = rng_stream(profile.master_seed, rollout_id, k, BRANCH_Y1)
        rng2 = rng_stream(profile.master_seed, rollout_id, k, BRANCH_Y2)
        Y1 = _advance_guide(
            profile, state.Y1, t_prev, t_now, profile.punish1(v_sharp), rng1
        )
        Y2 = _advance_guide(
            profile, state.Y2, t_prev, t_now, profile.punish2(u_sharp), rng2
        )
    else:
        Y1 = Y0.copy()
        Y2 = Y0.copy()

    new_state = SignalState(
        k=k, Y0=Y0, Y1=Y1, Y2=Y2, switched=switched, theta=theta,
        carry=float(np.sum((np.asarray(x_now, dtype=float) - Y0) ** 2)),
        last_psi=psi_cmp, last_bound=bound,
    )
    return new_state, u_star, v_star


# ---------------------------------------------------------------------------
# deviations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeviationSpec:
    """A unilateral replacement of one player's control rule."""

    player: int = 0  # 0 = no deviation
    kind: str = "none"  # none | constant | random | feedback | zero-sum-optimal
    control: tuple[float, ...] | None = None
    law: object | None = None  # FeedbackLaw for kind="feedback"
    val: ZeroSumValue | None = None  # for kind="zero-sum-optimal"

    def __post_init__(self):
        if self.kind != "none" and self.player not in (1, 2):
            raise ConfigurationError("deviation must name player 1 or 2")
        if self.kind == "constant" and self.control is None:
            raise ConfigurationError("constant deviation needs a control")
        if self.kind == "feedback" and self.law is None:
            raise ConfigurationError("feedback deviation needs a law")
        if self.kind == "zero-sum-optimal" and self.val is None:
            raise ConfigurationError("zero-sum-optimal deviation needs a value grid")


NO_DEVIATION = DeviationSpec()


def _nearest_grid_control(grid, w: Array) -> Array:
    d2 = np.sum((grid.array - np.asarray(w, dtype=float)) ** 2, axis=1)
    return grid.array[int(np.argmin(d2))].copy()


def _deviation_control(
    profile: CorrelatedProfile,
    deviation: DeviationSpec,
    k: int,
    t: float,
    dt: float,
    x: Array,
    rollout_id: int,
) -> Array:
    game = profile.game
    grid = game.u_grid if deviation.player == 1 else game.v_grid
    if deviation.kind == "constant":
        return as_control(deviation.control)
    if deviation.kind == "random":
        rng = rng_stream(profile.master_seed, rollout_id, k, BRANCH_DEV)
        return grid.array[int(rng.integers(0, len(grid)))].copy()
    if deviation.kind == "feedback":
        g1 = np.asarray(profile.pair.gradient(1, t, x), dtype=float)
        g2 = np.asarray(profile.pair.gradient(2, t, x), dtype=float)
        fn = deviation.law.u_fn if deviation.player == 1 else deviation.law.v_fn
        return _nearest_grid_control(grid, as_control(fn(t, x, g1, g2)))
    if deviation.kind == "zero-sum-optimal":
        # one-step lookahead on the deviator's own guaranteed-value grid
        val = deviation.val
        own_grid = grid
        adv_grid = game.v_grid if deviation.player == 1 else game.u_grid
        best, best_ctrl = -math.inf, own_grid.array[0]
        for own in own_grid.array:
            worst = math.inf
            for adv in adv_grid.array:
                u, v = (own, adv) if deviation.player == 1 else (adv, own)
                foot = x + dt * (game.f1(t, x, u) + game.f2(t, x, v))
                worst = min(worst, float(val.value(t + dt, foot)))
            if worst > best:
                best, best_ctrl = worst, own
        return np.asarray(best_ctrl, dtype=float).copy()
    raise ConfigurationError(f"unknown deviation kind {deviation.kind!r}")


# ---------------------------------------------------------------------------
# rollouts
# ---------------------------------------------------------------------------


@dataclass
class RolloutRecord:
    rollout_id: int
    trajectory: Trajectory
    y0: Array  # (n+1, d) guide trace at partition nodes
    y1: Array
    y2: Array
    u_star: Array  # (n, du) recommended aim controls
    v_star: Array
    u_applied: Array
    v_applied: Array
    psi: Array  # (n,)
    bound: Array  # (n,)
    gap_sq: Array  # (n+1,) squared distance ||x - Y0|| at nodes
    theta: float | None
    switched: bool
    payoffs: tuple[float, float]


def rollout(
    profile: CorrelatedProfile,
    x0: Array,
    deviation: DeviationSpec = NO_DEVIATION,
    rollout_id: int = 0,
) -> RolloutRecord:
    """One realization of the coupled (motion, signal) system."""
    game = profile.game
    part = profile.partition
    n = len(part) - 1
    d = game.dim
    x = np.asarray(x0, dtype=float).copy()
    state = initial_signal_state(x)
    X = np.empty((n + 1, d))
    X[0] = x
    Y0 = np.empty((n + 1, d)); Y0[0] = state.Y0
    Y1 = np.empty((n + 1, d)); Y1[0] = state.Y1
    Y2 = np.empty((n + 1, d)); Y2[0] = state.Y2
    du = game.u_grid.dim
    dv = game.v_grid.dim
    us = np.empty((n, du)); vs = np.empty((n, dv))
    ua = np.empty((n, du)); va = np.empty((n, dv))
    psi = np.empty(n); bnd = np.empty(n)
    gap = np.empty(n + 1)
    gap[0] = 0.0
    for k in range(1, n + 1):
        t_prev = float(part[k - 1])
        dt = float(part[k] - part[k - 1])
        u, v = signal_controls(profile, state, x)
        us[k - 1], vs[k - 1] = u, v
        u_app, v_app = u, v
        if deviation.kind != "none":
            dev = _deviation_control(profile, deviation, k, t_prev, dt, x, rollout_id)
            if deviation.player == 1:
                u_app = dev
            else:
                v_app = dev
        ua[k - 1], va[k - 1] = u_app, v_app
        x_new = integrate_step(game, t_prev, x, u_app, v_app, dt, profile.ode_substeps)
        state, _, _ = advance_signal(profile, state, x, x_new, rollout_id)
        x = x_new
        X[k] = x
        Y0[k], Y1[k], Y2[k] = state.Y0, state.Y1, state.Y2
        psi[k - 1] = state.last_psi
        bnd[k - 1] = state.last_bound
        gap[k] = state.carry
    traj = Trajectory(times=part.copy(), states=X)
    if not traj.check_lipschitz(game.M):
        raise NumericError("trajectory violates the velocity bound")
    return RolloutRecord(
        rollout_id=rollout_id,
        trajectory=traj,
        y0=Y0, y1=Y1, y2=Y2,
        u_star=us, v_star=vs, u_applied=ua, v_applied=va,
        psi=psi, bound=bnd, gap_sq=gap,
        theta=state.theta, switched=state.switched,
        payoffs=terminal_payoffs(game, x),
    )


def run_rollouts(
    profile: CorrelatedProfile,
    x0: Array,
    deviation: DeviationSpec = NO_DEVIATION,
    n_rollouts: int = 100,
    threads: int = 1,
) -> list[RolloutRecord]:
    ids = range(n_rollouts)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda i: rollout(profile, x0, deviation, i), ids))
    return [rollout(profile, x0, deviation, i) for i in ids]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _mean_se(vals: Array) -> tuple[float, float]:
    vals = np.asarray(vals, dtype=float)
    m = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return m, se


@dataclass
class EquilibriumReport:
    n_rollouts: int
    mean_payoffs: tuple[float, float]
    ci_half: tuple[float, float]
    target_values: tuple[float, float]
    gaps: tuple[float, float]
    epsilon_limit: float
    epsilon_at_fineness: float
    d_delta: float
    delta: float
    switch_fraction: float
    passed: bool


def estimate_equilibrium(
    profile: CorrelatedProfile,
    x0: Array,
    n_rollouts: int,
    records: list[RolloutRecord] | None = None,
    threads: int = 1,
) -> EquilibriumReport:
    """Monte Carlo estimate of the on-profile outcome against the target
    values c_i(t0, x0), judged against the refined-partition tolerance."""
    if n_rollouts < 2 and records is None:
        raise ConfigurationError("need at least 2 rollouts")
    if records is None:
        records = run_rollouts(profile, x0, NO_DEVIATION, n_rollouts, threads)
    t0 = float(profile.partition[0])
    targets = (
        float(profile.pair.value(1, t0, np.asarray(x0, dtype=float))),
        float(profile.pair.value(2, t0, np.asarray(x0, dtype=float))),
    )
    p1, se1 = _mean_se([r.payoffs[0] for r in records])
    p2, se2 = _mean_se([r.payoffs[1] for r in records])
    eps_limit = theorem_epsilon(profile.constants, 0.0)
    eps_fine = theorem_epsilon(profile.constants, profile.d_delta)
    gaps = (abs(p1 - targets[0]), abs(p2 - targets[1]))
    return EquilibriumReport(
        n_rollouts=len(records),
        mean_payoffs=(p1, p2),
        ci_half=(1.96 * se1, 1.96 * se2),
        target_values=targets,
        gaps=gaps,
        epsilon_limit=eps_limit,
        epsilon_at_fineness=eps_fine,
        d_delta=profile.d_delta,
        delta=profile.guide.delta,
        switch_fraction=float(np.mean([r.switched for r in records])),
        passed=bool(gaps[0] <= eps_limit and gaps[1] <= eps_limit),
    )


@dataclass
class DeviationReport:
    player: int
    kind: str
    n_rollouts: int
    baseline_mean: float
    deviated_mean: float
    gain: float
    gain_se: float
    epsilon_limit: float
    switch_fraction: float
    theta_lt_T_fraction: float
    passed: bool


def deviation_gain(
    profile: CorrelatedProfile,
    x0: Array,
    deviation: DeviationSpec,
    n_rollouts: int,
    threads: int = 1,
    base_records: list[RolloutRecord] | None = None,
) -> DeviationReport:
    """Estimated payoff gain of a unilateral deviation, paired by rollout id
    (common random numbers) against the on-profile baseline."""
    if deviation.kind != "none" and deviation.player not in (1, 2):
        raise ConfigurationError("deviation must name a player")
    if base_records is None:
        base_records = run_rollouts(profile, x0, NO_DEVIATION, n_rollouts, threads)
    dev_records = run_rollouts(profile, x0, deviation, n_rollouts, threads)
    i = deviation.player - 1 if deviation.player in (1, 2) else 0
    base = np.array([r.payoffs[i] for r in base_records])
    dev = np.array([r.payoffs[i] for r in dev_records])
    diffs = dev - base
    gain, se = _mean_se(diffs)
    eps_limit = theorem_epsilon(profile.constants, 0.0)
    T = float(profile.partition[-1])
    thetas = [r.theta for r in dev_records]
    return DeviationReport(
        player=deviation.player,
        kind=deviation.kind,
        n_rollouts=n_rollouts,
        baseline_mean=float(np.mean(base)),
        deviated_mean=float(np.mean(dev)),
        gain=gain,
        gain_se=se,
        epsilon_limit=eps_limit,
        switch_fraction=float(np.mean([r.switched for r in dev_records])),
        theta_lt_T_fraction=float(
            np.mean([(th is not None and th < T) for th in thetas])
        ),
        passed=bool(gain <= eps_limit + 3 * se),
    )


@dataclass
class TrackingReport:
    pre_switch_identity_fraction: float
    step_pass_fraction: float
    n_steps: int
    terminal_mean_gap_sq: float
    terminal_se: float
    terminal_bound: float
    passed: bool


def verify_tracking_bounds(
    profile: CorrelatedProfile, records: Sequence[RolloutRecord]
) -> TrackingReport:
    """Check the per-step and terminal tracking inequalities on a rollout set.

    (a) the punishment guides equal Y0 bit-exactly at all pre-switch nodes;
    (b) per step, the sample mean of the squared gap does not exceed the mean
        of the decision bound applied to the previous gap, within 3 SE;
    (c) the terminal mean squared gap is below
        ``(4 delta^2 + eps(d_delta)) T e^{beta T}`` within 3 SE.
    """
    from .shift import epsilon_modulus

    part = profile.partition
    n = len(part) - 1
    ident_ok = 0
    total = 0
    for r in records:
        T = float(part[-1])
        # nodes strictly before the switch step (all nodes when no switch)
        limit = n + 1
        if r.theta is not None:
            limit = int(np.searchsorted(part, r.theta, side="right"))
        for k in range(limit):
            total += 1
            if np.array_equal(r.y1[k], r.y0[k]) and np.array_equal(r.y2[k], r.y0[k]):
                ident_ok += 1
    gaps = np.stack([r.gap_sq for r in records])  # (m, n+1)
    step_pass = 0
    for k in range(1, n + 1):
        dt = float(part[k] - part[k - 1])
        bounds = np.array(
            [decision_bound(profile.constants, g, dt) for g in gaps[:, k - 1]]
        )
        diffs = gaps[:, k] - bounds
        m, se = _mean_se(diffs)
        if m <= 3 * se:
            step_pass += 1
    term_mean, term_se = _mean_se(gaps[:, -1])
    c = profile.constants
    term_bound = (
        (4.0 * c.delta**2 + epsilon_modulus(c, profile.d_delta))
        * c.T
        * math.exp(c.beta * c.T)
    )
    passed = (
        ident_ok == total
        and step_pass >= math.ceil(0.99 * n)
        and term_mean <= term_bound + 3 * term_se
    )
    return TrackingReport(
        pre_switch_identity_fraction=ident_ok / max(total, 1),
        step_pass_fraction=step_pass / n,
        n_steps=n,
        terminal_mean_gap_sq=term_mean,
        terminal_se=term_se,
        terminal_bound=term_bound,
        passed=bool(passed),
    )


# ---------------------------------------------------------------------------
# Nash-payoff membership
# ---------------------------------------------------------------------------


@dataclass
class NashCheck:
    passed: bool
    min_margin: tuple[float, float]  # min over nodes of gamma_i(x(T)) - Val_i
    velocity_ok: bool


def nash_payoff_check(
    trajectory: Trajectory,
    val1: ZeroSumValue,
    val2: ZeroSumValue,
    game: GameSpec,
    tol: float,
) -> NashCheck:
    """Does a trajectory support Nash payoffs?

    Requires ``gamma_i(x(T)) >= Val_i(t_k, x(t_k)) - tol`` for both players at
    every node, and each step's average velocity to lie in the convex hull of
    the attainable joint velocities (within ``tol``).
    """
    for val in (val1, val2):
        if not val.in_box(trajectory.states):
            raise LatticeRefusal("trajectory exits the value lattice")
    xT = trajectory.states[-1]
    g = (float(game.gamma1(xT)), float(game.gamma2(xT)))
    margins = [math.inf, math.inf]
    ok = True
    for k, t in enumerate(trajectory.times):
        for i, val in ((0, val1), (1, val2)):
            m = g[i] - float(val.value(t, trajectory.states[k]))
            margins[i] = min(margins[i], m)
            if m < -tol:
                ok = False
    vel_ok = _velocities_in_hull(trajectory, game, tol)
    return NashCheck(
        passed=bool(ok and vel_ok),
        min_margin=(margins[0], margins[1]),
        velocity_ok=vel_ok,
    )


def _velocities_in_hull(trajectory: Trajectory, game: GameSpec, tol: float) -> bool:
    times, states = trajectory.times, trajectory.states
    d = game.dim
    for k in range(len(times) - 1):
        dt = times[k + 1] - times[k]
        w = (states[k + 1] - states[k]) / dt
        t, x = float(times[k]), states[k]
        vels = []
        for u in game.u_grid.array:
            f1 = game.f1(t, x, u)
            for v in game.v_grid.array:
                vels.append(f1 + game.f2(t, x, v))
        vels = np.asarray(vels)
        if d == 1:
            lo, hi = float(np.min(vels)), float(np.max(vels))
            if not (lo - tol <= w[0] <= hi + tol):
                return False
        else:
            from scipy.spatial import ConvexHull, QhullError

            try:
                hull = ConvexHull(vels)
                if np.any(hull.equations[:, :d] @ w + hull.equations[:, d] > tol):
                    return False
            except QhullError:
                # degenerate velocity set: fall back to a bounding-box check
                if np.any(w < np.min(vels, axis=0) - tol) or np.any(
                    w > np.max(vels, axis=0) + tol
                ):
                    return False
    return True


# ---------------------------------------------------------------------------
# limit experiment
# ---------------------------------------------------------------------------


@dataclass
class LimitRow:
    delta: float
    targets: tuple[float, float]
    mean_payoffs: tuple[float, float]
    ci_half: tuple[float, float]
    gaps: tuple[float, float]
    epsilon_limit: float


@dataclass
class LimitReport:
    rows: list
    limit_point: tuple[float, float]
    nash_passed: bool | None
    monotone_within_ci: bool


def limit_experiment(
    make_profile: Callable[[float], CorrelatedProfile],
    deltas: Sequence[float],
    x0: Array,
    n_rollouts: int,
    val1: ZeroSumValue | None = None,
    val2: ZeroSumValue | None = None,
    nash_tol: float = 0.05,
    threads: int = 1,
) -> LimitReport:
    """Outcome table over a vanishing-noise family of profiles.

    For each delta: target values, Monte Carlo outcome means, tolerance.  The
    limit point is the target pair of the smallest delta.  If zero-sum value
    grids are supplied, the empirical mean path of the smallest-delta family
    member is checked for Nash-payoff membership.
    """
    rows: list[LimitRow] = []
    last_records = None
    last_profile = None
    for dl in deltas:
        profile = make_profile(dl)
        records = run_rollouts(profile, x0, NO_DEVIATION, n_rollouts, threads)
        rep = estimate_equilibrium(profile, x0, n_rollouts, records=records)
        rows.append(
            LimitRow(
                delta=dl,
                targets=rep.target_values,
                mean_payoffs=rep.mean_payoffs,
                ci_half=rep.ci_half,
                gaps=rep.gaps,
                epsilon_limit=rep.epsilon_limit,
            )
        )
        if last_records is None or dl < last_profile.guide.delta:
            last_records, last_profile = records, profile
    # monotone convergence within CI: gaps may not increase as delta shrinks
    order = np.argsort([-row.delta for row in rows])
    mono = True
    prev = None
    for j in order:
        row = rows[j]
        g = max(row.gaps)
        ci = max(row.ci_half)
        if prev is not None and g > prev[0] + prev[1] + ci:
            mono = False
        prev = (g, ci)
    nash_passed = None
    if val1 is not None and val2 is not None:
        mean_path = np.mean(
            np.stack([r.trajectory.states for r in last_records]), axis=0
        )
        traj = Trajectory(times=last_profile.partition.copy(), states=mean_path)
        nash_passed = nash_payoff_check(
            traj, val1, val2, last_profile.game, nash_tol
        ).passed
    return LimitReport(
        rows=rows,
        limit_point=rows[-1].targets,
        nash_passed=nash_passed,
        monotone_within_ci=mono,
    )
