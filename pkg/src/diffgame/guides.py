"""Auxiliary stochastic guide models.

The guide is a jump-diffusion whose generator combines a drift ``b``, a
diffusion matrix ``G = sigma sigma^T``, and a finite table of jump offsets
with rates.  Players simulate guide paths alongside the real motion and aim
at them; the guide's running rewards ``h_i`` and its closeness to the game
dynamics are constrained by a noise scale ``delta``:

    |Sigma| <= delta^2,   ||f - g||^2 <= 2 delta^2,   |h_i| <= delta,

where ``Sigma = tr G + sum_j ||y_j||^2 rate_j`` and ``g`` is the drift plus
the large-offset jump compensation.  Everything here is sampled or audited
numerically; relaxed controls are finite mixtures over the control grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, NumericError
from .games import Array, ControlGrid, GameSpec, as_control

# ---------------------------------------------------------------------------
# drift / diffusion / reward descriptors
# ---------------------------------------------------------------------------


class DriftField:
    """Guide drift ``(t, x, u, v) -> vector``, vectorized over leading axes."""

    state_independent: bool = False

    def __call__(self, t, x, u, v) -> Array:  # pragma: no cover
        raise NotImplementedError


@dataclass(frozen=True)
class GameMirrorDrift(DriftField):
    """``b = f1 + f2`` — the guide mimics the game dynamics exactly."""

    game: GameSpec

    def __call__(self, t, x, u, v):
        return self.game.f1(t, x, u) + self.game.f2(t, x, v)

    @property
    def state_independent(self) -> bool:
        return self.game.f1.state_independent and self.game.f2.state_independent


@dataclass(frozen=True)
class OffsetDrift(DriftField):
    """A base drift shifted by a constant vector (used to construct audits
    that must fail)."""

    base: DriftField
    offset: tuple[float, ...]

    def __call__(self, t, x, u, v):
        return self.base(t, x, u, v) + np.asarray(self.offset, dtype=float)

    @property
    def state_independent(self) -> bool:
        return self.base.state_independent


@dataclass(frozen=True)
class ConstantDrift(DriftField):
    vec: tuple[float, ...]
    state_independent: bool = True

    def __call__(self, t, x, u, v):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (len(self.vec),)
        return np.broadcast_to(np.asarray(self.vec, dtype=float), shape).copy()


@dataclass(frozen=True)
class ScaledIdentitySigma:
    """Constant diffusion matrix ``sigma = scale * I`` in dimension d."""

    scale: float
    dim: int
    constant: bool = True

    def __call__(self, t, x) -> Array:
        return self.scale * np.eye(self.dim)

    def gram(self, t, x) -> Array:
        """``G = sigma sigma^T``."""
        return self.scale**2 * np.eye(self.dim)


class RunningReward:
    def __call__(self, t, x, u, v):  # pragma: no cover
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroReward(RunningReward):
    def __call__(self, t, x, u, v):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.zeros(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]))


@dataclass(frozen=True)
class ConstantReward(RunningReward):
    value: float

    def __call__(self, t, x, u, v):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        return np.full(shape, self.value)


@dataclass(frozen=True)
class QuadraticControlPenalty(RunningReward):
    """``h = -coef * ||w||^2 / 2`` on the named player's own control."""

    player: int
    coef: float

    def __call__(self, t, x, u, v):
        w = np.asarray(u if self.player == 1 else v, dtype=float)
        return -self.coef * np.sum(w * w, axis=-1) / 2.0


# ---------------------------------------------------------------------------
# generator spec
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorSpec:
    """The guide's generator: drift + diffusion and/or finite jump table."""

    dim: int
    drift: DriftField
    delta: float
    sigma: ScaledIdentitySigma | None = None
    jump_offsets: Array | None = None  # (J, d)
    jump_rates: Callable[..., Array] | None = None  # (t,x,u,v) -> (J,) or constant
    h1: RunningReward = field(default_factory=ZeroReward)
    h2: RunningReward = field(default_factory=ZeroReward)

    def __post_init__(self):
        if self.delta < 0:
            raise ConfigurationError("delta must be nonnegative")
        if self.jump_offsets is not None:
            off = np.atleast_2d(np.asarray(self.jump_offsets, dtype=float))
            if np.any(np.linalg.norm(off, axis=1) == 0):
                raise ConfigurationError("zero jump offset not allowed")
            object.__setattr__(self, "jump_offsets", off)
            if self.jump_rates is None:
                raise ConfigurationError("jump offsets require jump rates")

    @property
    def has_jumps(self) -> bool:
        return self.jump_offsets is not None

    def rates_at(self, t, x, u, v) -> Array:
        r = np.asarray(self.jump_rates(t, x, u, v), dtype=float)
        if np.any(r < 0):
            raise ConfigurationError("jump rates must be nonnegative")
        return r

    def small_offset_compensation(self, t, x, u, v) -> Array:
        """``sum_{||y_j|| <= 1} y_j rate_j`` — subtracted from b when
        realizing the generator with uncompensated finite-activity jumps."""
        off = self.jump_offsets
        rates = self.rates_at(t, x, u, v)
        small = np.linalg.norm(off, axis=1) <= 1.0
        return (rates[small, None] * off[small]).sum(axis=0)


def sigma_and_g(spec: GeneratorSpec, t, x, u, v) -> tuple[float, Array]:
    """Total noise size ``Sigma`` and effective velocity ``g`` at a point.

    ``Sigma = tr G + sum_j ||y_j||^2 rate_j``;
    ``g = b + sum_{||y_j|| > 1} y_j rate_j``.
    """
    x = np.asarray(x, dtype=float)
    u, v = as_control(u), as_control(v)
    Sigma = 0.0
    if spec.sigma is not None:
        Sigma += float(np.trace(spec.sigma.gram(t, x)))
    g = spec.drift(t, x, u, v).astype(float)
    if spec.has_jumps:
        off = spec.jump_offsets
        rates = spec.rates_at(t, x, u, v)
        norms = np.linalg.norm(off, axis=1)
        Sigma += float(np.sum(norms**2 * rates))
        large = norms > 1.0
        g = g + (rates[large, None] * off[large]).sum(axis=0)
    return Sigma, g


# ---------------------------------------------------------------------------
# noise-closeness audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseAudit:
    """Sampled audit of the guide-closeness conditions."""

    convention: str
    max_sigma_ratio: float          # Sigma / delta^2 under the chosen convention
    max_sigma_ratio_strict: float   # Sigma / delta^2, no dimension adjustment
    max_drift_gap_ratio: float      # ||f-g||^2 / (2 delta^2)
    max_reward_ratio: float         # max_i |h_i| / delta
    passed: bool


def check_noise_conditions(
    spec: GeneratorSpec,
    game: GameSpec,
    samples: Sequence[tuple] | None = None,
    convention: str = "dimension-adjusted",
    rng: np.random.Generator | None = None,
    n: int = 512,
    box_radius: float = 2.0,
) -> NoiseAudit:
    """Audit ``|Sigma| <= delta^2``, ``||f-g||^2 <= 2 delta^2``, ``|h_i| <= delta``.

    ``convention`` controls the Sigma bound: ``strict`` uses ``delta^2``
    literally; ``dimension-adjusted`` uses ``d * delta^2`` (an isotropic
    diffusion ``sigma = delta I`` then sits exactly on the bound in any
    dimension).  Both ratios are reported.
    """
    if convention not in ("strict", "dimension-adjusted"):
        raise ConfigurationError(f"unknown delta convention {convention!r}")
    if samples is None:
        rng = rng or np.random.default_rng(0)
        ts = rng.uniform(0, game.horizon, size=n)
        xs = rng.uniform(-box_radius, box_radius, size=(n, spec.dim))
        us = game.u_grid.array[rng.integers(0, len(game.u_grid), size=n)]
        vs = game.v_grid.array[rng.integers(0, len(game.v_grid), size=n)]
        samples = list(zip(ts, xs, us, vs))
    d2 = spec.delta**2
    adj = spec.dim if convention == "dimension-adjusted" else 1
    max_sig = max_gap = max_h = 0.0
    for (t, x, u, v) in samples:
        x = np.asarray(x, dtype=float)
        u, v = as_control(u), as_control(v)
        Sigma, g = sigma_and_g(spec, t, x, u, v)
        f = game.f1(t, x, u) + game.f2(t, x, v)
        max_sig = max(max_sig, abs(Sigma))
        max_gap = max(max_gap, float(np.sum((f - g) ** 2)))
        max_h = max(
            max_h,
            abs(float(spec.h1(t, x, u, v))),
            abs(float(spec.h2(t, x, u, v))),
        )
    if d2 == 0.0:
        sig_ratio = 0.0 if max_sig == 0 else math.inf
        sig_strict = 0.0 if max_sig == 0 else math.inf
        gap_ratio = 0.0 if max_gap == 0 else math.inf
        h_ratio = 0.0 if max_h == 0 else math.inf
    else:
        sig_ratio = max_sig / (adj * d2)
        sig_strict = max_sig / d2
        gap_ratio = max_gap / (2 * d2)
        h_ratio = max_h / spec.delta
    passed = max(sig_ratio, gap_ratio, h_ratio) <= 1.0 + 1e-9
    return NoiseAudit(
        convention=convention,
        max_sigma_ratio=sig_ratio,
        max_sigma_ratio_strict=sig_strict,
        max_drift_gap_ratio=gap_ratio,
        max_reward_ratio=h_ratio,
        passed=passed,
    )


# ---------------------------------------------------------------------------
# relaxed control policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlMixture:
    """Finite mixture over joint control pairs ``(u_p, v_p)`` with weights."""

    u_points: Array  # (P, du)
    v_points: Array  # (P, dv)
    weights: Array  # (P,)

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u_points, dtype=float))
        v = np.atleast_2d(np.asarray(self.v_points, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if not (len(u) == len(v) == len(w)):
            raise ConfigurationError("mixture support/weight lengths differ")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigurationError("mixture weights must be a probability vector")
        object.__setattr__(self, "u_points", u)
        object.__setattr__(self, "v_points", v)
        object.__setattr__(self, "weights", w)

    @property
    def is_dirac(self) -> bool:
        return len(self.weights) == 1

    def support_in(self, u_grid: ControlGrid, v_grid: ControlGrid) -> bool:
        def ok(points, grid):
            return all(
                any(np.allclose(p, q, atol=1e-12) for q in grid.array) for p in points
            )

        return ok(self.u_points, u_grid) and ok(self.v_points, v_grid)


class RelaxedControlPolicy:
    """Per-step rule ``(t, guide state) -> ControlMixture``."""

    is_constant: bool = False

    def mixture(self, t: float, y: Array) -> ControlMixture:  # pragma: no cover
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantPolicy(RelaxedControlPolicy):
    mix: ControlMixture
    is_constant: bool = True

    def mixture(self, t, y):
        return self.mix


def dirac_policy(u, v) -> ConstantPolicy:
    """Both players play fixed controls."""
    return ConstantPolicy(ControlMixture(as_control(u)[None], as_control(v)[None], [1.0]))


def product_policy_u_mix(u_points, u_weights, v) -> ConstantPolicy:
    """Mixture over player-1 controls with player 2 frozen at ``v``."""
    u = np.atleast_2d(np.asarray(u_points, dtype=float))
    vv = np.repeat(as_control(v)[None], len(u), axis=0)
    return ConstantPolicy(ControlMixture(u, vv, u_weights))


def product_policy_v_mix(u, v_points, v_weights) -> ConstantPolicy:
    """Mixture over player-2 controls with player 1 frozen at ``u``."""
    v = np.atleast_2d(np.asarray(v_points, dtype=float))
    uu = np.repeat(as_control(u)[None], len(v), axis=0)
    return ConstantPolicy(ControlMixture(uu, v, v_weights))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass
class GuidePathBatch:
    """A batch of guide realizations on a common substep grid."""

    times: Array  # (K+1,)
    states: Array  # (n, K+1, d)
    mixtures: list  # ControlMixture per substep (shared across the batch)
    rewards: Array  # (n, 2) accumulated running rewards per player
    jump_counts: Array | None = None  # (n, J) total jumps per offset

    @property
    def terminal(self) -> Array:
        return self.states[:, -1, :]


@dataclass
class GuidePath:
    """A single guide realization (view of a batch of size one)."""

    times: Array
    states: Array  # (K+1, d)
    mixtures: list
    rewards: Array  # (2,)


def sample_guide_batch(
    spec: GeneratorSpec,
    s: float,
    r: float,
    y0: Array,
    policy: RelaxedControlPolicy,
    substeps: int,
    rng: np.random.Generator,
    n: int | None = None,
) -> GuidePathBatch:
    """Euler–Maruyama (diffusion) plus Poisson-count jump simulation.

    One control pair per substep is drawn from the policy mixture and drives
    both the drift and the running rewards.  With constant rates the jump
    counts per substep are exact in distribution (exponential clocks and
    Poisson counts agree); state-dependent rates are frozen at the substep
    start.
    """
    if not (s < r):
        raise ConfigurationError("need s < r")
    if substeps < 1:
        raise ConfigurationError("substeps must be >= 1")
    y0 = np.asarray(y0, dtype=float)
    if y0.ndim == 1:
        y0 = np.repeat(y0[None], n or 1, axis=0)
    nn, d = y0.shape
    dtau = (r - s) / substeps
    sqdt = math.sqrt(dtau)
    states = np.empty((nn, substeps + 1, d))
    states[:, 0] = y0
    rewards = np.zeros((nn, 2))
    mixtures: list[ControlMixture] = []

    # fast path: constant dirac policy, state-independent drift, pure
    # diffusion -> draw all substep increments in one block (identical
    # stream consumption order, so results match the generic loop bit-for-bit)
    state_free_rewards = (ZeroReward, ConstantReward, QuadraticControlPenalty)
    if (
        policy.is_constant
        and not spec.has_jumps
        and spec.drift.state_independent
        and (spec.sigma is None or spec.sigma.constant)
        and isinstance(spec.h1, state_free_rewards)
        and isinstance(spec.h2, state_free_rewards)
    ):
        mix = policy.mixture(s, y0[0])
        if mix.is_dirac:
            u = np.repeat(mix.u_points, nn, axis=0)
            v = np.repeat(mix.v_points, nn, axis=0)
            b = spec.drift(s, y0, u, v)
            incr = np.broadcast_to(b[:, None, :] * dtau, (nn, substeps, d)).copy()
            if spec.sigma is not None and spec.sigma.scale != 0.0:
                xi = rng.standard_normal((substeps, nn, d))
                incr += spec.sigma.scale * sqdt * np.swapaxes(xi, 0, 1)
            states[:, 1:] = y0[:, None, :] + np.cumsum(incr, axis=1)
            if not np.all(np.isfinite(states)):
                raise NumericError("non-finite guide state")
            rewards[:, 0] = np.asarray(spec.h1(s, y0, u, v), dtype=float) * (r - s)
            rewards[:, 1] = np.asarray(spec.h2(s, y0, u, v), dtype=float) * (r - s)
            times = s + dtau * np.arange(substeps + 1)
            times[-1] = r
            return GuidePathBatch(
                times=times, states=states, mixtures=[mix] * substeps,
                rewards=rewards,
            )

    y = y0.copy()
    t = s
    jump_counts = (
        np.zeros((nn, len(spec.jump_offsets)), dtype=int) if spec.has_jumps else None
    )
    for k in range(substeps):
        if policy.is_constant:
            mix = policy.mixture(t, y[0])
        else:
            # state-dependent policies are only supported pathwise via the
            # first path's state; shipped policies are constant mixtures
            mix = policy.mixture(t, y[0])
        mixtures.append(mix)
        P = len(mix.weights)
        if P == 1:
            idx = np.zeros(nn, dtype=int)
        else:
            idx = np.searchsorted(np.cumsum(mix.weights), rng.random(nn))
            idx = np.minimum(idx, P - 1)
        u = mix.u_points[idx]
        v = mix.v_points[idx]
        b = spec.drift(t, y, u, v)
        rewards[:, 0] += np.asarray(spec.h1(t, y, u, v), dtype=float) * dtau
        rewards[:, 1] += np.asarray(spec.h2(t, y, u, v), dtype=float) * dtau
        incr = b * dtau
        if spec.sigma is not None and spec.sigma.scale != 0.0:
            xi = rng.standard_normal((nn, d))
            incr = incr + spec.sigma.scale * sqdt * xi
        if spec.has_jumps:
            # realize the generator's jump term with uncompensated jumps:
            # shift the continuous drift by the small-offset compensation
            rates = spec.rates_at(t, y[0], u[0], v[0])
            comp = spec.small_offset_compensation(t, y[0], u[0], v[0])
            counts = rng.poisson(rates * dtau, size=(nn, len(rates)))
            jump_counts += counts
            incr = incr + counts @ spec.jump_offsets - comp * dtau
        y = y + incr
        if not np.all(np.isfinite(y)):
            raise NumericError("non-finite guide state")
        t = s + (k + 1) * dtau
        states[:, k + 1] = y
    times = s + dtau * np.arange(substeps + 1)
    times[-1] = r
    return GuidePathBatch(
        times=times, states=states, mixtures=mixtures, rewards=rewards,
        jump_counts=jump_counts,
    )


def sample_guide_path(
    spec: GeneratorSpec,
    s: float,
    r: float,
    y: Array,
    policy: RelaxedControlPolicy,
    substeps: int,
    rng: np.random.Generator,
) -> GuidePath:
    batch = sample_guide_batch(spec, s, r, np.asarray(y, dtype=float), policy, substeps, rng, n=1)
    return GuidePath(
        times=batch.times,
        states=batch.states[0],
        mixtures=batch.mixtures,
        rewards=batch.rewards[0],
    )


# ---------------------------------------------------------------------------
# test functions and the generator applied to them
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """C^2 test function from a small catalog: linear, quadratic, gaussian."""

    kind: str  # "linear" <a,x>; "quadratic" ||x-a||^2; "gauss" exp(-||x-a||^2)
    a: tuple[float, ...]

    @cached_property
    def a_vec(self) -> Array:
        return np.array(self.a, dtype=float)

    def value(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return x @ self.a_vec
        sq = np.sum((x - self.a_vec) ** 2, axis=-1)
        if self.kind == "quadratic":
            return sq
        if self.kind == "gauss":
            return np.exp(-sq)
        raise ConfigurationError(f"unknown test function kind {self.kind!r}")

    def grad(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return np.broadcast_to(self.a_vec, x.shape).copy()
        if self.kind == "quadratic":
            return 2.0 * (x - self.a_vec)
        if self.kind == "gauss":
            sq = np.sum((x - self.a_vec) ** 2, axis=-1, keepdims=True)
            return -2.0 * (x - self.a_vec) * np.exp(-sq)
        raise ConfigurationError(f"unknown test function kind {self.kind!r}")

    def hess(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        eye = np.eye(d)
        if self.kind == "linear":
            return np.zeros(x.shape + (d,))
        if self.kind == "quadratic":
            return np.broadcast_to(2.0 * eye, x.shape + (d,)).copy()
        if self.kind == "gauss":
            z = x - self.a_vec
            sq = np.sum(z * z, axis=-1)[..., None, None]
            outer = z[..., :, None] * z[..., None, :]
            return (4.0 * outer - 2.0 * eye) * np.exp(-sq)
        raise ConfigurationError(f"unknown test function kind {self.kind!r}")


def apply_generator(
    spec: GeneratorSpec, phi: TestFunction, t: float, x: Array, u: Array, v: Array
) -> Array:
    """Analytic ``Lambda_t[u,v] phi`` at ``x`` (broadcasts over leading axes).

    Drift term + half-trace diffusion term + compensated jump differences.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    grad = phi.grad(x)
    b = spec.drift(t, x, u, v)
    shape = np.broadcast_shapes(b.shape[:-1], grad.shape[:-1])
    out = np.sum(np.broadcast_to(b, shape + b.shape[-1:]) * grad, axis=-1)
    if spec.sigma is not None:
        G = spec.sigma.gram(t, x)
        hess = phi.hess(x)
        out = out + 0.5 * np.einsum("ij,...ij->...", G, hess)
    if spec.has_jumps:
        rates = spec.rates_at(t, x, u, v)
        val = phi.value(x)
        norms = np.linalg.norm(spec.jump_offsets, axis=1)
        for j, y_off in enumerate(spec.jump_offsets):
            diff = phi.value(x + y_off) - val
            if norms[j] <= 1.0:
                diff = diff - grad @ y_off
            out = out + rates[j] * diff
    return out


def martingale_residual(
    spec: GeneratorSpec, batch: GuidePathBatch, phi: TestFunction
) -> tuple[float, float]:
    """Monte Carlo check of the martingale property of the guide law.

    Residual per path: ``phi(Y_r) - phi(Y_s) - sum_k dtau * E_eta[Lambda phi]``
    with the generator applied analytically, averaged over each substep's
    mixture, and integrated in time by the trapezoidal rule (which makes the
    residual exactly mean-zero for quadratic phi under the Euler scheme).
    Returns (mean, standard error); the mean should vanish up to substep
    discretization error.
    """
    times, states = batch.times, batch.states
    nn = states.shape[0]
    acc = np.zeros(nn)
    for k, mix in enumerate(batch.mixtures):
        dtau = times[k + 1] - times[k]
        lam = np.zeros(nn)
        for p in range(len(mix.weights)):
            lam_lo = apply_generator(
                spec, phi, times[k], states[:, k, :], mix.u_points[p], mix.v_points[p]
            )
            lam_hi = apply_generator(
                spec, phi, times[k + 1], states[:, k + 1, :],
                mix.u_points[p], mix.v_points[p],
            )
            lam += mix.weights[p] * 0.5 * (lam_lo + lam_hi)
        acc += lam * dtau
    resid = phi.value(states[:, -1, :]) - phi.value(states[:, 0, :]) - acc
    mean = float(np.mean(resid))
    se = float(np.std(resid, ddof=1) / math.sqrt(nn)) if nn > 1 else 0.0
    return mean, se


# ---------------------------------------------------------------------------
# one-step forecast statistic
# ---------------------------------------------------------------------------


def has_closed_form_psi(spec: GeneratorSpec, policy: RelaxedControlPolicy) -> bool:
    return (
        not spec.has_jumps
        and (spec.sigma is None or spec.sigma.constant)
        and spec.drift.state_independent
        and policy.is_constant
        and policy.mixture(0.0, np.zeros(spec.dim)).is_dirac
    )


def estimate_psi(
    spec: GeneratorSpec,
    s: float,
    r: float,
    x: Array,
    y: Array,
    policy: RelaxedControlPolicy,
    n_inner: int,
    rng: np.random.Generator | None = None,
    substeps: int = 16,
    mode: str = "auto",
) -> tuple[float, float]:
    """Expected squared distance ``E ||x - Y(r)||^2`` for the guide started
    at ``y`` at time ``s`` under the given policy.

    Uses a closed form (half-width 0) for state-independent diffusions under
    constant dirac policies; otherwise a Monte Carlo mean with a 95%
    half-width.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    closed_ok = has_closed_form_psi(spec, policy)
    if mode == "closed-form" and not closed_ok:
        raise ConfigurationError("no closed form registered for this spec/policy")
    if mode in ("closed-form", "auto") and closed_ok:
        mix = policy.mixture(s, y)
        b = spec.drift(s, y, mix.u_points[0], mix.v_points[0])
        trG = float(np.trace(spec.sigma.gram(s, y))) if spec.sigma is not None else 0.0
        psi = float(np.sum((x - y - b * (r - s)) ** 2)) + trG * (r - s)
        return psi, 0.0
    if n_inner < 2:
        raise ConfigurationError("MC psi estimate needs n_inner >= 2")
    if rng is None:
        raise ConfigurationError("MC psi estimate needs an rng")
    batch = sample_guide_batch(spec, s, r, y, policy, substeps, rng, n=n_inner)
    vals = np.sum((x - batch.terminal) ** 2, axis=1)
    mean = float(np.mean(vals))
    half = 1.96 * float(np.std(vals, ddof=1)) / math.sqrt(n_inner)
    return mean, half


# ---------------------------------------------------------------------------
# stability condition of a value pair
# ---------------------------------------------------------------------------


@dataclass
class ConditionRow:
    part: str
    s: float
    r: float
    y: tuple
    frozen: float | None
    statistic: float
    se: float
    passed: bool


@dataclass
class ConditionReport:
    rows: list
    passed: bool

    def worst(self, part: str) -> ConditionRow | None:
        rows = [row for row in self.rows if row.part == part]
        if not rows:
            return None
        if part == "maintain":
            return max(rows, key=lambda row: abs(row.statistic))
        return max(rows, key=lambda row: row.statistic)


def check_condition_stability(
    spec: GeneratorSpec,
    pair,
    intervals: Sequence[tuple[float, float]],
    states: Sequence,
    eq_policy: RelaxedControlPolicy,
    punish1: Callable[[Array], RelaxedControlPolicy],
    punish2: Callable[[Array], RelaxedControlPolicy],
    frozen_v_values: Sequence,
    frozen_u_values: Sequence,
    rng: np.random.Generator,
    n_samples: int = 10_000,
    substeps: int = 16,
    tol: float = 1e-3,
) -> ConditionReport:
    """Statistical certificate that a value pair is stable for the guide.

    Three families of Monte Carlo statistics per start ``(s, y)``:

    * maintain: under the joint policy, ``E[c_i(r, Y(r)) + int h_i] - c_i(s,y)``
      must vanish for both players;
    * deter-2: for every frozen opponent control ``v``, player 1's punishment
      mixture keeps ``E[c_2(r, Y(r)) + int h_2] <= c_2(s, y)``;
    * deter-1: symmetric with the roles swapped.

    A row passes if the statistic is within ``3 SE + tol`` of the required
    side.  ``pair`` must expose ``value(i, t, x)`` vectorized over states.
    """
    rows: list[ConditionRow] = []
    for (s, r) in intervals:
        for y in states:
            y = np.asarray(y, dtype=float)
            batch = sample_guide_batch(spec, s, r, y, eq_policy, substeps, rng, n=n_samples)
            for i in (1, 2):
                end_vals = pair.value(i, r, batch.terminal) + batch.rewards[:, i - 1]
                stat = float(np.mean(end_vals)) - float(pair.value(i, s, y))
                se = float(np.std(end_vals, ddof=1)) / math.sqrt(n_samples)
                rows.append(
                    ConditionRow(
                        part="maintain", s=s, r=r, y=tuple(y), frozen=None,
                        statistic=stat, se=se, passed=abs(stat) <= 3 * se + tol,
                    )
                )
            for v in frozen_v_values:
                pol = punish1(as_control(v))
                b = sample_guide_batch(spec, s, r, y, pol, substeps, rng, n=n_samples)
                end_vals = pair.value(2, r, b.terminal) + b.rewards[:, 1]
                stat = float(np.mean(end_vals)) - float(pair.value(2, s, y))
                se = float(np.std(end_vals, ddof=1)) / math.sqrt(n_samples)
                rows.append(
                    ConditionRow(
                        part="deter-2", s=s, r=r, y=tuple(y),
                        frozen=float(np.atleast_1d(v)[0]),
                        statistic=stat, se=se, passed=stat <= 3 * se + tol,
                    )
                )
            for u in frozen_u_values:
                pol = punish2(as_control(u))
                b = sample_guide_batch(spec, s, r, y, pol, substeps, rng, n=n_samples)
                end_vals = pair.value(1, r, b.terminal) + b.rewards[:, 0]
                stat = float(np.mean(end_vals)) - float(pair.value(1, s, y))
                se = float(np.std(end_vals, ddof=1)) / math.sqrt(n_samples)
                rows.append(
                    ConditionRow(
                        part="deter-1", s=s, r=r, y=tuple(y),
                        frozen=float(np.atleast_1d(u)[0]),
                        statistic=stat, se=se, passed=stat <= 3 * se + tol,
                    )
                )
    return ConditionReport(rows=rows, passed=all(row.passed for row in rows))


# ---------------------------------------------------------------------------
# guide catalog
# ---------------------------------------------------------------------------


def mirror_guide(game: GameSpec, delta: float) -> GeneratorSpec:
    """Diffusion guide with ``b = f1 + f2``, ``sigma = delta I``, ``h = 0``."""
    return GeneratorSpec(
        dim=game.dim,
        drift=GameMirrorDrift(game),
        delta=delta,
        sigma=ScaledIdentitySigma(scale=delta, dim=game.dim),
    )


def biased_mirror_guide(game: GameSpec, delta: float, offset=None) -> GeneratorSpec:
    """Drift shifted by ``(2 delta, 0, ...)`` — fails the closeness audit."""
    if offset is None:
        offset = (2.0 * delta,) + (0.0,) * (game.dim - 1)
    return GeneratorSpec(
        dim=game.dim,
        drift=OffsetDrift(GameMirrorDrift(game), tuple(offset)),
        delta=delta,
        sigma=ScaledIdentitySigma(scale=delta, dim=game.dim),
    )


def control_penalty_guide(game: GameSpec, delta: float) -> GeneratorSpec:
    """Scalar-game guide with quadratic own-control penalties ``-delta w^2/2``."""
    return GeneratorSpec(
        dim=game.dim,
        drift=GameMirrorDrift(game),
        delta=delta,
        sigma=ScaledIdentitySigma(scale=delta, dim=game.dim),
        h1=QuadraticControlPenalty(player=1, coef=delta),
        h2=QuadraticControlPenalty(player=2, coef=delta),
    )


def jump_guide(
    dim: int,
    offsets,
    rates,
    drift_vec=None,
    delta: float = 1.0,
) -> GeneratorSpec:
    """Pure-jump test spec with constant drift and constant rates."""
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    rates_arr = np.atleast_1d(np.asarray(rates, dtype=float))
    if drift_vec is None:
        drift_vec = (0.0,) * dim
    return GeneratorSpec(
        dim=dim,
        drift=ConstantDrift(tuple(float(c) for c in drift_vec)),
        delta=delta,
        sigma=None,
        jump_offsets=offsets,
        jump_rates=lambda t, x, u, v: rates_arr,
    )
