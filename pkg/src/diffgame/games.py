"""Deterministic two-player differential games.

A game is ``dx/dt = f1(t,x,u) + f2(t,x,v)`` on a finite horizon with terminal
payoffs ``gamma_i(x(T))``.  Dynamics and payoffs come from a closed descriptor
catalog; every descriptor declares its own regularity constants (velocity
bound M, spatial Lipschitz constant K, payoff Lipschitz constant R) so that
downstream quantitative bounds use trusted data rather than sampled estimates.

Controls live on finite grids (default 21 points per scalar dimension), which
turns all argmin/argmax selections into exact finite minimizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericError

Array = np.ndarray


# ---------------------------------------------------------------------------
# control grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlGrid:
    """Ordered finite set of control vectors inside a compact box.

    The order is part of the data: ties in extremal selections are broken by
    the smallest grid index.
    """

    points: tuple[tuple[float, ...], ...]
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.points:
            raise ConfigurationError("control grid must be non-empty")
        for p in self.points:
            if len(p) != len(self.bounds):
                raise ConfigurationError("control point dimension mismatch")
            for a, (lo, hi) in zip(p, self.bounds):
                if not (lo - 1e-12 <= a <= hi + 1e-12):
                    raise ConfigurationError(
                        f"control point {p} outside bounds {self.bounds}"
                    )

    @cached_property
    def array(self) -> Array:
        return np.array(self.points, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int = 21) -> "ControlGrid":
        """Uniform grid on a scalar interval [lo, hi] with n points."""
        pts = tuple((float(a),) for a in np.linspace(lo, hi, n))
        return cls(points=pts, bounds=((float(lo), float(hi)),))


def as_control(w) -> Array:
    """Coerce a scalar or sequence control value to a 1-d float array."""
    return np.atleast_1d(np.asarray(w, dtype=float))


# ---------------------------------------------------------------------------
# dynamics descriptor catalog
# ---------------------------------------------------------------------------


class VectorField:
    """One player's dynamics term ``(t, x, w) -> velocity``.

    Subclasses must be vectorized over leading axes of ``x`` and ``w``
    (shapes ``(..., d)`` and ``(..., dw)``).
    """

    id: str
    dim: int

    def __call__(self, t: float, x: Array, w: Array) -> Array:  # pragma: no cover
        raise NotImplementedError

    def velocity_bound(self, grid: ControlGrid) -> float:  # pragma: no cover
        raise NotImplementedError

    def lipschitz_x(self) -> float:  # pragma: no cover
        raise NotImplementedError

    @property
    def state_independent(self) -> bool:
        return self.lipschitz_x() == 0.0


@dataclass(frozen=True)
class AxisControlField(VectorField):
    """``f(t,x,w) = scale * w[0] * e_axis`` — one player drives one coordinate."""

    dim: int
    axis: int
    scale: float = 1.0
    id: str = "axis-control"

    def __call__(self, t, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape[:-1], w.shape[:-1]) + (self.dim,))
        out[..., self.axis] = self.scale * w[..., 0]
        return out

    def velocity_bound(self, grid):
        return abs(self.scale) * float(np.max(np.abs(grid.array)))

    def lipschitz_x(self):
        return 0.0


@dataclass(frozen=True)
class AffineControlField(VectorField):
    """Scalar field ``f(t,x,w) = coef*w[0] + offset`` (state-independent)."""

    coef: float
    offset: float = 0.0
    dim: int = 1
    id: str = "affine-control"

    def __call__(self, t, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        out = np.zeros(np.broadcast_shapes(x.shape[:-1], w.shape[:-1]) + (1,))
        out[..., 0] = self.coef * w[..., 0] + self.offset
        return out

    def velocity_bound(self, grid):
        return abs(self.coef) * float(np.max(np.abs(grid.array))) + abs(self.offset)

    def lipschitz_x(self):
        return 0.0


@dataclass(frozen=True)
class LinearDecayField(VectorField):
    """``f(t,x,w) = -x`` (control ignored); M declared for a stated box radius."""

    dim: int = 1
    box_radius: float = 2.0
    id: str = "linear-decay"

    def __call__(self, t, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], w.shape[:-1]) + (self.dim,)
        return np.broadcast_to(-x, shape).copy()

    def velocity_bound(self, grid):
        return self.box_radius

    def lipschitz_x(self):
        return 1.0


@dataclass(frozen=True)
class ZeroField(VectorField):
    dim: int = 1
    id: str = "zero"

    def __call__(self, t, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        return np.zeros(np.broadcast_shapes(x.shape[:-1], w.shape[:-1]) + (self.dim,))

    def velocity_bound(self, grid):
        return 0.0

    def lipschitz_x(self):
        return 0.0


# ---------------------------------------------------------------------------
# terminal payoffs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearPayoff:
    """``gamma(x) = <a, x> + const``; Lipschitz constant is ``||a||``."""

    a: tuple[float, ...]
    const: float = 0.0
    id: str = "linear"

    @cached_property
    def a_vec(self) -> Array:
        return np.array(self.a, dtype=float)

    def __call__(self, x: Array) -> float | Array:
        x = np.asarray(x, dtype=float)
        return x @ self.a_vec + self.const

    def gradient(self, x: Array) -> Array:
        return self.a_vec.copy()

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.a_vec))


@dataclass(frozen=True)
class QuadraticPayoff:
    """``gamma(x) = scale * ||x - a||^2``; Lipschitz constant declared for a
    stated box radius around the origin."""

    a: tuple[float, ...]
    scale: float = 1.0
    box_radius: float = 3.0
    id: str = "quadratic"

    @cached_property
    def a_vec(self) -> Array:
        return np.array(self.a, dtype=float)

    def __call__(self, x: Array) -> float | Array:
        x = np.asarray(x, dtype=float)
        return self.scale * np.sum((x - self.a_vec) ** 2, axis=-1)

    def gradient(self, x: Array) -> Array:
        return 2.0 * self.scale * (np.asarray(x, dtype=float) - self.a_vec)

    @property
    def lipschitz(self) -> float:
        reach = self.box_radius + float(np.linalg.norm(self.a_vec))
        return 2.0 * abs(self.scale) * reach


# ---------------------------------------------------------------------------
# the game
# ---------------------------------------------------------------------------

ZERO_MODULUS: Callable[[float], float] = lambda theta: 0.0


@dataclass(frozen=True)
class GameSpec:
    """The deterministic game with its declared regularity constants."""

    horizon: float
    f1: VectorField
    f2: VectorField
    gamma1: LinearPayoff
    gamma2: LinearPayoff
    u_grid: ControlGrid
    v_grid: ControlGrid
    M: float
    K: float
    R: float
    alpha: Callable[[float], float] = ZERO_MODULUS
    name: str = "game"

    def __post_init__(self):
        if self.f1.dim != self.f2.dim:
            raise ConfigurationError("player dynamics dimensions differ")
        if min(self.M, self.K, self.R) < 0:
            raise ConfigurationError("M, K, R must be nonnegative")

    @property
    def dim(self) -> int:
        return self.f1.dim


def eval_rhs(game: GameSpec, t: float, x: Array, u, v) -> Array:
    """Joint velocity ``f1(t,x,u) + f2(t,x,v)``."""
    x = np.asarray(x, dtype=float)
    out = game.f1(t, x, as_control(u)) + game.f2(t, x, as_control(v))
    if not np.all(np.isfinite(out)):
        raise NumericError(f"non-finite velocity at t={t}, x={x}")
    return out


def integrate_step(
    game: GameSpec,
    t0: float,
    x0: Array,
    u,
    v,
    dt: float,
    substeps: int = 4,
) -> Array:
    """Advance the motion by ``dt`` under frozen controls with RK4 substeps."""
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    if substeps < 1:
        raise ConfigurationError("substeps must be >= 1")
    u = as_control(u)
    v = as_control(v)
    x = np.asarray(x0, dtype=float).copy()
    if game.f1.state_independent and game.f2.state_independent:
        # constant velocity: every RK4 stage coincides, the update is exact
        return x + dt * eval_rhs(game, t0, x, u, v)
    h = dt / substeps
    t = t0
    for _ in range(substeps):
        k1 = eval_rhs(game, t, x, u, v)
        k2 = eval_rhs(game, t + h / 2, x + (h / 2) * k1, u, v)
        k3 = eval_rhs(game, t + h / 2, x + (h / 2) * k2, u, v)
        k4 = eval_rhs(game, t + h, x + h * k3, u, v)
        x = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite state during integration")
    return x


def terminal_payoffs(game: GameSpec, xT: Array) -> tuple[float, float]:
    xT = np.asarray(xT, dtype=float)
    if not np.all(np.isfinite(xT)):
        raise NumericError("non-finite terminal state")
    return float(game.gamma1(xT)), float(game.gamma2(xT))


@dataclass(frozen=True)
class Trajectory:
    """A realized motion sampled at increasing time nodes."""

    times: Array
    states: Array

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.atleast_2d(np.asarray(self.states, dtype=float))
        if t.ndim != 1 or len(t) != len(x):
            raise ConfigurationError("times and states must have matching lengths")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)

    def check_lipschitz(self, M: float, tol: float = 1e-9) -> bool:
        steps = np.linalg.norm(np.diff(self.states, axis=0), axis=1)
        return bool(np.all(steps <= (M + tol) * np.diff(self.times)))


def audit_game_constants(
    game: GameSpec,
    rng: np.random.Generator,
    n: int = 10_000,
    box_radius: float = 2.0,
    tol: float = 1e-9,
) -> dict:
    """Sampled audit: velocity bound and spatial Lipschitz constant.

    Checks, on a random cloud, that ``||f1+f2|| <= M + tol`` and that finite
    difference quotients in x do not exceed the declared K.  This is an audit
    of the declared constants, not a proof.
    """
    d = game.dim
    t = rng.uniform(0.0, game.horizon, size=n)
    x = rng.uniform(-box_radius, box_radius, size=(n, d))
    u = game.u_grid.array[rng.integers(0, len(game.u_grid), size=n)]
    v = game.v_grid.array[rng.integers(0, len(game.v_grid), size=n)]
    speeds = np.empty(n)
    lip = 0.0
    for i in range(n):
        f = game.f1(t[i], x[i], u[i]) + game.f2(t[i], x[i], v[i])
        speeds[i] = np.linalg.norm(f)
        dx = rng.normal(size=d)
        dx *= 1e-4 / np.linalg.norm(dx)
        f2 = game.f1(t[i], x[i] + dx, u[i]) + game.f2(t[i], x[i] + dx, v[i])
        lip = max(lip, np.linalg.norm(f2 - f) / 1e-4)
    max_speed = float(np.max(speeds))
    return {
        "max_speed": max_speed,
        "velocity_ok": max_speed <= game.M + tol,
        "lipschitz_estimate": float(lip),
        "lipschitz_ok": lip <= game.K + 1e-6,
    }


# ---------------------------------------------------------------------------
# game catalog
# ---------------------------------------------------------------------------


def crossing_game(zeta: float = 0.25, control_points: int = 21) -> GameSpec:
    """Planar game where each player drives one coordinate.

    ``dx1/dt = u``, ``dx2/dt = v`` with ``u, v in [-1, 1]``; terminal payoffs
    ``gamma1 = zeta*x1 - x2`` and ``gamma2 = zeta*x2 - x1`` on horizon 1.
    Each player profits from advancing their own coordinate at rate zeta but
    pays full rate for the opponent's advance.
    """
    grid = ControlGrid.uniform(-1.0, 1.0, control_points)
    R = math.sqrt(zeta**2 + 1.0)
    return GameSpec(
        horizon=1.0,
        f1=AxisControlField(dim=2, axis=0),
        f2=AxisControlField(dim=2, axis=1),
        gamma1=LinearPayoff(a=(zeta, -1.0)),
        gamma2=LinearPayoff(a=(-1.0, zeta)),
        u_grid=grid,
        v_grid=grid,
        M=math.sqrt(2.0),
        K=0.0,
        R=R,
        name="crossing",
    )


def affine_scalar_game(
    c1: float = 1.0,
    c2: float = 1.0,
    c3: float = 0.0,
    a1: float = 1.0,
    a2: float = -1.0,
    horizon: float = 1.0,
    control_points: int = 21,
) -> GameSpec:
    """Scalar game ``dx/dt = c1*u + c2*v + c3`` with linear payoffs a_i*x."""
    grid = ControlGrid.uniform(-1.0, 1.0, control_points)
    f1 = AffineControlField(coef=c1, offset=c3)
    f2 = AffineControlField(coef=c2)
    return GameSpec(
        horizon=horizon,
        f1=f1,
        f2=f2,
        gamma1=LinearPayoff(a=(a1,)),
        gamma2=LinearPayoff(a=(a2,)),
        u_grid=grid,
        v_grid=grid,
        M=f1.velocity_bound(grid) + f2.velocity_bound(grid),
        K=0.0,
        R=max(abs(a1), abs(a2)),
        name="affine-scalar",
    )


def linear_decay_game(box_radius: float = 2.0) -> GameSpec:
    """Test entry ``dx/dt = -x`` (controls ignored); M valid on |x| <= radius."""
    grid = ControlGrid.uniform(-1.0, 1.0, 3)
    return GameSpec(
        horizon=1.0,
        f1=LinearDecayField(box_radius=box_radius),
        f2=ZeroField(),
        gamma1=LinearPayoff(a=(1.0,)),
        gamma2=LinearPayoff(a=(-1.0,)),
        u_grid=grid,
        v_grid=grid,
        M=box_radius,
        K=1.0,
        R=1.0,
        name="linear-decay",
    )


GAME_CATALOG: dict[str, Callable[..., GameSpec]] = {
    "crossing": crossing_game,
    "affine-scalar": affine_scalar_game,
    "linear-decay": linear_decay_game,
}


def make_game(game_id: str, **params) -> GameSpec:
    try:
        factory = GAME_CATALOG[game_id]
    except KeyError:
        raise ConfigurationError(
            f"unknown game id {game_id!r} (field 'game.id'); "
            f"known: {sorted(GAME_CATALOG)}"
        ) from None
    return factory(**params)
