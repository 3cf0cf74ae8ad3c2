"""Extremal-shift selectors and the quantitative constants of the construction.

The guide-tracking strategy steers the real state toward a stochastic guide by
picking, on each partition step, the control extremizing the inner product of
the player's dynamics with the gap vector ``x - y``.  The switching rule that
detects deviations compares an expected squared gap against a per-step bound
built from the constants below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .games import ZERO_MODULUS, Array, GameSpec

#: the four selector modes: minimize or maximize <x - y, f_player(t, x, w)>
SELECTOR_MODES = ("u-toward", "u-away", "v-toward", "v-away")


@dataclass(frozen=True)
class ShiftConstants:
    """Constants entering the per-step and terminal tracking bounds."""

    M: float
    K: float
    R: float
    T: float
    delta: float
    alpha: Callable[[float], float] = ZERO_MODULUS

    @property
    def beta(self) -> float:
        return 5.0 + 2.0 * self.K

    @property
    def bigC(self) -> float:
        return 2.0 * math.sqrt(self.T * math.exp(self.beta * self.T))

    @classmethod
    def from_game(cls, game: GameSpec, delta: float) -> "ShiftConstants":
        return cls(
            M=game.M, K=game.K, R=game.R, T=game.horizon, delta=delta,
            alpha=game.alpha,
        )


def select_extremal(
    game: GameSpec, mode: str, t: float, x: Array, y: Array
) -> tuple[Array, int]:
    """Pick the grid control extremizing ``<x - y, f_player(t, x, .)>``.

    ``*-toward`` minimizes (steers toward the guide), ``*-away`` maximizes.
    Ties are broken by the smallest grid index.  Returns (control, index).
    """
    if mode not in SELECTOR_MODES:
        raise ConfigurationError(f"unknown selector mode {mode!r}")
    field = game.f1 if mode.startswith("u") else game.f2
    grid = game.u_grid if mode.startswith("u") else game.v_grid
    gap = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    vals = field(t, np.asarray(x, dtype=float), grid.array) @ gap
    idx = int(np.argmin(vals) if mode.endswith("toward") else np.argmax(vals))
    return grid.array[idx].copy(), idx


def alpha_tilde(M: float, T: float, theta: float) -> float:
    """Time-discretization modulus ``(4/3) M sqrt(1+M^2) e^{T/2} sqrt(|theta|)``."""
    return (4.0 / 3.0) * M * math.sqrt(1.0 + M * M) * math.exp(T / 2.0) * math.sqrt(abs(theta))


def epsilon_modulus(constants: ShiftConstants, theta: float) -> float:
    """Per-step error modulus entering the switching bound.

    ``eps(theta) = 2 M^2 theta + 2 atilde(theta) + 2 alpha(theta)^2
    + (K M)^2 theta^2 + K^2 atilde(theta) theta + K^2 theta``.
    """
    if theta < 0:
        raise ConfigurationError("theta must be nonnegative")
    M, K = constants.M, constants.K
    at = alpha_tilde(M, constants.T, theta)
    a = constants.alpha(theta)
    return (
        2.0 * M * M * theta
        + 2.0 * at
        + 2.0 * a * a
        + (K * M) ** 2 * theta**2
        + K * K * at * theta
        + K * K * theta
    )


def decision_bound(constants: ShiftConstants, prev_sq_dist: float, dt: float) -> float:
    """Largest expected squared gap consistent with on-profile play.

    ``prev*(1 + beta*dt) + (4 delta^2 + eps(dt))*dt`` — the switching rule
    fires when the one-step forecast statistic exceeds this.
    """
    if prev_sq_dist < 0:
        raise ConfigurationError("prev_sq_dist must be nonnegative")
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    return prev_sq_dist * (1.0 + constants.beta * dt) + (
        4.0 * constants.delta**2 + epsilon_modulus(constants, dt)
    ) * dt


def theorem_epsilon(constants: ShiftConstants, d_delta: float) -> float:
    """Equilibrium tolerance guaranteed at partition fineness ``d_delta``.

    ``R sqrt(C^2 delta^2 + eps(d_delta) T e^{beta T}) + T delta``; tends to
    ``(R C + T) delta`` as the partition is refined.
    """
    if d_delta < 0:
        raise ConfigurationError("d_delta must be nonnegative")
    C, T, delta = constants.bigC, constants.T, constants.delta
    inner = C * C * delta * delta + epsilon_modulus(constants, d_delta) * T * math.exp(
        constants.beta * T
    )
    return constants.R * math.sqrt(inner) + T * delta


def constants_table(constants: ShiftConstants, d_delta: float) -> dict:
    """Full constant table for a scenario, as printed by the CLI."""
    return {
        "M": constants.M,
        "K": constants.K,
        "R": constants.R,
        "T": constants.T,
        "delta": constants.delta,
        "beta": constants.beta,
        "bigC": constants.bigC,
        "d_delta": d_delta,
        "alpha_tilde": alpha_tilde(constants.M, constants.T, d_delta),
        "epsilon_modulus": epsilon_modulus(constants, d_delta),
        "decision_slack_per_step": decision_bound(constants, 0.0, d_delta)
        if d_delta > 0
        else 0.0,
        "theorem_epsilon": theorem_epsilon(constants, d_delta),
        "theorem_epsilon_limit": theorem_epsilon(constants, 0.0),
    }
