"""Shared fixtures: the planar crossing scenario in its acceptance
configuration, plus a session-wide rollout set reused by the equilibrium,
deviation, and tracking suites."""

from __future__ import annotations

import numpy as np
import pytest

from diffgame import equilibrium as eq
from diffgame.games import crossing_game
from diffgame.guides import dirac_policy, mirror_guide
from diffgame.values import make_pair, solve_zero_sum_value

ACCEPTANCE_SEED = 20240817

# one pass/fail line per acceptance criterion, printed at session end
_ACCEPTANCE_LINES: list[tuple[int, str]] = []


def record_criterion(number: int, description: str, passed: bool, note: str = ""):
    status = "PASS" if passed else "FAIL"
    suffix = f"  ({note})" if note else ""
    _ACCEPTANCE_LINES.append(
        (number, f"[{status}] criterion {number}: {description}{suffix}")
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_crossing_profile(
    delta: float = 0.05,
    n_steps: int = 100,
    pair_id: str = "crossing-alt",
    psi_mode: str = "closed-form",
    master_seed: int = ACCEPTANCE_SEED,
    control_points: int = 21,
) -> eq.CorrelatedProfile:
    game = crossing_game(control_points=control_points)
    guide = mirror_guide(game, delta)
    pair = make_pair(pair_id)
    eq_pol = dirac_policy(-1.0, -1.0) if pair_id == "crossing-alt" else dirac_policy(1.0, 1.0)
    return eq.build_profile(
        game=game,
        guide=guide,
        pair=pair,
        partition=eq.uniform_partition(0.0, 1.0, n_steps),
        eq_policy=eq_pol,
        punish1=lambda v: dirac_policy(+1.0, v),
        punish2=lambda u: dirac_policy(u, +1.0),
        psi_mode=psi_mode,
        master_seed=master_seed,
    )


@pytest.fixture(scope="session")
def crossing():
    return crossing_game()


@pytest.fixture(scope="session")
def crossing_guide(crossing):
    return mirror_guide(crossing, 0.05)


@pytest.fixture(scope="session")
def acceptance_profile():
    return make_crossing_profile(delta=0.05, n_steps=100)


@pytest.fixture(scope="session")
def acceptance_records(acceptance_profile):
    """2000 on-profile rollouts of the acceptance scenario (shared)."""
    return eq.run_rollouts(
        acceptance_profile, np.zeros(2), eq.NO_DEVIATION, n_rollouts=2000
    )


@pytest.fixture(scope="session")
def zero_sum_values(crossing):
    box = [(-2.0, 2.0), (-2.0, 2.0)]
    v1 = solve_zero_sum_value(crossing, 1, box, h=0.05, dt=0.02, x0=np.zeros(2))
    v2 = solve_zero_sum_value(crossing, 2, box, h=0.05, dt=0.02, x0=np.zeros(2))
    return v1, v2
