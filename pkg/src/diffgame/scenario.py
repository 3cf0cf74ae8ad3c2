"""Scenario configuration and experiment orchestration.

A scenario is a single TOML file describing the game, the guide, the value
pair, the time partition, and one experiment block.  All randomness derives
from one master seed, so every experiment reruns bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import equilibrium as eq
from . import guides, reports, shift, values
from .errors import ConfigurationError
from .games import GameSpec, make_game
from .guides import dirac_policy, mirror_guide
from .values import ClosedFormPair, make_pair, sign_axis_law

# ---------------------------------------------------------------------------
# minimal TOML emission (restricted to the scenario schema: tables, strings,
# numbers, booleans, flat lists, and arrays of tables)
# ---------------------------------------------------------------------------


def _toml_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    raise ConfigurationError(f"cannot serialize {type(v)!r} to the scenario file")


def dumps_toml(data: dict, _prefix: str = "") -> str:
    lines: list[str] = []
    scalars = {k: v for k, v in data.items() if not isinstance(v, dict)
               and not (isinstance(v, list) and v and isinstance(v[0], dict))}
    tables = {k: v for k, v in data.items() if isinstance(v, dict)}
    arrays = {k: v for k, v in data.items()
              if isinstance(v, list) and v and isinstance(v[0], dict)}
    for k, v in scalars.items():
        lines.append(f"{k} = {_toml_scalar(v)}")
    for k, v in tables.items():
        name = f"{_prefix}{k}"
        lines.append("")
        lines.append(f"[{name}]")
        lines.append(dumps_toml(v, _prefix=name + "."))
    for k, items in arrays.items():
        name = f"{_prefix}{k}"
        for item in items:
            lines.append("")
            lines.append(f"[[{name}]]")
            lines.append(dumps_toml(item, _prefix=name + "."))
    return "\n".join(line for line in lines if line is not None).strip("\n")


# ---------------------------------------------------------------------------
# scenario object
# ---------------------------------------------------------------------------

_EXPERIMENTS = (
    "constants",
    "solve-pde",
    "check-condition-c",
    "simulate",
    "deviate",
    "verify-bounds",
    "limit",
    "nash-check",
)


@dataclass
class Scenario:
    data: dict

    @classmethod
    def from_toml(cls, text: str) -> "Scenario":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"scenario parse error: {exc}") from exc
        sc = cls(data=data)
        sc.validate()
        return sc

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_toml(Path(path).read_text())

    def to_toml(self) -> str:
        return dumps_toml(self.data) + "\n"

    def validate(self) -> None:
        d = self.data
        game = d.get("game")
        if not isinstance(game, dict) or "id" not in game:
            raise ConfigurationError("missing [game] table with an 'id' field")
        from .games import GAME_CATALOG

        if game["id"] not in GAME_CATALOG:
            raise ConfigurationError(
                f"unknown game id {game['id']!r} in field 'game.id'; "
                f"known: {sorted(GAME_CATALOG)}"
            )
        guide = d.get("guide", {})
        if "delta" in guide and guide["delta"] < 0:
            raise ConfigurationError("field 'guide.delta' must be nonnegative")
        exp = d.get("experiment", {})
        kind = exp.get("kind", "simulate")
        if kind not in _EXPERIMENTS:
            raise ConfigurationError(
                f"unknown experiment kind {kind!r} in field 'experiment.kind'; "
                f"known: {_EXPERIMENTS}"
            )
        pair = d.get("pair", {})
        src = pair.get("source", "closed-form")
        if src not in ("closed-form", "solve-pde", "lattice-file"):
            raise ConfigurationError(
                f"unknown pair source {src!r} in field 'pair.source'"
            )
        if src == "closed-form" and pair.get("id") is not None:
            if pair["id"] not in values.CLOSED_FORM_PAIRS:
                raise ConfigurationError(
                    f"unknown value-pair id {pair['id']!r} in field 'pair.id'"
                )

    # convenience accessors ------------------------------------------------
    def get(self, *keys, default=None):
        cur: Any = self.data
        for k in keys:
            if not isinstance(cur, dict) or k not in cur:
                return default
            cur = cur[k]
        return cur

    @property
    def seed(self) -> int:
        return int(self.get("scenario", "seed", default=0))

    @property
    def name(self) -> str:
        return str(self.get("scenario", "name", default="scenario"))


# ---------------------------------------------------------------------------
# assembly helpers
# ---------------------------------------------------------------------------


def scenario_game(sc: Scenario) -> GameSpec:
    params = dict(sc.get("game", default={}))
    gid = params.pop("id")
    return make_game(gid, **params)


def scenario_guide(sc: Scenario, game: GameSpec, delta: float | None = None):
    if delta is None:
        delta = float(sc.get("guide", "delta", default=0.05))
    return mirror_guide(game, delta)


def scenario_pair(sc: Scenario, game: GameSpec, guide, out_dir: Path | None = None):
    src = sc.get("pair", "source", default="closed-form")
    if src == "closed-form":
        pid = sc.get("pair", "id", default="crossing-alt")
        zeta = float(sc.get("game", "zeta", default=0.25))
        return make_pair(pid, zeta=zeta)
    if src == "lattice-file":
        path = sc.get("pair", "path")
        if path is None:
            raise ConfigurationError("pair source 'lattice-file' needs 'pair.path'")
        return values.load_lattice(path)
    # solve-pde
    box, h, dt = _lattice_params(sc, game, guide.delta)
    return values.solve_parabolic_system(
        game, guide, sign_axis_law(), box=box, h=h, dt=dt
    )


def _lattice_params(sc: Scenario, game: GameSpec, delta: float):
    h = float(sc.get("pair", "h", default=0.05))
    dt = float(sc.get("pair", "dt", default=0.002))
    box_cfg = sc.get("pair", "box")
    if box_cfg is not None:
        box = [tuple(float(b) for b in pair) for pair in box_cfg]
    else:
        x0 = np.asarray(sc.get("experiment", "x0", default=[0.0] * game.dim), dtype=float)
        half = game.M * game.horizon + 6.0 * delta * math.sqrt(game.horizon) + 0.5
        box = [(float(c - half), float(c + half)) for c in x0]
    return box, h, dt


def default_policies(pair):
    """Joint equilibrium mixture and the punishment mixtures for the planar
    crossing game's closed-form pairs."""
    if isinstance(pair, ClosedFormPair) and pair.sign > 0:
        eq_pol = dirac_policy(-1.0, -1.0)
    else:
        eq_pol = dirac_policy(+1.0, +1.0)
    punish1 = lambda v: dirac_policy(+1.0, v)  # noqa: E731
    punish2 = lambda u: dirac_policy(u, +1.0)  # noqa: E731
    return eq_pol, punish1, punish2


def scenario_profile(
    sc: Scenario,
    delta: float | None = None,
    seed: int | None = None,
) -> eq.CorrelatedProfile:
    game = scenario_game(sc)
    guide = scenario_guide(sc, game, delta)
    pair = scenario_pair(sc, game, guide)
    n = int(sc.get("partition", "n", default=100))
    t0 = float(sc.get("partition", "t0", default=0.0))
    partition = eq.uniform_partition(t0, game.horizon, n)
    eq_pol, punish1, punish2 = default_policies(pair)
    return eq.build_profile(
        game=game,
        guide=guide,
        pair=pair,
        partition=partition,
        eq_policy=eq_pol,
        punish1=punish1,
        punish2=punish2,
        psi_mode=str(sc.get("experiment", "psi_mode", default="closed-form")),
        psi_n_inner=int(sc.get("experiment", "psi_n_inner", default=256)),
        master_seed=sc.seed if seed is None else seed,
        noise_convention=str(
            sc.get("guide", "convention", default="dimension-adjusted")
        ),
    )


def _zero_sum_values(sc: Scenario, game: GameSpec):
    x0 = np.asarray(sc.get("experiment", "x0", default=[0.0] * game.dim), dtype=float)
    h = float(sc.get("experiment", "zero_sum_h", default=0.05))
    dt = float(sc.get("experiment", "zero_sum_dt", default=0.02))
    half = game.M * game.horizon + 0.5
    box = [(float(c - half), float(c + half)) for c in x0]
    v1 = values.solve_zero_sum_value(game, 1, box, h, dt, x0=x0)
    v2 = values.solve_zero_sum_value(game, 2, box, h, dt, x0=x0)
    return v1, v2


# ---------------------------------------------------------------------------
# experiment runners (each returns (summary_record, passed))
# ---------------------------------------------------------------------------


def _run_constants(sc: Scenario, out: Path, seed: int, threads: int):
    game = scenario_game(sc)
    delta = float(sc.get("guide", "delta", default=0.05))
    n = int(sc.get("partition", "n", default=100))
    consts = shift.ShiftConstants.from_game(game, delta)
    table = shift.constants_table(consts, game.horizon / n)
    reports.emit_csv(
        out / "constants.csv",
        ["name", "value"],
        [(k, v) for k, v in table.items()],
    )
    return {"experiment": "constants", "table": table, "passed": True}, True


def _run_solve_pde(sc: Scenario, out: Path, seed: int, threads: int):
    game = scenario_game(sc)
    guide = scenario_guide(sc, game)
    box, h, dt = _lattice_params(sc, game, guide.delta)
    exact = None
    if game.name == "crossing":
        exact = make_pair("crossing-solution", zeta=float(sc.get("game", "zeta", default=0.25)))
    pair = values.solve_parabolic_system(
        game, guide, sign_axis_law(), box=box, h=h, dt=dt, exact_pair=exact
    )
    values.save_lattice(out / "pair_lattice.npz", pair)
    err = pair.params.get("max_interior_error")
    tol = float(sc.get("experiment", "pde_tol", default=1e-3))
    passed = True if err is None else err <= tol
    return (
        {
            "experiment": "solve-pde",
            "lattice": {"box": box, "h": h, "dt": dt},
            "max_interior_error": err,
            "tolerance": tol,
            "passed": passed,
        },
        passed,
    )


def _run_condition_c(sc: Scenario, out: Path, seed: int, threads: int):
    game = scenario_game(sc)
    guide = scenario_guide(sc, game)
    pair = scenario_pair(sc, game, guide)
    eq_pol, punish1, punish2 = default_policies(pair)
    rng = np.random.default_rng(seed)
    frozen = [(-1.0,), (0.0,), (1.0,)]
    report = guides.check_condition_stability(
        guide,
        pair,
        intervals=[(0.0, 0.5)],
        states=[np.zeros(game.dim)],
        eq_policy=eq_pol,
        punish1=punish1,
        punish2=punish2,
        frozen_v_values=frozen,
        frozen_u_values=frozen,
        rng=rng,
        n_samples=int(sc.get("experiment", "n_samples", default=20000)),
        tol=float(sc.get("experiment", "tol", default=1e-3)),
    )
    reports.emit_csv(
        out / "condition_c.csv",
        ["part", "s", "r", "frozen", "statistic", "se", "passed"],
        [
            (row.part, row.s, row.r, row.frozen, row.statistic, row.se, row.passed)
            for row in report.rows
        ],
    )
    return (
        {
            "experiment": "check-condition-c",
            "n_rows": len(report.rows),
            "passed": report.passed,
        },
        report.passed,
    )


def _rollout_csv(out: Path, records):
    reports.emit_csv(
        out / "rollouts.csv",
        ["rollout_id", "payoff1", "payoff2", "theta", "terminal_gap_sq"],
        [
            (r.rollout_id, r.payoffs[0], r.payoffs[1],
             r.theta if r.theta is not None else "", r.gap_sq[-1])
            for r in records
        ],
    )


def _run_simulate(sc: Scenario, out: Path, seed: int, threads: int):
    profile = scenario_profile(sc, seed=seed)
    x0 = np.asarray(sc.get("experiment", "x0", default=[0.0] * profile.game.dim), dtype=float)
    n = int(sc.get("experiment", "n_rollouts", default=200))
    records = eq.run_rollouts(profile, x0, eq.NO_DEVIATION, n, threads)
    rep = eq.estimate_equilibrium(profile, x0, n, records=records)
    _rollout_csv(out, records)
    summary = {
        "experiment": "simulate",
        "n_rollouts": rep.n_rollouts,
        "mean_payoffs": list(rep.mean_payoffs),
        "ci_half": list(rep.ci_half),
        "target_values": list(rep.target_values),
        "gaps": list(rep.gaps),
        "epsilon_limit": rep.epsilon_limit,
        "epsilon_at_fineness": rep.epsilon_at_fineness,
        "switch_fraction": rep.switch_fraction,
        "passed": rep.passed,
    }
    return summary, rep.passed


def _deviations_from_config(sc: Scenario, profile) -> list[eq.DeviationSpec]:
    cfg = sc.get("experiment", "deviation", default=None)
    if not cfg:
        return [
            eq.DeviationSpec(player=1, kind="constant", control=(1.0,)),
            eq.DeviationSpec(player=2, kind="constant", control=(1.0,)),
        ]
    devs = []
    for entry in cfg:
        kind = entry.get("kind", "constant")
        kwargs = dict(player=int(entry.get("player", 1)), kind=kind)
        if kind == "constant":
            kwargs["control"] = tuple(float(c) for c in entry.get("control", [1.0]))
        if kind == "feedback":
            kwargs["law"] = sign_axis_law()
        devs.append(eq.DeviationSpec(**kwargs))
    return devs


def _run_deviate(sc: Scenario, out: Path, seed: int, threads: int):
    profile = scenario_profile(sc, seed=seed)
    x0 = np.asarray(sc.get("experiment", "x0", default=[0.0] * profile.game.dim), dtype=float)
    n = int(sc.get("experiment", "n_rollouts", default=500))
    base = eq.run_rollouts(profile, x0, eq.NO_DEVIATION, n, threads)
    rows = []
    all_pass = True
    for dev in _deviations_from_config(sc, profile):
        rep = eq.deviation_gain(profile, x0, dev, n, threads, base_records=base)
        rows.append(rep)
        all_pass = all_pass and rep.passed
    reports.emit_csv(
        out / "deviations.csv",
        ["player", "kind", "gain", "gain_se", "epsilon_limit",
         "switch_fraction", "theta_lt_T_fraction", "passed"],
        [
            (r.player, r.kind, r.gain, r.gain_se, r.epsilon_limit,
             r.switch_fraction, r.theta_lt_T_fraction, r.passed)
            for r in rows
        ],
    )
    summary = {
        "experiment": "deviate",
        "n_rollouts": n,
        "reports": [
            {
                "player": r.player, "kind": r.kind, "gain": r.gain,
                "gain_se": r.gain_se, "switch_fraction": r.switch_fraction,
                "theta_lt_T_fraction": r.theta_lt_T_fraction, "passed": r.passed,
            }
            for r in rows
        ],
        "passed": all_pass,
    }
    return summary, all_pass


def _run_verify_bounds(sc: Scenario, out: Path, seed: int, threads: int):
    profile = scenario_profile(sc, seed=seed)
    x0 = np.asarray(sc.get("experiment", "x0", default=[0.0] * profile.game.dim), dtype=float)
    n = int(sc.get("experiment", "n_rollouts", default=500))
    records = eq.run_rollouts(profile, x0, eq.NO_DEVIATION, n, threads)
    rep = eq.verify_tracking_bounds(profile, records)
    gaps = np.stack([r.gap_sq for r in records])
    mean_gap = np.mean(gaps, axis=0)
    bounds = np.stack([r.bound for r in records])
    reports.emit_plotdata(
        out / "tracking.csv",
        {
            "step": np.arange(len(mean_gap)),
            "mean_gap_sq": mean_gap,
            "mean_bound": np.concatenate([[0.0], np.mean(bounds, axis=0)]),
        },
    )
    summary = {
        "experiment": "verify-bounds",
        "pre_switch_identity_fraction": rep.pre_switch_identity_fraction,
        "step_pass_fraction": rep.step_pass_fraction,
        "terminal_mean_gap_sq": rep.terminal_mean_gap_sq,
        "terminal_bound": rep.terminal_bound,
        "passed": rep.passed,
    }
    return summary, rep.passed


def _run_limit(sc: Scenario, out: Path, seed: int, threads: int):
    game = scenario_game(sc)
    deltas = [float(d) for d in sc.get("experiment", "deltas", default=[0.2, 0.1, 0.05, 0.025])]
    x0 = np.asarray(sc.get("experiment", "x0", default=[0.0] * game.dim), dtype=float)
    n = int(sc.get("experiment", "n_rollouts", default=200))
    v1, v2 = _zero_sum_values(sc, game)

    def make_profile(delta):
        return scenario_profile(sc, delta=delta, seed=seed)

    rep = eq.limit_experiment(
        make_profile, deltas, x0, n, val1=v1, val2=v2,
        nash_tol=float(sc.get("experiment", "nash_tol", default=0.05)),
        threads=threads,
    )
    reports.emit_csv(
        out / "limit.csv",
        ["delta", "target1", "target2", "mean1", "mean2", "gap1", "gap2",
         "ci1", "ci2", "epsilon_limit"],
        [
            (row.delta, row.targets[0], row.targets[1], row.mean_payoffs[0],
             row.mean_payoffs[1], row.gaps[0], row.gaps[1], row.ci_half[0],
             row.ci_half[1], row.epsilon_limit)
            for row in rep.rows
        ],
    )
    passed = rep.monotone_within_ci and (rep.nash_passed is not False)
    summary = {
        "experiment": "limit",
        "limit_point": list(rep.limit_point),
        "monotone_within_ci": rep.monotone_within_ci,
        "nash_passed": rep.nash_passed,
        "passed": passed,
    }
    return summary, passed


def _named_path(game: GameSpec, x0: np.ndarray, name: str, n: int = 50):
    t = np.linspace(0.0, game.horizon, n + 1)
    if name == "equilibrium":
        direction = np.array([-1.0, -1.0])
    elif name == "greedy":
        direction = np.array([1.0, -1.0])
    else:
        raise ConfigurationError(f"unknown path name {name!r} in 'experiment.paths'")
    states = x0[None, :] + t[:, None] * direction[None, :]
    from .games import Trajectory

    return Trajectory(times=t, states=states)


def _run_nash_check(sc: Scenario, out: Path, seed: int, threads: int):
    game = scenario_game(sc)
    x0 = np.asarray(sc.get("experiment", "x0", default=[0.0] * game.dim), dtype=float)
    v1, v2 = _zero_sum_values(sc, game)
    tol = float(sc.get("experiment", "tol", default=0.05))
    paths = sc.get("experiment", "paths", default=[
        {"name": "equilibrium", "expect": "pass"},
        {"name": "greedy", "expect": "fail"},
    ])
    rows = []
    all_ok = True
    for entry in paths:
        traj = _named_path(game, x0, entry["name"])
        check = eq.nash_payoff_check(traj, v1, v2, game, tol)
        expected = entry.get("expect", "pass") == "pass"
        ok = check.passed == expected
        all_ok = all_ok and ok
        rows.append(
            {
                "path": entry["name"],
                "passed": check.passed,
                "expected_pass": expected,
                "min_margin": list(check.min_margin),
                "velocity_ok": check.velocity_ok,
                "as_expected": ok,
            }
        )
    summary = {"experiment": "nash-check", "paths": rows, "passed": all_ok}
    return summary, all_ok


_RUNNERS = {
    "constants": _run_constants,
    "solve-pde": _run_solve_pde,
    "check-condition-c": _run_condition_c,
    "simulate": _run_simulate,
    "deviate": _run_deviate,
    "verify-bounds": _run_verify_bounds,
    "limit": _run_limit,
    "nash-check": _run_nash_check,
}


def run_scenario(
    config_path,
    out_dir=None,
    seed: int | None = None,
    threads: int = 1,
    experiment: str | None = None,
) -> int:
    """Execute a scenario file; returns the process exit status (0 = all
    asserted verdicts passed)."""
    sc = Scenario.load(config_path)
    kind = experiment or sc.get("experiment", "kind", default="simulate")
    if kind not in _RUNNERS:
        raise ConfigurationError(f"unknown experiment kind {kind!r}")
    out = Path(out_dir if out_dir is not None else sc.get("output", "dir", default="out"))
    out.mkdir(parents=True, exist_ok=True)
    eff_seed = sc.seed if seed is None else int(seed)
    summary, passed = _RUNNERS[kind](sc, out, eff_seed, threads)
    summary["scenario"] = sc.name
    summary["seed"] = eff_seed
    reports.emit_tree(summary, out / "summary.json")
    return 0 if passed else 1
