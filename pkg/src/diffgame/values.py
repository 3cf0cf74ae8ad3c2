"""Candidate value pairs (c1, c2), PDE solvers, and zero-sum baselines.

A value pair assigns each player a function ``c_i(t, x)`` with terminal
condition ``c_i(T, x) = gamma_i(x)``.  Pairs are either closed forms from the
catalog or grid solutions of the coupled parabolic system

    dc_i/dt + <b(t,x,uN,vN), grad c_i> + (1/2) <G grad, grad> c_i + h_i = 0,

where the feedback controls ``uN, vN`` are computed per time level from the
current gradients.  The zero-sum values ``Val_i`` (each player's guaranteed
payoff against a hostile opponent) are solved by backward semi-Lagrangian
dynamic programming and serve as the punishment baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import kron, identity, diags
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, LatticeRefusal, NumericError
from .games import Array, GameSpec, as_control
from .guides import GeneratorSpec

# ---------------------------------------------------------------------------
# small utilities
# ---------------------------------------------------------------------------


def clip(a: float) -> float:
    """Saturate to [-1, 1]: a if |a| <= 1 else sign(a)."""
    if a > 1.0:
        return 1.0
    if a < -1.0:
        return -1.0
    return float(a)


def sgn(a) -> Array:
    """Sign with the deterministic convention sgn(0) = +1."""
    return np.where(np.asarray(a) >= 0.0, 1.0, -1.0)


def multilinear_interp(axes: Sequence[Array], values: Array, pts: Array) -> Array:
    """Multilinear interpolation on a uniform-ish rectilinear grid.

    Queries outside the grid are linearly extrapolated from the edge cell
    (consistent with the solver's zero-second-normal-difference boundary).
    ``pts`` has shape (n, d); returns (n,).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n, d = pts.shape
    idx = []
    frac = []
    for k in range(d):
        ax = axes[k]
        i = np.searchsorted(ax, pts[:, k], side="right") - 1
        i = np.clip(i, 0, len(ax) - 2)
        idx.append(i)
        frac.append((pts[:, k] - ax[i]) / (ax[i + 1] - ax[i]))
    out = np.zeros(n)
    for corner in range(2**d):
        w = np.ones(n)
        ind = []
        for k in range(d):
            bit = (corner >> k) & 1
            w = w * (frac[k] if bit else 1.0 - frac[k])
            ind.append(idx[k] + bit)
        out += w * values[tuple(ind)]
    return out


# ---------------------------------------------------------------------------
# closed-form pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClosedFormPair:
    """Closed-form pairs for the planar crossing game.

    ``c_i = zeta*x_i - x_{3-i} + sign*(1-zeta)*(T-t)``.  With ``sign = -1``
    (id ``crossing-solution``) the pair solves the parabolic system driven by
    the sign feedback; with ``sign = +1`` (id ``crossing-alt``) it does not
    solve the system but is stable for the guide under the joint policy
    steering both coordinates down.
    """

    zeta: float = 0.25
    sign: float = -1.0
    horizon: float = 1.0

    @property
    def id(self) -> str:
        return "crossing-solution" if self.sign < 0 else "crossing-alt"

    def value(self, i: int, t, x) -> Array:
        x = np.asarray(x, dtype=float)
        own, other = (0, 1) if i == 1 else (1, 0)
        return (
            self.zeta * x[..., own]
            - x[..., other]
            + self.sign * (1.0 - self.zeta) * (self.horizon - np.asarray(t))
        )

    def gradient(self, i: int, t, x) -> Array:
        x = np.asarray(x, dtype=float)
        g = np.empty(x.shape)
        own, other = (0, 1) if i == 1 else (1, 0)
        g[..., own] = self.zeta
        g[..., other] = -1.0
        return g

    def time_derivative(self, i: int, t, x) -> Array:
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], -self.sign * (1.0 - self.zeta))

    def hessian(self, i: int, t, x) -> Array:
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        return np.zeros(x.shape + (d,))


CLOSED_FORM_PAIRS: dict[str, Callable[..., ClosedFormPair]] = {
    "crossing-solution": lambda zeta=0.25: ClosedFormPair(zeta=zeta, sign=-1.0),
    "crossing-alt": lambda zeta=0.25: ClosedFormPair(zeta=zeta, sign=+1.0),
}


def make_pair(pair_id: str, **params) -> ClosedFormPair:
    try:
        factory = CLOSED_FORM_PAIRS[pair_id]
    except KeyError:
        raise ConfigurationError(
            f"unknown value-pair id {pair_id!r} (field 'pair.id'); "
            f"known: {sorted(CLOSED_FORM_PAIRS)}"
        ) from None
    return factory(**params)


# ---------------------------------------------------------------------------
# grid pairs
# ---------------------------------------------------------------------------


@dataclass
class GridPair:
    """A value pair stored on a space-time lattice.

    ``times`` is increasing; ``values`` has shape (2, nt, *grid).  Space
    interpolation is multilinear with linear extrapolation; time
    interpolation is linear between stored levels.  Gradients come from
    per-level central differences (one-sided at the faces), interpolated the
    same way, so the residual checks and the feedback laws see identical
    derivative data.
    """

    times: Array
    axes: tuple
    values: Array
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if not np.all(np.isfinite(self.values)):
            raise NumericError("grid pair contains non-finite values")
        self._grad_cache: dict = {}

    @property
    def dim(self) -> int:
        return len(self.axes)

    def _bracket(self, t: float) -> tuple[int, int, float]:
        ts = self.times
        if t <= ts[0]:
            return 0, 0, 0.0
        if t >= ts[-1]:
            return len(ts) - 1, len(ts) - 1, 0.0
        j = int(np.searchsorted(ts, t, side="right") - 1)
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return j, j + 1, float(w)

    def _level_grad(self, i: int, j: int) -> tuple:
        key = (i, j)
        if key not in self._grad_cache:
            spacings = [float(ax[1] - ax[0]) for ax in self.axes]
            g = np.gradient(self.values[i - 1, j], *spacings, edge_order=1)
            if self.dim == 1:
                g = (g,)
            self._grad_cache[key] = tuple(g)
        return self._grad_cache[key]

    def value(self, i: int, t, x) -> Array:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        j0, j1, w = self._bracket(float(np.asarray(t)))
        v0 = multilinear_interp(self.axes, self.values[i - 1, j0], x)
        if j1 == j0:
            out = v0
        else:
            v1 = multilinear_interp(self.axes, self.values[i - 1, j1], x)
            out = (1 - w) * v0 + w * v1
        return out if out.shape != (1,) else out[0]

    def gradient(self, i: int, t, x) -> Array:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        j0, j1, w = self._bracket(float(np.asarray(t)))
        out = np.empty(x.shape)
        g0 = self._level_grad(i, j0)
        g1 = self._level_grad(i, j1) if j1 != j0 else g0
        for k in range(self.dim):
            a = multilinear_interp(self.axes, g0[k], x)
            b = multilinear_interp(self.axes, g1[k], x) if j1 != j0 else a
            out[:, k] = (1 - w) * a + w * b
        return out if x.shape[0] != 1 else out[0]

    def in_box(self, x) -> bool:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return all(
            bool(np.all((x[:, k] >= ax[0]) & (x[:, k] <= ax[-1])))
            for k, ax in enumerate(self.axes)
        )


@dataclass
class ValueEval:
    c1: float
    c2: float
    grad1: Array
    grad2: Array
    extrapolated: bool = False


def eval_value_and_gradient(pair, t: float, x) -> ValueEval:
    """Evaluate both values and gradients at one point."""
    x = np.asarray(x, dtype=float)
    extrapolated = False
    if isinstance(pair, GridPair):
        extrapolated = not pair.in_box(x)
    return ValueEval(
        c1=float(pair.value(1, t, x)),
        c2=float(pair.value(2, t, x)),
        grad1=np.asarray(pair.gradient(1, t, x), dtype=float),
        grad2=np.asarray(pair.gradient(2, t, x), dtype=float),
        extrapolated=extrapolated,
    )


# ---------------------------------------------------------------------------
# feedback laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeedbackLaw:
    """Feedback controls computed from the value gradients.

    ``u_fn`` and ``v_fn`` map ``(t, x, p1, p2)`` to a scalar control and must
    broadcast over mesh-shaped inputs (``x``, ``p1``, ``p2`` of shape
    ``(..., d)``).
    """

    id: str
    u_fn: Callable
    v_fn: Callable


def sign_axis_law() -> FeedbackLaw:
    """Each player pushes their own coordinate in the direction that
    increases their value: ``u = sgn(p1[0])``, ``v = sgn(p2[1])``."""
    return FeedbackLaw(
        id="sign-own-axis",
        u_fn=lambda t, x, p1, p2: sgn(p1[..., 0]),
        v_fn=lambda t, x, p1, p2: sgn(p2[..., 1]),
    )


def clip_affine_law(coef1: float, coef2: float, delta: float) -> FeedbackLaw:
    """Scalar-game law ``u = clip(p1 * coef1 / delta)`` and symmetric for v."""
    if delta <= 0:
        raise ConfigurationError("clip law needs delta > 0")
    cl = np.vectorize(clip)
    return FeedbackLaw(
        id="clip-affine",
        u_fn=lambda t, x, p1, p2: cl(p1[..., 0] * coef1 / delta),
        v_fn=lambda t, x, p1, p2: cl(p2[..., 0] * coef2 / delta),
    )


def constant_law(u: float, v: float) -> FeedbackLaw:
    """Gradient-independent law playing fixed controls (oracle problems)."""
    return FeedbackLaw(
        id="constant",
        u_fn=lambda t, x, p1, p2: np.full(np.asarray(x).shape[:-1], float(u)),
        v_fn=lambda t, x, p1, p2: np.full(np.asarray(x).shape[:-1], float(v)),
    )


FEEDBACK_LAWS: dict[str, Callable[..., FeedbackLaw]] = {
    "sign-own-axis": sign_axis_law,
    "clip-affine": clip_affine_law,
    "constant": constant_law,
}


# ---------------------------------------------------------------------------
# parabolic system solver
# ---------------------------------------------------------------------------


def _axis_grid(lo: float, hi: float, h: float) -> Array:
    n = int(round((hi - lo) / h))
    return lo + h * np.arange(n + 1)


def _second_difference_matrix(n: int, h: float):
    """1-d second-difference operator with zero rows at the faces
    (the zero-second-normal-difference boundary condition)."""
    main = np.full(n, -2.0)
    main[0] = main[-1] = 0.0
    lo = np.ones(n - 1)
    lo[-1] = 0.0
    up = np.ones(n - 1)
    up[0] = 0.0
    return diags([lo, main, up], [-1, 0, 1], format="csc") / h**2


def _upwind_derivative(c: Array, b: Array, h: float, axis: int) -> Array:
    """First-order upwind difference of c along axis, direction chosen by b.

    Edge nodes fall back to the inside-pointing one-sided difference (exact
    for linear data either way).
    """
    fwd = (np.roll(c, -1, axis=axis) - c) / h
    bwd = (c - np.roll(c, 1, axis=axis)) / h
    # repair the wrapped edges with the interior one-sided difference
    first = [slice(None)] * c.ndim
    last = [slice(None)] * c.ndim
    first[axis] = 0
    last[axis] = -1
    bwd[tuple(first)] = np.take(fwd, 0, axis=axis)
    fwd[tuple(last)] = np.take(bwd, -1, axis=axis)
    return np.where(b > 0, fwd, bwd)


def solve_parabolic_system(
    game: GameSpec,
    guide: GeneratorSpec,
    law: FeedbackLaw,
    box: Sequence[tuple[float, float]],
    h: float,
    dt: float,
    store_every: int | None = None,
    exact_pair=None,
) -> GridPair:
    """Backward sweep of the coupled value system on a truncated box.

    Operator splitting per time level: evaluate gradients, freeze the
    feedback controls, take an explicit upwind advection + reward step, then
    an implicit diffusion step.  Boundary handling is linear extrapolation
    (zero second normal difference), exact for linear solutions.

    ``exact_pair`` optionally supplies a reference pair; the maximum interior
    error against it across all swept levels is recorded in
    ``params['max_interior_error']``.

    Refuses with a suggested time step if the explicit advection part
    violates its CFL condition.
    """
    if guide.sigma is None or not guide.sigma.constant:
        raise ConfigurationError(
            "parabolic solver requires a diffusion guide with constant sigma"
        )
    d = game.dim
    if d not in (1, 2):
        raise ConfigurationError("parabolic solver supports d in {1, 2}")
    axes = tuple(_axis_grid(lo, hi, h) for (lo, hi) in box)
    shape = tuple(len(a) for a in axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)  # (*shape, d)
    nsteps = int(round(game.horizon / dt))
    if store_every is None:
        store_every = max(1, nsteps // 100)

    # implicit diffusion operator (constant in time): I - (dt/2) sum G_kk D2_k
    g_diag = np.diag(guide.sigma.gram(0.0, mesh.reshape(-1, d)[0]))
    ntot = int(np.prod(shape))
    op = identity(ntot, format="csc")
    if np.any(g_diag != 0.0):
        lap = None
        for k in range(d):
            d2 = _second_difference_matrix(shape[k], h) * (0.5 * g_diag[k])
            mats = [identity(shape[j], format="csc") for j in range(d)]
            mats[k] = d2
            term = mats[0]
            for m in mats[1:]:
                term = kron(term, m, format="csc")
            lap = term if lap is None else lap + term
        op = (identity(ntot, format="csc") - dt * lap).tocsc()
    solver = splu(op)

    c = np.stack(
        [np.asarray(game.gamma1(mesh), dtype=float),
         np.asarray(game.gamma2(mesh), dtype=float)]
    )  # (2, *shape)
    stored_times = [game.horizon]
    stored_vals = [c.copy()]
    max_err = 0.0
    interior = tuple(slice(1, -1) for _ in range(d))

    spacings = [h] * d
    t = game.horizon
    for m in range(nsteps):
        t_new = game.horizon - (m + 1) * dt
        grads = []
        for i in range(2):
            g = np.gradient(c[i], *spacings, edge_order=1)
            grads.append(np.stack(g if d > 1 else [g], axis=-1))
        u = np.asarray(law.u_fn(t, mesh, grads[0], grads[1]), dtype=float)[..., None]
        v = np.asarray(law.v_fn(t, mesh, grads[0], grads[1]), dtype=float)[..., None]
        b = guide.drift(t, mesh, u, v)  # (*shape, d)
        speed = float(np.max(np.sum(np.abs(b), axis=-1)))
        if speed * dt / h > 1.0 + 1e-12:
            raise LatticeRefusal(
                "advection CFL violated",
                suggestion=f"use dt <= {h / speed:.3e}",
            )
        new_c = np.empty_like(c)
        for i in range(2):
            adv = np.zeros(shape)
            for k in range(d):
                adv += b[..., k] * _upwind_derivative(c[i], b[..., k], h, axis=k)
            hterm = np.asarray(
                (guide.h1 if i == 0 else guide.h2)(t, mesh, u, v), dtype=float
            )
            rhs = c[i] + dt * (adv + hterm)
            new_c[i] = solver.solve(rhs.reshape(-1)).reshape(shape)
        c = new_c
        if not np.all(np.isfinite(c)):
            raise NumericError("parabolic solve produced non-finite values")
        t = t_new
        if exact_pair is not None:
            for i in (1, 2):
                ref = np.asarray(exact_pair.value(i, t, mesh), dtype=float)
                max_err = max(max_err, float(np.max(np.abs((c[i - 1] - ref)[interior]))))
        if (m + 1) % store_every == 0 or m == nsteps - 1:
            stored_times.append(t)
            stored_vals.append(c.copy())

    order = np.argsort(stored_times)
    times = np.asarray(stored_times)[order]
    vals = np.stack(stored_vals, axis=1)[:, order]  # (2, nt, *shape)
    params = {
        "box": [list(b) for b in box],
        "h": h,
        "dt": dt,
        "delta": guide.delta,
        "law": law.id,
        "game": game.name,
        "kind": "grid-pair",
    }
    if exact_pair is not None:
        params["max_interior_error"] = max_err
    return GridPair(times=times, axes=axes, values=vals, params=params)


# ---------------------------------------------------------------------------
# residual checks
# ---------------------------------------------------------------------------


@dataclass
class ResidualReport:
    max_pde_residual: tuple[float, float]
    max_nash_violation: tuple[float, float]
    max_boundary_residual: float
    solves_system: bool


def smooth_case_residuals(
    pair,
    game: GameSpec,
    guide: GeneratorSpec,
    law: FeedbackLaw,
    times: Sequence[float],
    points: Sequence,
    pde_tol: float = 1e-6,
    fd_dt: float = 1e-4,
) -> ResidualReport:
    """PDE residuals, feedback Nash-optimality violations, and the terminal
    boundary residual of a candidate pair on a sample cloud.

    The PDE residual at (t, x) is

        dc_i/dt + <b(t,x,u0,v0), grad c_i> + (1/2) tr(G Hess c_i) + h_i,

    with (u0, v0) from the feedback law at the pair's own gradients.  The
    Nash violation for player 1 is how much a grid control u improves on u0
    in the Hamiltonian with v frozen at v0 (and symmetrically for player 2).
    """
    max_res = [0.0, 0.0]
    max_nash = [0.0, 0.0]
    closed = isinstance(pair, ClosedFormPair)
    for t in times:
        for x in points:
            x = np.asarray(x, dtype=float)
            g1 = np.asarray(pair.gradient(1, t, x), dtype=float)
            g2 = np.asarray(pair.gradient(2, t, x), dtype=float)
            u0 = as_control(law.u_fn(t, x, g1, g2))
            v0 = as_control(law.v_fn(t, x, g1, g2))
            b = guide.drift(t, x, u0, v0)
            G = guide.sigma.gram(t, x) if guide.sigma is not None else None
            for i, grad in ((1, g1), (2, g2)):
                if closed:
                    ct = float(pair.time_derivative(i, t, x))
                    hess_term = 0.0 if G is None else 0.5 * float(
                        np.sum(np.diag(G) * np.diag(pair.hessian(i, t, x)))
                    )
                else:
                    tm = max(t - fd_dt, float(pair.times[0]))
                    tp = min(t + fd_dt, float(pair.times[-1]))
                    ct = (float(pair.value(i, tp, x)) - float(pair.value(i, tm, x))) / (
                        tp - tm
                    )
                    hess_term = 0.0
                    if G is not None:
                        hh = pair.axes[0][1] - pair.axes[0][0]
                        for k in range(game.dim):
                            e = np.zeros(game.dim)
                            e[k] = hh
                            second = (
                                float(pair.value(i, t, x + e))
                                - 2.0 * float(pair.value(i, t, x))
                                + float(pair.value(i, t, x - e))
                            ) / hh**2
                            hess_term += 0.5 * G[k, k] * second
                hterm = float((guide.h1 if i == 1 else guide.h2)(t, x, u0, v0))
                res = ct + float(b @ grad) + hess_term + hterm
                max_res[i - 1] = max(max_res[i - 1], abs(res))
            # Nash-optimality of the feedback controls in the Hamiltonian
            ham_u = (
                guide.drift(t, x, game.u_grid.array, v0) @ g1
                + np.asarray(guide.h1(t, x, game.u_grid.array, v0), dtype=float)
            )
            ham_u0 = float(guide.drift(t, x, u0, v0) @ g1) + float(
                guide.h1(t, x, u0, v0)
            )
            max_nash[0] = max(max_nash[0], float(np.max(ham_u)) - ham_u0)
            ham_v = (
                guide.drift(t, x, u0, game.v_grid.array) @ g2
                + np.asarray(guide.h2(t, x, u0, game.v_grid.array), dtype=float)
            )
            ham_v0 = float(guide.drift(t, x, u0, v0) @ g2) + float(
                guide.h2(t, x, u0, v0)
            )
            max_nash[1] = max(max_nash[1], float(np.max(ham_v)) - ham_v0)
    T = game.horizon
    bres = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        bres = max(
            bres,
            abs(float(pair.value(1, T, x)) - float(game.gamma1(x))),
            abs(float(pair.value(2, T, x)) - float(game.gamma2(x))),
        )
    return ResidualReport(
        max_pde_residual=(max_res[0], max_res[1]),
        max_nash_violation=(max_nash[0], max_nash[1]),
        max_boundary_residual=bres,
        solves_system=max(max_res) <= pde_tol,
    )


# ---------------------------------------------------------------------------
# zero-sum values
# ---------------------------------------------------------------------------


@dataclass
class ZeroSumValue:
    """Guaranteed-value grid ``Val_i`` for one player."""

    player: int
    times: Array
    axes: tuple
    values: Array  # (nt, *shape)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)

    def value(self, t, x) -> Array:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ts = self.times
        tt = float(np.asarray(t))
        if tt <= ts[0]:
            j0 = j1 = 0
            w = 0.0
        elif tt >= ts[-1]:
            j0 = j1 = len(ts) - 1
            w = 0.0
        else:
            j0 = int(np.searchsorted(ts, tt, side="right") - 1)
            j1 = j0 + 1
            w = (tt - ts[j0]) / (ts[j1] - ts[j0])
        v0 = multilinear_interp(self.axes, self.values[j0], x)
        out = v0 if j1 == j0 else (1 - w) * v0 + w * multilinear_interp(
            self.axes, self.values[j1], x
        )
        return out if out.shape != (1,) else out[0]

    def in_box(self, x) -> bool:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return all(
            bool(np.all((x[:, k] >= ax[0]) & (x[:, k] <= ax[-1])))
            for k, ax in enumerate(self.axes)
        )


def solve_zero_sum_value(
    game: GameSpec,
    player: int,
    box: Sequence[tuple[float, float]],
    h: float,
    dt: float,
    t0: float = 0.0,
    x0=None,
) -> ZeroSumValue:
    """Backward semi-Lagrangian max-min sweep for one player's value.

    ``Val_i(t, x) = max_own min_adv Val_i(t + dt, x + dt * f)`` over the
    control grids, with multilinear interpolation (and linear extrapolation)
    of the next level.  Exact for linear values under separated linear
    dynamics.  Refuses if the reachable tube of ``x0`` is not covered.
    """
    if player not in (1, 2):
        raise ConfigurationError("player must be 1 or 2")
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        need = game.M * (game.horizon - t0) + 0.1
        for k, (lo, hi) in enumerate(box):
            if x0[k] - need < lo or x0[k] + need > hi:
                raise LatticeRefusal(
                    "reachable tube exits the lattice",
                    suggestion=(
                        f"need box covering x0 +/- {need:.3f} in coordinate {k}"
                    ),
                )
    axes = tuple(_axis_grid(lo, hi, h) for (lo, hi) in box)
    shape = tuple(len(a) for a in axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, game.dim)
    gamma = game.gamma1 if player == 1 else game.gamma2
    payoff = np.asarray(gamma(mesh), dtype=float)
    nsteps = int(round((game.horizon - t0) / dt))
    times = game.horizon - dt * np.arange(nsteps + 1)
    levels = [payoff]
    V = payoff
    u_arr, v_arr = game.u_grid.array, game.v_grid.array
    for m in range(nsteps):
        t = times[m + 1]
        best_own = None
        own_grid, adv_grid = (u_arr, v_arr) if player == 1 else (v_arr, u_arr)
        for own in own_grid:
            worst = None
            for adv in adv_grid:
                u, v = (own, adv) if player == 1 else (adv, own)
                foot = pts + dt * (game.f1(t, pts, u) + game.f2(t, pts, v))
                vals = multilinear_interp(axes, V, foot)
                worst = vals if worst is None else np.minimum(worst, vals)
            best_own = worst if best_own is None else np.maximum(best_own, worst)
        V = best_own.reshape(shape)
        levels.append(V)
    order = np.argsort(times)
    return ZeroSumValue(
        player=player,
        times=times[order],
        axes=axes,
        values=np.stack(levels)[order],
        params={"box": [list(b) for b in box], "h": h, "dt": dt, "game": game.name},
    )


# ---------------------------------------------------------------------------
# lattice file persistence
# ---------------------------------------------------------------------------

_LATTICE_VERSION = 1


def save_lattice(path, obj) -> None:
    """Persist a GridPair or ZeroSumValue losslessly (npz with a json header)."""
    if isinstance(obj, GridPair):
        header = {"version": _LATTICE_VERSION, "type": "grid-pair", "params": obj.params}
        arrays = {"times": obj.times, "values": obj.values}
    elif isinstance(obj, ZeroSumValue):
        header = {
            "version": _LATTICE_VERSION,
            "type": "zero-sum",
            "player": obj.player,
            "params": obj.params,
        }
        arrays = {"times": obj.times, "values": obj.values}
    else:
        raise ConfigurationError(f"cannot persist object of type {type(obj)!r}")
    for k, ax in enumerate(obj.axes):
        arrays[f"axis{k}"] = ax
    header["n_axes"] = len(obj.axes)
    np.savez(path, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_lattice(path):
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        axes = tuple(data[f"axis{k}"] for k in range(header["n_axes"]))
        if header["type"] == "grid-pair":
            return GridPair(
                times=data["times"], axes=axes, values=data["values"],
                params=header["params"],
            )
        if header["type"] == "zero-sum":
            return ZeroSumValue(
                player=header["player"], times=data["times"], axes=axes,
                values=data["values"], params=header["params"],
            )
    raise ConfigurationError(f"unknown lattice file type {header['type']!r}")
