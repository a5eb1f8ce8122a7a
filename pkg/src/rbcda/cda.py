"""Downscaling by nudging: continuous data assimilation toward coarse data.

The downscaled state (w, psi, rho) obeys the same equations as the solver
plus feedback terms that pull its coarse scales toward the observations:

    dw/dt   + ... = ... + mu_u * (I(u_obs) - I(w))
    dpsi/dt + ... = ... + mu_t * (I(T_obs) - I(psi))

where I is a piecewise-constant interpolation operator over s x s patches
of fine cells, each patch taking the value at its lower-left fine node
(the observation point).  Observations arrive every ``cadence`` fine steps
and are held constant in between (zero-order hold).  The nudging terms are
treated explicitly inside the Adams-Bashforth ladder; stability then
bounds mu*dt, which is what the tuning sweep explores.

Starting the downscaled run from zero fields exercises the convergence
claim: the error decays exponentially to a plateau set by observation
noise, coarseness, and the hold interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, solver
from .config import RunConfig
from .metrics import rms
from .observations import CoarseObservation
from .solver import BlowUpError, FieldState, SolverWorkspace
from .trajio import Trajectory

__all__ = [
    "InterpolationOperator",
    "NudgingParams",
    "CdaState",
    "interpolate",
    "cda_step",
    "downscale",
    "tune_mu",
]

# The downscaled state has the same layout and invariants as the solver
# state; only its role differs.
CdaState = FieldState


@dataclass(frozen=True)
class InterpolationOperator:
    """Piecewise-constant projection onto s x s patches of fine cells.

    Patches tile the grid; patch (ki, kj) covers fine indices
    [ki*s, (ki+1)*s) x [kj*s, (kj+1)*s) and takes the value at its
    lower-left node (i = ki*s, j = kj*s), the observation point.  On
    staggered arrays with one extra row (v), the top wall row forms its own
    degenerate patch and maps to itself.  Applying the operator twice
    equals applying it once.
    """

    nx: int
    ny: int
    s_factor: int
    dx: float
    dy: float
    kind: str = "piecewise_constant"

    def __post_init__(self):
        if self.kind != "piecewise_constant":
            raise ValueError(f"unknown interpolation kind {self.kind!r}")
        if self.s_factor < 1:
            raise ValueError("s_factor must be >= 1")
        if self.nx % self.s_factor or self.ny % self.s_factor:
            raise ValueError(
                f"observation grid (factor {self.s_factor}) does not evenly "
                f"tile the {self.nx}x{self.ny} grid"
            )

    @classmethod
    def for_grid(cls, grid, s_factor: int) -> "InterpolationOperator":
        return cls(nx=grid.nx, ny=grid.ny, s_factor=s_factor,
                   dx=grid.dx, dy=grid.dy)

    @property
    def observation_spacing(self) -> float:
        """Upper bound on patch diameter (the observation grid scale)."""
        s = self.s_factor
        return math.hypot(s * self.dx, s * self.dy)

    def patch_index(self, i: int, j: int) -> tuple[int, int]:
        return (i // self.s_factor, j // self.s_factor)

    def apply(self, field: np.ndarray, backend=None) -> np.ndarray:
        kb = backend if backend is not None else kernels.impl
        f = np.ascontiguousarray(field, dtype=float)
        if f.shape[0] != self.nx or f.shape[1] not in (self.ny, self.ny + 1):
            raise ValueError(
                f"field shape {f.shape} does not match the fine grid "
                f"({self.nx}, {self.ny}[+1])"
            )
        out = np.empty_like(f)
        kb.apply_patch_constant(f, self.s_factor, out)
        return out


def interpolate(op: InterpolationOperator, field: np.ndarray) -> np.ndarray:
    """Fine-grid field, piecewise constant over the operator's patches."""
    return op.apply(field)


@dataclass(frozen=True)
class NudgingParams:
    """Feedback coefficients for velocity and temperature nudging.

    Downscaling needs at least one strictly positive coefficient (enforced
    by :meth:`require_active`; the constructor allows the all-zero case so
    the degenerate reduces-to-plain-solver identity is expressible).
    ``velocity_only`` pins mu_t to zero; the temperature is then pulled
    toward the reference only through the velocity coupling, which
    converges markedly slower than direct temperature nudging.
    """

    mu_u: float
    mu_t: float
    velocity_only: bool = False

    def __post_init__(self):
        if self.mu_u < 0 or self.mu_t < 0:
            raise ValueError("nudging coefficients must be nonnegative")
        if self.velocity_only and self.mu_t != 0.0:
            raise ValueError("velocity_only requires mu_t == 0")

    def require_active(self) -> None:
        if self.mu_u == 0.0 and self.mu_t == 0.0:
            raise ValueError(
                "downscaling needs at least one positive nudging coefficient"
            )


def _make_nudge(op: InterpolationOperator, nudging: NudgingParams, backend):
    """Closure adding mu*(I(obs) - I(state)) to tendencies in place.

    The current coarse observation arrays live in the returned ``current``
    dict and are swapped on each observation refresh.  The v-tendency
    bottom wall row is re-zeroed: observations may carry noise on the wall
    row, but the wall stays pinned.
    """
    s = op.s_factor
    mu_u, mu_t = nudging.mu_u, nudging.mu_t
    current: dict[str, np.ndarray | None] = {"u": None, "v": None, "T": None}

    def nudge(state: FieldState, du, dv, dT) -> None:
        if mu_u != 0.0:
            backend.add_patch_nudge(du, state.u, current["u"], s, mu_u)
            backend.add_patch_nudge(dv, state.v, current["v"], s, mu_u)
            dv[:, 0] = 0.0
        if mu_t != 0.0:
            backend.add_patch_nudge(dT, state.temperature, current["T"], s,
                                    mu_t)

    return nudge, current


def cda_step(state: CdaState, obs_u, obs_v, obs_t, ws: SolverWorkspace,
             config: RunConfig, nudging: NudgingParams,
             op: InterpolationOperator) -> CdaState:
    """One nudged step given fine-grid interpolated observation arrays.

    ``obs_u``/``obs_v``/``obs_t`` are I(u_obs) etc. on the fine grid (v may
    include or omit its wall row), valid for the current hold interval.
    With both coefficients zero the result is bitwise identical to the
    plain solver step.
    """
    s = op.s_factor
    ny = op.ny
    nudge, current = _make_nudge(op, nudging, ws.kb)
    if nudging.mu_u != 0.0:
        current["u"] = np.ascontiguousarray(obs_u[::s, ::s])
        current["v"] = np.ascontiguousarray(obs_v[::s, :ny:s])
    if nudging.mu_t != 0.0:
        current["T"] = np.ascontiguousarray(obs_t[::s, ::s])
    use_nudge = nudging.mu_u != 0.0 or nudging.mu_t != 0.0
    return solver.step(state, ws, config, nudge=nudge if use_nudge else None)


def _zero_state(config: RunConfig, time: float) -> FieldState:
    grid = config.grid
    return FieldState(
        u=np.zeros(grid.shape_u),
        v=np.zeros(grid.shape_v),
        temperature=np.zeros(grid.shape_center),
        pressure=np.zeros(grid.shape_center),
        time=time,
    )


def downscale(obs: CoarseObservation, config: RunConfig,
              nudging: NudgingParams, op: InterpolationOperator | None = None,
              t_window: float | None = None, *,
              initial: FieldState | None = None, tap=None,
              record: bool = True, backend=None) -> Trajectory:
    """Run the nudged system over [0, t_window] driven by ``obs``.

    Starts from zero fields (unless ``initial`` is given), refreshes the
    observation arrays every ``obs.cadence`` fine steps, and records
    snapshots every ``config.time.save_every`` steps.  The trajectory's
    provenance hash is the observation's source hash (the reference run it
    was sampled from) and its seed field is the observation noise seed.

    The model parameters come from ``config.physical`` and may deliberately
    differ from the observation source (imperfect-model downscaling).
    """
    nudging.require_active()
    grid, time_spec = config.grid, config.time
    if grid != obs.grid:
        raise ValueError(f"config grid {grid} != observation grid {obs.grid}")
    if time_spec.dt != obs.dt:
        raise ValueError(
            f"observation cadence is defined in steps of dt = {obs.dt!r}; "
            f"config has dt = {time_spec.dt!r}"
        )
    if op is None:
        op = InterpolationOperator.for_grid(grid, obs.s_factor)
    if op.s_factor != obs.s_factor:
        raise ValueError(
            f"operator patch size {op.s_factor} != observation factor "
            f"{obs.s_factor}"
        )
    if t_window is None:
        t_window = time_spec.t_final
    n_steps = int(round(t_window / time_spec.dt))
    if abs(n_steps * time_spec.dt - t_window) > 1e-8 * max(1.0, t_window):
        raise ValueError(
            f"t_window = {t_window!r} is not a whole number of steps"
        )
    cadence = obs.cadence
    n_obs_needed = (n_steps - 1) // cadence + 1 if n_steps else 1
    if obs.n_snapshots < n_obs_needed:
        raise ValueError(
            f"observations cover {obs.n_snapshots} snapshots; the "
            f"{t_window}-unit window needs {n_obs_needed}"
        )

    kb = backend if backend is not None else kernels.impl
    ws = SolverWorkspace(config, kb)
    state = initial.copy() if initial is not None else _zero_state(
        config, float(obs.times[0]) if obs.n_snapshots else 0.0
    )
    nudge, current = _make_nudge(op, nudging, kb)

    save_every = time_spec.save_every
    n_snap = n_steps // save_every + 1 if record else 0
    if record:
        us = np.empty((n_snap, grid.nx, grid.ny))
        vs = np.empty((n_snap, grid.nx, grid.ny + 1))
        ts = np.empty((n_snap, grid.nx, grid.ny))
        ps = np.empty((n_snap, grid.nx, grid.ny))
        times = np.empty(n_snap)

        def record_snapshot(idx: int, s_: FieldState) -> None:
            us[idx] = s_.u
            vs[idx] = s_.v
            ts[idx] = s_.temperature
            ps[idx] = s_.pressure
            times[idx] = s_.time

        record_snapshot(0, state)
    if tap is not None:
        tap(0, state)

    obs_index = -1
    max_cfl = 0.0
    dt, dx, dy = time_spec.dt, grid.dx, grid.dy
    for k in range(1, n_steps + 1):
        m = (k - 1) // cadence
        if m != obs_index:
            obs_index = m
            current["u"] = obs.u[m]
            current["v"] = obs.v[m]
            current["T"] = obs.temperature[m]
        try:
            state = solver.step(state, ws, config, nudge=nudge)
        except BlowUpError as exc:
            exc.step = k
            raise
        mu_, mv_, _ = ws.last_max
        cfl = max(mu_ * dt / dx, mv_ * dt / dy)
        if cfl > max_cfl:
            max_cfl = cfl
        if record and k % save_every == 0:
            record_snapshot(k // save_every, state)
        if tap is not None:
            tap(k, state)

    if not record:
        us = np.empty((0, grid.nx, grid.ny))
        vs = np.empty((0, grid.nx, grid.ny + 1))
        ts = np.empty((0, grid.nx, grid.ny))
        ps = np.empty((0, grid.nx, grid.ny))
        times = np.empty(0)

    return Trajectory(
        grid=grid,
        physical=config.physical,
        dt=dt,
        cadence=save_every,
        seed=obs.noise_seed,
        source_hash=obs.source_hash,
        times=times,
        u=us,
        v=vs,
        temperature=ts,
        pressure=ps,
        max_cfl=max_cfl,
        final_state=state,
    )


def tune_mu(config: RunConfig, op: InterpolationOperator, candidates,
            obs: CoarseObservation, reference_temperature, reference_times,
            t_window: float, *, velocity_only: bool = False,
            plateau_fraction: float = 0.25, backend=None) -> NudgingParams:
    """Pick the nudging coefficient that reaches its error plateau fastest.

    Each candidate mu runs a cold-start downscaling over ``t_window``
    against noise-free observations; the temperature RRMSE against the
    reference is sampled at ``reference_times``.  A candidate counts as
    converged when its plateau (mean RRMSE over the final window fraction)
    is below 0.05; time-to-plateau is the first time the series drops
    under 1.5x the plateau.  Diverging candidates (blow-up or non-finite
    error) are discarded.  Ties in time-to-plateau break toward the lower
    plateau.  Raises ValueError when no candidate converges (or the grid
    is empty).
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("empty candidate grid")
    ref_t = np.asarray(reference_temperature, dtype=float)
    ref_times = np.asarray(reference_times, dtype=float)
    if ref_t.shape[0] != ref_times.size:
        raise ValueError("reference temperature/times length mismatch")
    dt = config.time.dt
    t0 = float(ref_times[0])
    eval_steps = np.round((ref_times - t0) / dt).astype(int)

    best: tuple[float, float, float] | None = None  # (t_plateau, plateau, mu)
    for mu in candidates:
        if mu <= 0:
            continue
        nudging = NudgingParams(
            mu_u=float(mu),
            mu_t=0.0 if velocity_only else float(mu),
            velocity_only=velocity_only,
        )
        series = np.full(ref_times.size, np.nan)
        step_to_idx = {int(s): i for i, s in enumerate(eval_steps)}

        def tap(k, state):
            idx = step_to_idx.get(k)
            if idx is not None:
                denom = rms(ref_t[idx])
                if denom > 0:
                    series[idx] = rms(state.temperature - ref_t[idx]) / denom

        try:
            downscale(obs, config, nudging, op, t_window, tap=tap,
                      record=False, backend=backend)
        except BlowUpError:
            continue
        if not np.all(np.isfinite(series)):
            continue
        window = ref_times >= ref_times[-1] - plateau_fraction * (
            ref_times[-1] - t0)
        plateau = float(np.mean(series[window]))
        if not math.isfinite(plateau) or plateau > 0.05:
            continue
        below = np.nonzero(series <= 1.5 * plateau)[0]
        t_plateau = float(ref_times[below[0]] - t0) if below.size else math.inf
        key = (t_plateau, plateau, float(mu))
        if best is None or key < best:
            best = key

    if best is None:
        raise ValueError("no nudging candidate converged")
    mu = best[2]
    return NudgingParams(
        mu_u=mu,
        mu_t=0.0 if velocity_only else mu,
        velocity_only=velocity_only,
    )
