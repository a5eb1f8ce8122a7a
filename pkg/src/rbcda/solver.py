"""Buoyancy-driven convection solver on a staggered periodic channel.

Non-dimensional Boussinesq equations between no-slip isothermal walls:

    du/dt + div(u u) = -grad(p) + (Pr/sqrt(Ra)) lap(u) + Pr T e_y
    dT/dt + div(u T) =            (1/sqrt(Ra)) lap(T) + v
    div(u) = 0

Spatial discretization is second-order central differencing on the MAC
staggered grid described in ``kernels``; time integration is the explicit
Heun/AB2/AB3 ladder from ``timestepping`` with a non-incremental pressure
projection after every update: tendencies exclude the pressure gradient,
the provisional velocity is projected onto the divergence-free space by an
FFT (periodic x) + tridiagonal (wall-normal) Poisson solve, and the
resulting potential is the pressure.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import kernels
from .config import GridSpec, PhysicalParams, RunConfig, serialize_config, validate
from .timestepping import AB2, AB3
from .trajio import Trajectory

__all__ = [
    "FieldState",
    "SolverWorkspace",
    "BlowUpError",
    "init_random",
    "rhs",
    "project",
    "step",
    "simulate",
    "config_hash",
    "poisson_factors",
]

BLOWUP_LIMIT = 1e6


class BlowUpError(RuntimeError):
    """The integration produced a non-finite or absurdly large field."""

    def __init__(self, message: str, *, time: float, step: int | None = None):
        super().__init__(message)
        self.time = time
        self.step = step


@dataclass
class FieldState:
    """Instantaneous staggered flow state.

    ``u`` (nx, ny) at x-faces, ``v`` (nx, ny+1) at y-faces with wall rows
    pinned to zero, ``temperature`` and ``pressure`` (nx, ny) at centers.
    """

    u: np.ndarray
    v: np.ndarray
    temperature: np.ndarray
    pressure: np.ndarray
    time: float = 0.0

    def copy(self) -> "FieldState":
        return FieldState(
            self.u.copy(),
            self.v.copy(),
            self.temperature.copy(),
            self.pressure.copy(),
            self.time,
        )


def poisson_factors(nx: int, ny: int, dx: float, dy: float):
    """Precompute forward-elimination factors for the projection solve.

    After an FFT in x, each wavenumber k decouples into a tridiagonal
    system in y: off-diagonals 1/dy^2, diagonal lambda_k - 2/dy^2 (one
    ghost-reflection term less at the Neumann walls), with
    lambda_k = -(4/dx^2) sin^2(pi k / nx) the periodic second-difference
    eigenvalue.  The k=0 system is singular (constant null space); its
    first row is replaced by phi=0 and the global mean is removed after the
    inverse transform.

    Returns ``(m, cp, ainv)`` where ``m`` is the reciprocal pivot and
    ``cp`` the normalized upper diagonal, both (nx//2+1, ny).
    """
    dx2 = dx * dx
    ainv = 1.0 / (dy * dy)
    k = np.arange(nx // 2 + 1, dtype=float)
    lam = -(4.0 / dx2) * np.sin(np.pi * k / nx) ** 2
    b = np.empty((k.size, ny))
    b[:, :] = lam[:, None] - 2.0 * ainv
    b[:, 0] = lam - ainv
    b[:, ny - 1] = lam - ainv
    m = np.empty_like(b)
    cp = np.empty_like(b)
    m[:, 0] = 1.0 / b[:, 0]
    cp[:, 0] = ainv * m[:, 0]
    m[0, 0] = 1.0  # pinned row: phi-hat(k=0, j=0) = 0
    cp[0, 0] = 0.0
    for j in range(1, ny):
        m[:, j] = 1.0 / (b[:, j] - ainv * cp[:, j - 1])
        cp[:, j] = ainv * m[:, j]
    return m, cp, ainv


class SolverWorkspace:
    """Reusable buffers for one solver instance (not shareable mid-step).

    Holds the Adams-Bashforth tendency history (three rotating buffer
    triples), projection scratch, and the precomputed Poisson factors.
    """

    def __init__(self, config: RunConfig, backend=None):
        self.kb = backend if backend is not None else kernels.impl
        grid = config.grid
        nx, ny = grid.nx, grid.ny

        def triple():
            return (
                np.zeros(grid.shape_u),
                np.zeros(grid.shape_v),
                np.zeros(grid.shape_center),
            )

        self._free = [triple(), triple(), triple()]
        self.history: list[tuple[np.ndarray, ...]] = []  # newest first, <= 2
        self.u_star = np.zeros(grid.shape_u)
        self.v_star = np.zeros(grid.shape_v)
        self.t_new = np.zeros(grid.shape_center)
        self.div = np.zeros(grid.shape_center)
        self.m, self.cp, self.ainv = poisson_factors(nx, ny, grid.dx, grid.dy)
        self.grid = grid
        self.last_max: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def take_buffers(self):
        return self._free.pop()

    def push_history(self, bufs) -> None:
        self.history.insert(0, bufs)
        if len(self.history) > 2:
            self._free.append(self.history.pop())

    def release(self, bufs) -> None:
        self._free.append(bufs)

    def reset(self) -> None:
        while self.history:
            self._free.append(self.history.pop())


def config_hash(config: RunConfig) -> bytes:
    """32-byte provenance digest of the exact serialized configuration."""
    return hashlib.sha256(serialize_config(config).encode()).digest()


def init_random(config: RunConfig, backend=None) -> FieldState:
    """Random initial state: i.i.d. uniform(-a, a) interior values.

    Draw order is pinned for reproducibility: u (all x-faces), v (interior
    y-faces), temperature (all centers), each filled in C order from a
    PCG64 generator seeded with ``config.seed``.  The velocity is then
    projected to the divergence-free space and the pressure zeroed.
    """
    grid = config.grid
    rng = np.random.default_rng(config.seed)
    a = float(config.init_amplitude)
    u = rng.uniform(-a, a, grid.shape_u)
    v = np.zeros(grid.shape_v)
    v[:, 1:-1] = rng.uniform(-a, a, (grid.nx, grid.ny - 1))
    temperature = rng.uniform(-a, a, grid.shape_center)
    pressure = np.zeros(grid.shape_center)
    ws = SolverWorkspace(config, backend)
    project(u, v, ws, 1.0)
    return FieldState(u, v, temperature, pressure, 0.0)


def rhs(state: FieldState, physical: PhysicalParams, grid: GridSpec, backend=None):
    """Tendency triple (du, dv, dT); advection + diffusion + buoyancy.

    The pressure gradient is not included (it is reintroduced by the
    projection step).  Freshly allocated arrays are returned; wall rows of
    dv are zero.
    """
    kb = backend if backend is not None else kernels.impl
    du = np.empty(grid.shape_u)
    dv = np.empty(grid.shape_v)
    dT = np.empty(grid.shape_center)
    kb.rhs_tendencies(
        state.u, state.v, state.temperature,
        grid.dx, grid.dy, physical.nu, physical.kappa, physical.prandtl,
        du, dv, dT,
    )
    return du, dv, dT


def project(u: np.ndarray, v: np.ndarray, ws: SolverWorkspace, dt: float) -> np.ndarray:
    """Project (u, v) onto the discrete divergence-free space, in place.

    Solves lap(phi) = div(u, v)/dt with periodic x and homogeneous Neumann
    walls, subtracts dt*grad(phi), and returns the zero-mean potential
    (the pressure in the non-incremental scheme).
    """
    grid = ws.grid
    kb = ws.kb
    kb.divergence(u, v, grid.dx, grid.dy, ws.div)
    ws.div *= 1.0 / dt
    rhs_hat = scipy.fft.rfft(ws.div, axis=0)
    rhs_hat[0, 0] = 0.0
    kb.thomas_solve(ws.m, ws.cp, ws.ainv, rhs_hat)
    phi = scipy.fft.irfft(rhs_hat, n=grid.nx, axis=0, overwrite_x=True)
    phi = np.ascontiguousarray(phi)
    phi -= phi.mean()
    kb.subtract_gradient(u, v, phi, grid.dx, grid.dy, dt)
    return phi


def _check_blowup(ws: SolverWorkspace, state: FieldState) -> None:
    kb = ws.kb
    mu = kb.max_abs(state.u)
    mv = kb.max_abs(state.v)
    mt = kb.max_abs(state.temperature)
    ws.last_max = (mu, mv, mt)
    worst = max(mu, mv, mt)
    if not np.isfinite(worst) or worst > BLOWUP_LIMIT:
        for name, val in (("u", mu), ("v", mv), ("temperature", mt)):
            if not np.isfinite(val) or val > BLOWUP_LIMIT:
                raise BlowUpError(
                    f"field {name} reached max|.| = {val:g} at t = {state.time:g}",
                    time=state.time,
                )


def step(state: FieldState, ws: SolverWorkspace, config: RunConfig, nudge=None) -> FieldState:
    """Advance one time step with the Heun/AB2/AB3 ladder + projection.

    ``nudge(state, du, dv, dT)``, when given, adds feedback terms to the
    freshly evaluated tendencies in place (used by the assimilation
    stepper).  Raises :class:`BlowUpError` when any field exceeds
    ``BLOWUP_LIMIT`` or goes non-finite.
    """
    grid, phys, dt = config.grid, config.physical, config.time.dt
    kb = ws.kb
    bufs = ws.take_buffers()
    du, dv, dT = bufs
    kb.rhs_tendencies(
        state.u, state.v, state.temperature,
        grid.dx, grid.dy, phys.nu, phys.kappa, phys.prandtl,
        du, dv, dT,
    )
    if nudge is not None:
        nudge(state, du, dv, dT)

    u_new = np.empty(grid.shape_u)
    v_new = np.empty(grid.shape_v)
    t_new = np.empty(grid.shape_center)
    n_hist = len(ws.history)
    if n_hist == 0:
        # Heun start: Euler predictor, trapezoidal corrector, both projected.
        pred_bufs = ws.take_buffers()
        dup, dvp, dtp = pred_bufs
        kb.ab_combine1(u_new, state.u, dt, 1.0, du)
        kb.ab_combine1(v_new, state.v, dt, 1.0, dv)
        kb.ab_combine1(t_new, state.temperature, dt, 1.0, dT)
        project(u_new, v_new, ws, dt)
        pred = FieldState(u_new, v_new, t_new, state.pressure, state.time + dt)
        kb.rhs_tendencies(
            pred.u, pred.v, pred.temperature,
            grid.dx, grid.dy, phys.nu, phys.kappa, phys.prandtl,
            dup, dvp, dtp,
        )
        if nudge is not None:
            nudge(pred, dup, dvp, dtp)
        u_new = np.empty(grid.shape_u)
        v_new = np.empty(grid.shape_v)
        t_new = np.empty(grid.shape_center)
        kb.ab_combine2(u_new, state.u, dt, 0.5, du, 0.5, dup)
        kb.ab_combine2(v_new, state.v, dt, 0.5, dv, 0.5, dvp)
        kb.ab_combine2(t_new, state.temperature, dt, 0.5, dT, 0.5, dtp)
        ws.release(pred_bufs)
    elif n_hist == 1:
        du1, dv1, dT1 = ws.history[0]
        c0, c1 = AB2
        kb.ab_combine2(u_new, state.u, dt, c0, du, c1, du1)
        kb.ab_combine2(v_new, state.v, dt, c0, dv, c1, dv1)
        kb.ab_combine2(t_new, state.temperature, dt, c0, dT, c1, dT1)
    else:
        du1, dv1, dT1 = ws.history[0]
        du2, dv2, dT2 = ws.history[1]
        c0, c1, c2 = AB3
        kb.ab_combine3(u_new, state.u, dt, c0, du, c1, du1, c2, du2)
        kb.ab_combine3(v_new, state.v, dt, c0, dv, c1, dv1, c2, dv2)
        kb.ab_combine3(t_new, state.temperature, dt, c0, dT, c1, dT1, c2, dT2)

    phi = project(u_new, v_new, ws, dt)
    ws.push_history(bufs)
    new_state = FieldState(u_new, v_new, t_new, phi, state.time + dt)
    _check_blowup(ws, new_state)
    return new_state


def simulate(config: RunConfig, *, initial: FieldState | None = None,
             tap=None, record: bool = True, backend=None) -> Trajectory:
    """Integrate for ``t_final`` time units from the initial state.

    Snapshots are retained every ``save_every`` steps (including step 0)
    unless ``record=False``.  ``tap(step_index, state)``, when given, is
    called after every step (and once with the initial state); it must not
    mutate the state.  Raises :class:`BlowUpError` annotated with the
    failing step index on divergence.
    """
    validate(config)
    grid, time = config.grid, config.time
    ws = SolverWorkspace(config, backend)
    state = initial if initial is not None else init_random(config, backend)
    t0 = state.time
    n_steps = time.n_steps
    cadence = time.save_every

    n_snap = n_steps // cadence + 1 if record else 0
    if record:
        us = np.empty((n_snap, grid.nx, grid.ny))
        vs = np.empty((n_snap, grid.nx, grid.ny + 1))
        ts = np.empty((n_snap, grid.nx, grid.ny))
        ps = np.empty((n_snap, grid.nx, grid.ny))
        times = np.empty(n_snap)

    def record_snapshot(idx: int, s: FieldState) -> None:
        us[idx] = s.u
        vs[idx] = s.v
        ts[idx] = s.temperature
        ps[idx] = s.pressure
        times[idx] = s.time

    if record:
        record_snapshot(0, state)
    if tap is not None:
        tap(0, state)

    max_cfl = 0.0
    dt, dx, dy = time.dt, grid.dx, grid.dy
    for k in range(1, n_steps + 1):
        try:
            state = step(state, ws, config)
        except BlowUpError as exc:
            exc.step = k
            raise
        mu, mv, _ = ws.last_max
        cfl = max(mu * dt / dx, mv * dt / dy)
        if cfl > max_cfl:
            max_cfl = cfl
        if record and k % cadence == 0:
            record_snapshot(k // cadence, state)
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
        cadence=cadence,
        seed=config.seed,
        source_hash=config_hash(config),
        times=times,
        u=us,
        v=vs,
        temperature=ts,
        pressure=ps,
        max_cfl=max_cfl,
        final_state=state,
    )
