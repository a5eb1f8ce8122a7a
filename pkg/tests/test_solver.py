"""Solver tests: tendency oracle, projection, convergence, full runs."""

import math
from dataclasses import replace

import numpy as np
import pytest

from rbcda import kernels
from rbcda.config import (
    GridSpec,
    PhysicalParams,
    RunConfig,
    TimeSpec,
    desk_config,
)
from rbcda.observations import coarsen
from rbcda.solver import (
    BlowUpError,
    FieldState,
    SolverWorkspace,
    init_random,
    project,
    rhs,
    simulate,
    step,
)
from rbcda.timestepping import observed_order

NUMPY_KB = kernels.get_backend("numpy")


def small_config(nx=48, ny=16, dt=1e-3, t_final=0.05, save_every=10, seed=3):
    return RunConfig(
        physical=PhysicalParams(rayleigh=1e5, prandtl=0.7),
        grid=GridSpec(nx=nx, ny=ny),
        time=TimeSpec(dt=dt, t_final=t_final, save_every=save_every),
        seed=seed,
    )


def random_state(grid, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    u = scale * rng.uniform(-1, 1, grid.shape_u)
    v = np.zeros(grid.shape_v)
    v[:, 1:-1] = scale * rng.uniform(-1, 1, (grid.nx, grid.ny - 1))
    T = scale * rng.uniform(-1, 1, grid.shape_center)
    return FieldState(u, v, T, np.zeros(grid.shape_center))


def relative_divergence(u, v, grid):
    div = np.empty(grid.shape_center)
    NUMPY_KB.divergence(u, v, grid.dx, grid.dy, div)
    scale = np.abs(u).max() / grid.dx + np.abs(v).max() / grid.dy
    return np.abs(div).max() / scale


# ---------------------------------------------------------------------------
# initialization


def test_init_random_deterministic():
    cfg = small_config()
    a = init_random(cfg)
    b = init_random(cfg)
    for x, y in ((a.u, b.u), (a.v, b.v), (a.temperature, b.temperature)):
        assert np.array_equal(x, y)


def test_init_random_statistics_and_walls():
    cfg = desk_config()
    state = init_random(cfg)
    a = cfg.init_amplitude
    # temperature is untouched by the projection: uniform(-a, a) draws
    T = state.temperature
    n = T.size
    sem = (a / math.sqrt(3.0)) / math.sqrt(n)
    assert abs(T.mean()) < 5 * sem
    assert abs(T.std() - a / math.sqrt(3.0)) < 0.05 * a
    assert np.abs(T).max() <= a
    # wall rows of v pinned exactly
    assert np.all(state.v[:, 0] == 0.0)
    assert np.all(state.v[:, -1] == 0.0)
    assert np.all(state.pressure == 0.0)
    assert state.time == 0.0


def test_init_random_divergence_free():
    cfg = small_config()
    state = init_random(cfg)
    assert relative_divergence(state.u, state.v, cfg.grid) < 1e-13


# ---------------------------------------------------------------------------
# tendency oracle: independent double-loop implementation of the same
# finite-volume discretization


def rhs_oracle(state, phys, grid):
    nx, ny = grid.nx, grid.ny
    dx, dy = grid.dx, grid.dy
    nu, kappa, pr = phys.nu, phys.kappa, phys.prandtl
    u, v, T = state.u, state.v, state.temperature

    # corner fluxes u*v at (i*dx, j*dy); wall corners carry no flux
    uv = np.zeros((nx, ny + 1))
    for i in range(nx):
        for j in range(1, ny):
            uv[i, j] = 0.5 * (u[i, j] + u[i, j - 1]) * 0.5 * (v[i, j] + v[i - 1, j])

    uu = np.zeros((nx, ny))   # u^2 at centers
    vv = np.zeros((nx, ny))   # v^2 at centers
    for i in range(nx):
        for j in range(ny):
            uu[i, j] = (0.5 * (u[i, j] + u[(i + 1) % nx, j])) ** 2
            vv[i, j] = (0.5 * (v[i, j] + v[i, j + 1])) ** 2

    du = np.zeros((nx, ny))
    for i in range(nx):
        for j in range(ny):
            adv = (uu[i, j] - uu[i - 1, j]) / dx + (uv[i, j + 1] - uv[i, j]) / dy
            lap = (u[(i + 1) % nx, j] - 2 * u[i, j] + u[i - 1, j]) / dx**2
            if j == 0:
                lap += (u[i, 1] - 3 * u[i, 0]) / dy**2
            elif j == ny - 1:
                lap += (u[i, ny - 2] - 3 * u[i, ny - 1]) / dy**2
            else:
                lap += (u[i, j + 1] - 2 * u[i, j] + u[i, j - 1]) / dy**2
            du[i, j] = -adv + nu * lap

    dv = np.zeros((nx, ny + 1))
    for i in range(nx):
        for j in range(1, ny):
            adv = (uv[(i + 1) % nx, j] - uv[i, j]) / dx + (vv[i, j] - vv[i, j - 1]) / dy
            lap = (v[(i + 1) % nx, j] - 2 * v[i, j] + v[i - 1, j]) / dx**2
            lap += (v[i, j + 1] - 2 * v[i, j] + v[i, j - 1]) / dy**2
            dv[i, j] = -adv + nu * lap + pr * 0.5 * (T[i, j] + T[i, j - 1])

    dT = np.zeros((nx, ny))
    for i in range(nx):
        for j in range(ny):
            fe = u[(i + 1) % nx, j] * 0.5 * (T[(i + 1) % nx, j] + T[i, j])
            fw = u[i, j] * 0.5 * (T[i, j] + T[i - 1, j])
            fn = v[i, j + 1] * 0.5 * (T[i, j + 1] + T[i, j]) if j < ny - 1 else 0.0
            fs = v[i, j] * 0.5 * (T[i, j] + T[i, j - 1]) if j > 0 else 0.0
            adv = (fe - fw) / dx + (fn - fs) / dy
            lap = (T[(i + 1) % nx, j] - 2 * T[i, j] + T[i - 1, j]) / dx**2
            if j == 0:
                lap += (T[i, 1] - 3 * T[i, 0]) / dy**2
            elif j == ny - 1:
                lap += (T[i, ny - 2] - 3 * T[i, ny - 1]) / dy**2
            else:
                lap += (T[i, j + 1] - 2 * T[i, j] + T[i, j - 1]) / dy**2
            dT[i, j] = -adv + kappa * lap + 0.5 * (v[i, j] + v[i, j + 1])
    return du, dv, dT


@pytest.mark.parametrize("shape,seed", [((8, 6), 0), ((10, 7), 1), ((8, 6), 2)])
def test_rhs_matches_double_loop_oracle(shape, seed):
    grid = GridSpec(nx=shape[0], ny=shape[1])
    phys = PhysicalParams(rayleigh=4e3, prandtl=0.7)
    state = random_state(grid, seed)
    du, dv, dT = rhs(state, phys, grid)
    odu, odv, odT = rhs_oracle(state, phys, grid)
    assert np.allclose(du, odu, rtol=1e-12, atol=1e-13)
    assert np.allclose(dv, odv, rtol=1e-12, atol=1e-13)
    assert np.allclose(dT, odT, rtol=1e-12, atol=1e-13)
    assert np.all(dv[:, 0] == 0.0) and np.all(dv[:, -1] == 0.0)


def test_rhs_zero_state_is_zero():
    grid = GridSpec(nx=8, ny=8)
    phys = PhysicalParams(rayleigh=1e5, prandtl=0.7)
    z = FieldState(np.zeros(grid.shape_u), np.zeros(grid.shape_v),
                   np.zeros(grid.shape_center), np.zeros(grid.shape_center))
    du, dv, dT = rhs(z, phys, grid)
    assert not du.any() and not dv.any() and not dT.any()


def test_rhs_quiescent_temperature_column():
    # u = v = 0, T = sin(pi*y): only buoyancy and thermal diffusion fire.
    grid = GridSpec(nx=8, ny=32)
    phys = PhysicalParams(rayleigh=1e5, prandtl=0.7)
    yc = (np.arange(grid.ny) + 0.5) * grid.dy
    T = np.tile(np.sin(np.pi * yc), (grid.nx, 1))
    state = FieldState(np.zeros(grid.shape_u), np.zeros(grid.shape_v),
                       T, np.zeros(grid.shape_center))
    du, dv, dT = rhs(state, phys, grid)
    assert not du.any()
    expect_dv = phys.prandtl * 0.5 * (T[:, 1:] + T[:, :-1])
    assert np.allclose(dv[:, 1:-1], expect_dv, rtol=1e-12, atol=0)
    # discrete diffusion with reflected ghosts, x-uniform
    tyy = np.empty_like(T)
    tyy[:, 1:-1] = T[:, 2:] - 2 * T[:, 1:-1] + T[:, :-2]
    tyy[:, 0] = T[:, 1] - 3 * T[:, 0]
    tyy[:, -1] = T[:, -2] - 3 * T[:, -1]
    assert np.allclose(dT, phys.kappa * tyy / grid.dy**2, rtol=1e-12, atol=1e-15)


def test_rhs_uniform_flow_wall_drag():
    # uniform u has zero advection; the reflected ghost drags only the
    # wall-adjacent rows with ghost value -u.
    grid = GridSpec(nx=8, ny=8)
    phys = PhysicalParams(rayleigh=1e5, prandtl=0.7)
    c = 0.37
    state = FieldState(np.full(grid.shape_u, c), np.zeros(grid.shape_v),
                       np.zeros(grid.shape_center), np.zeros(grid.shape_center))
    du, dv, dT = rhs(state, phys, grid)
    expect = np.zeros(grid.shape_u)
    expect[:, 0] = expect[:, -1] = phys.nu * (-2 * c) / grid.dy**2
    assert np.allclose(du, expect, rtol=1e-12, atol=0)
    assert not dv.any() and not dT.any()


# ---------------------------------------------------------------------------
# manufactured-solution spatial convergence


def manufactured_fields(grid):
    """Stream-function flow + smooth temperature satisfying the BCs."""
    lx = grid.lx
    kx = 2 * np.pi / lx

    def u_fn(x, y):
        return np.pi * np.sin(kx * x) * np.sin(2 * np.pi * y)

    def v_fn(x, y):
        return -kx * np.cos(kx * x) * np.sin(np.pi * y) ** 2

    def t_fn(x, y):
        return np.cos(kx * x) * np.sin(np.pi * y)

    return u_fn, v_fn, t_fn


def manufactured_tendencies(grid, phys):
    import sympy as sp

    x, y = sp.symbols("x y")
    kx = 2 * sp.pi / sp.Rational(3)
    u = sp.pi * sp.sin(kx * x) * sp.sin(2 * sp.pi * y)
    v = -kx * sp.cos(kx * x) * sp.sin(sp.pi * y) ** 2
    T = sp.cos(kx * x) * sp.sin(sp.pi * y)
    lap = lambda f: sp.diff(f, x, 2) + sp.diff(f, y, 2)
    du = -(sp.diff(u * u, x) + sp.diff(u * v, y)) + phys.nu * lap(u)
    dv = (-(sp.diff(u * v, x) + sp.diff(v * v, y)) + phys.nu * lap(v)
          + phys.prandtl * T)
    dT = -(sp.diff(u * T, x) + sp.diff(v * T, y)) + phys.kappa * lap(T) + v
    return tuple(sp.lambdify((x, y), f, "numpy") for f in (du, dv, dT))


def test_spatial_order_manufactured_solution():
    phys = PhysicalParams(rayleigh=1e5, prandtl=0.7)
    errs = {"u": [], "v": [], "T": []}
    for nx, ny in ((48, 16), (96, 32), (192, 64)):
        grid = GridSpec(nx=nx, ny=ny)
        u_fn, v_fn, t_fn = manufactured_fields(grid)
        xu, yu = np.meshgrid(np.arange(nx) * grid.dx,
                             (np.arange(ny) + 0.5) * grid.dy, indexing="ij")
        xv, yv = np.meshgrid((np.arange(nx) + 0.5) * grid.dx,
                             np.arange(ny + 1) * grid.dy, indexing="ij")
        xc, yc = np.meshgrid((np.arange(nx) + 0.5) * grid.dx,
                             (np.arange(ny) + 0.5) * grid.dy, indexing="ij")
        v = v_fn(xv, yv)
        v[:, 0] = v[:, -1] = 0.0
        state = FieldState(u_fn(xu, yu), v, t_fn(xc, yc),
                           np.zeros(grid.shape_center))
        du, dv, dT = rhs(state, phys, grid)
        du_fn, dv_fn, dt_fn = manufactured_tendencies(grid, phys)
        errs["u"].append(np.sqrt(np.mean((du - du_fn(xu, yu)) ** 2)))
        # wall rows of dv are constraint rows, compare interior faces only
        errs["v"].append(
            np.sqrt(np.mean((dv[:, 1:-1] - dv_fn(xv, yv)[:, 1:-1]) ** 2)))
        errs["T"].append(np.sqrt(np.mean((dT - dt_fn(xc, yc)) ** 2)))
    for name, e in errs.items():
        order = observed_order(e)
        assert order >= 1.8, (name, e, order)


# ---------------------------------------------------------------------------
# pressure projection


def test_projection_removes_divergence():
    cfg = small_config()
    ws = SolverWorkspace(cfg)
    state = random_state(cfg.grid, 11)
    project(state.u, state.v, ws, cfg.time.dt)
    assert relative_divergence(state.u, state.v, cfg.grid) < 1e-13


def test_projection_identity_on_divergence_free_input():
    # u varying only in y, v = 0: discretely divergence-free bit for bit,
    # so the potential is exactly zero and the fields pass through intact.
    cfg = small_config()
    grid = cfg.grid
    ws = SolverWorkspace(cfg)
    u = np.tile(np.linspace(-0.3, 0.8, grid.ny), (grid.nx, 1))
    v = np.zeros(grid.shape_v)
    u0, v0 = u.copy(), v.copy()
    phi = project(u, v, ws, cfg.time.dt)
    assert np.array_equal(phi, np.zeros(grid.shape_center))
    assert np.array_equal(u, u0)
    assert np.array_equal(v, v0)


def test_projection_near_idempotent():
    cfg = small_config()
    ws = SolverWorkspace(cfg)
    state = random_state(cfg.grid, 12)
    project(state.u, state.v, ws, cfg.time.dt)
    u1, v1 = state.u.copy(), state.v.copy()
    phi2 = project(state.u, state.v, ws, cfg.time.dt)
    # second application only shuffles rounding noise
    assert np.abs(phi2).max() < 1e-11
    assert np.abs(state.u - u1).max() < 1e-13
    assert np.abs(state.v - v1).max() < 1e-13


def test_projection_returns_zero_mean_pressure():
    cfg = small_config()
    ws = SolverWorkspace(cfg)
    state = random_state(cfg.grid, 13)
    phi = project(state.u, state.v, ws, cfg.time.dt)
    assert abs(phi.mean()) < 1e-15 * max(1.0, np.abs(phi).max())


# ---------------------------------------------------------------------------
# stepping and full runs


def test_step_preserves_divergence_and_walls():
    cfg = small_config()
    ws = SolverWorkspace(cfg)
    state = init_random(cfg)
    for _ in range(5):
        state = step(state, ws, cfg)
    assert relative_divergence(state.u, state.v, cfg.grid) < 1e-13
    assert np.all(state.v[:, 0] == 0.0) and np.all(state.v[:, -1] == 0.0)
    assert state.time == pytest.approx(5 * cfg.time.dt)


def test_blowup_raises_with_step_index():
    cfg = replace(small_config(dt=0.05, t_final=1.0, save_every=1),
                  init_amplitude=50.0)
    with pytest.raises(BlowUpError) as exc_info:
        simulate(cfg)
    err = exc_info.value
    assert err.step is not None and err.step >= 1
    assert err.time > 0.0
    assert "max" in str(err)


def test_simulate_deterministic_bitwise():
    cfg = small_config()
    a = simulate(cfg)
    b = simulate(cfg)
    for x, y in ((a.u, b.u), (a.v, b.v), (a.temperature, b.temperature),
                 (a.pressure, b.pressure), (a.times, b.times)):
        assert np.array_equal(x, y)
    assert a.max_cfl == b.max_cfl
    assert a.source_hash == b.source_hash


def test_simulate_zero_steps_single_snapshot():
    cfg = small_config(t_final=0.0, save_every=1)
    traj = simulate(cfg)
    assert traj.times.shape == (1,)
    assert traj.times[0] == 0.0
    assert traj.u.shape == (1, cfg.grid.nx, cfg.grid.ny)
    assert traj.final_state.time == 0.0


def test_tap_matches_recorded_coarsening():
    # strided tap extraction during the run == coarsening the full record
    cfg = small_config(nx=48, ny=16, t_final=0.02, save_every=1)
    s, t = 4, 4
    tu, tv, tt, tp, ttimes = [], [], [], [], []

    def tap(k, state):
        if k % t == 0:
            tu.append(state.u[::s, ::s].copy())
            tv.append(state.v[::s, :cfg.grid.ny:s].copy())
            tt.append(state.temperature[::s, ::s].copy())
            tp.append(state.pressure[::s, ::s].copy())
            ttimes.append(state.time)

    traj = simulate(cfg, tap=tap)
    obs = coarsen(traj, s, t)
    assert np.array_equal(obs.u, np.array(tu))
    assert np.array_equal(obs.v, np.array(tv))
    assert np.array_equal(obs.temperature, np.array(tt))
    assert np.array_equal(obs.pressure, np.array(tp))
    assert np.array_equal(obs.times, np.array(ttimes))


def test_cross_backend_full_run_bitwise():
    pytest.importorskip("rbcda.kernels._stencils")
    compiled = kernels.get_backend("compiled")
    cfg = small_config(t_final=0.03)
    a = simulate(cfg, backend=NUMPY_KB)
    b = simulate(cfg, backend=compiled)
    for x, y in ((a.u, b.u), (a.v, b.v), (a.temperature, b.temperature),
                 (a.pressure, b.pressure)):
        assert np.array_equal(x, y)
    assert a.max_cfl == b.max_cfl


# ---------------------------------------------------------------------------
# developed-flow sanity (session reference window)


def test_developed_flow_energy_band(desk_window):
    ke = desk_window.kinetic_energy
    assert np.all(ke > 5e-3) and np.all(ke < 0.2)
    # developed convection, not a decaying transient: energy stays level
    assert ke.min() > 0.25 * ke.max()


def test_developed_flow_bounds(desk_window):
    assert desk_window.max_cfl < 0.15
    assert np.abs(desk_window.fine_temperature).max() <= 0.75
    final = desk_window.final
    assert np.all(final.v[:, 0] == 0.0) and np.all(final.v[:, -1] == 0.0)
    assert relative_divergence(final.u, final.v, desk_window.config.grid) < 1e-13
