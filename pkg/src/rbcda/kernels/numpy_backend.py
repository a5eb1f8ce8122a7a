"""Pure-NumPy reference implementation of the stencil kernels.

Every function here has a compiled twin in ``_stencils.pyx`` with the same
signature and, deliberately, the same per-element arithmetic order, so the
two backends agree bitwise (the extension is compiled with FP contraction
off).  The equivalence tests rely on that.

Grid layout (MAC staggering, index [i, j] with i along x, j along y):

* ``u``  (nx, ny)   at x-faces, x = i*dx,        y = (j+1/2)*dy
* ``v``  (nx, ny+1) at y-faces, x = (i+1/2)*dx,  y = j*dy; rows 0 and ny
  are the walls and stay exactly zero
* ``T``, ``p`` (nx, ny) at cell centers

x is periodic (wrap in i); y has walls.  No-slip and zero-anomaly wall
conditions enter through reflected ghost values (f_ghost = -f_interior) in
the y-direction Laplacians; wall-adjacent advective fluxes vanish exactly
because v = 0 on the walls.
"""

from __future__ import annotations

import numpy as np


def rhs_tendencies(u, v, T, dx, dy, nu, kappa, prandtl, du, dv, dT):
    """Advective + diffusive + buoyancy tendencies, pressure excluded.

    Advection is discretized in divergence (conservative) form with central
    interpolation to faces/corners; diffusion is the standard 5-point
    Laplacian.  Buoyancy ``Pr*T`` is averaged from centers to y-faces and
    the energy source ``+v`` is averaged from y-faces to centers.  Outputs
    are written in place; v-tendency wall rows are left at zero.
    """
    nx, ny = T.shape
    dx2 = dx * dx
    dy2 = dy * dy

    u_e = np.roll(u, -1, axis=0)  # u[i+1, j]
    u_w = np.roll(u, 1, axis=0)   # u[i-1, j]

    # u-momentum at x-faces.
    uc = 0.5 * (u + u_e)
    uu = uc * uc                  # (u^2 interpolated) at cell centers
    duu_dx = (uu - np.roll(uu, 1, axis=0)) / dx

    # Corner fluxes u*v at (i*dx, j*dy); wall corners carry zero flux.
    uv = np.zeros((nx, ny + 1))
    v_corner = 0.5 * (v + np.roll(v, 1, axis=0))
    uv[:, 1:ny] = 0.5 * (u[:, 1:] + u[:, :-1]) * v_corner[:, 1:ny]
    duv_dy = (uv[:, 1:] - uv[:, :-1]) / dy

    lap_u = (u_e - 2.0 * u + u_w) / dx2
    uyy = np.empty_like(u)
    uyy[:, 1:-1] = u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]
    uyy[:, 0] = u[:, 1] - 3.0 * u[:, 0]       # ghost u(-dy/2) = -u(dy/2)
    uyy[:, -1] = u[:, -2] - 3.0 * u[:, -1]    # ghost above the top wall
    du[:, :] = -(duu_dx + duv_dy) + nu * (lap_u + uyy / dy2)

    # v-momentum at interior y-faces (wall rows stay zero).
    duv_dx = (np.roll(uv, -1, axis=0) - uv) / dx
    vc = 0.5 * (v[:, 1:] + v[:, :-1])
    vv = vc * vc                  # (v^2 interpolated) at cell centers
    dvv_dy = (vv[:, 1:] - vv[:, :-1]) / dy
    lap_v = (
        (np.roll(v, -1, axis=0)[:, 1:ny] - 2.0 * v[:, 1:ny]
         + np.roll(v, 1, axis=0)[:, 1:ny]) / dx2
        + (v[:, 2:] - 2.0 * v[:, 1:ny] + v[:, : ny - 1]) / dy2
    )
    buoy = (prandtl * 0.5) * (T[:, 1:] + T[:, :-1])
    dv[:, 0] = 0.0
    dv[:, ny] = 0.0
    dv[:, 1:ny] = -(duv_dx[:, 1:ny] + dvv_dy) + nu * lap_v + buoy

    # Energy at cell centers.
    T_w = np.roll(T, 1, axis=0)
    flux_x = u * (0.5 * (T + T_w))
    dTu_dx = (np.roll(flux_x, -1, axis=0) - flux_x) / dx
    flux_y = np.zeros((nx, ny + 1))
    flux_y[:, 1:ny] = v[:, 1:ny] * (0.5 * (T[:, 1:] + T[:, :-1]))
    dTv_dy = (flux_y[:, 1:] - flux_y[:, :-1]) / dy
    lap_T = (np.roll(T, -1, axis=0) - 2.0 * T + T_w) / dx2
    tyy = np.empty_like(T)
    tyy[:, 1:-1] = T[:, 2:] - 2.0 * T[:, 1:-1] + T[:, :-2]
    tyy[:, 0] = T[:, 1] - 3.0 * T[:, 0]        # ghost T = -T (zero anomaly)
    tyy[:, -1] = T[:, -2] - 3.0 * T[:, -1]
    source = 0.5 * (v[:, 1:] + v[:, :-1])
    dT[:, :] = -(dTu_dx + dTv_dy) + kappa * (lap_T + tyy / dy2) + source


def divergence(u, v, dx, dy, out):
    """Discrete divergence at cell centers, periodic wrap in x."""
    out[:, :] = (np.roll(u, -1, axis=0) - u) / dx + (v[:, 1:] - v[:, :-1]) / dy


def subtract_gradient(u, v, phi, dx, dy, dt):
    """In-place velocity correction u -= dt*d(phi)/dx, v -= dt*d(phi)/dy.

    Wall rows of v are untouched: the Poisson solve uses homogeneous
    Neumann walls, so the wall-normal gradient there is zero by
    construction.
    """
    c1 = dt / dx
    c2 = dt / dy
    u -= c1 * (phi - np.roll(phi, 1, axis=0))
    v[:, 1:-1] -= c2 * (phi[:, 1:] - phi[:, :-1])


def thomas_solve(m, cp, a, d):
    """Tridiagonal solve per x-wavenumber, in place on ``d``.

    ``m`` and ``cp`` are the precomputed forward-elimination factors (see
    ``solver.poisson_factors``); ``a`` is the constant off-diagonal 1/dy^2.
    ``d`` is the complex right-hand side of shape (n_wavenumbers, ny) and is
    overwritten with the solution.
    """
    ny = d.shape[1]
    d[:, 0] = d[:, 0] * m[:, 0]
    for j in range(1, ny):
        d[:, j] = (d[:, j] - a * d[:, j - 1]) * m[:, j]
    for j in range(ny - 2, -1, -1):
        d[:, j] = d[:, j] - cp[:, j] * d[:, j + 1]


def apply_patch_constant(f, s, out):
    """Piecewise-constant patch fill: out[i, j] = f[s*(i//s), s*(j//s)].

    Rows beyond the last complete s-row patch (the top wall row of a
    staggered v array) map to their own sample row.
    """
    nx, nyf = f.shape
    ny_full = (nyf // s) * s
    out[:, :ny_full] = np.repeat(
        np.repeat(f[::s, :ny_full:s], s, axis=0), s, axis=1
    )
    for j in range(ny_full, nyf):
        out[:, j] = np.repeat(f[::s, (j // s) * s], s)


def add_patch_nudge(df, f, obs_coarse, s, mu):
    """df += mu * (patch(obs) - patch(f)) over rows covered by observations.

    ``obs_coarse`` has shape (nx/s, n_obs_rows); rows j >= s*n_obs_rows of
    ``df`` (the top wall row of a staggered v array) are left untouched.
    """
    nxc, nyc = obs_coarse.shape
    ny_cov = nyc * s
    obs_up = np.repeat(np.repeat(obs_coarse, s, axis=0), s, axis=1)
    f_up = np.repeat(np.repeat(f[::s, :ny_cov:s], s, axis=0), s, axis=1)
    df[:, :ny_cov] += mu * (obs_up - f_up)


def ab_combine1(out, y, dt, c0, f0):
    """out = y + dt*(c0*f0)"""
    out[:, :] = y + dt * (c0 * f0)


def ab_combine2(out, y, dt, c0, f0, c1, f1):
    """out = y + dt*(c0*f0 + c1*f1)"""
    out[:, :] = y + dt * (c0 * f0 + c1 * f1)


def ab_combine3(out, y, dt, c0, f0, c1, f1, c2, f2):
    """out = y + dt*(c0*f0 + c1*f1 + c2*f2)"""
    out[:, :] = y + dt * ((c0 * f0 + c1 * f1) + c2 * f2)


def max_abs(f) -> float:
    """max |f|, without allocating an |f| temporary."""
    lo = float(f.min())
    hi = float(f.max())
    return max(-lo, hi)
