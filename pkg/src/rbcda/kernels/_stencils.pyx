# cython: language_level=3
"""Compiled stencil kernels.

Signature-compatible with ``numpy_backend``; see that module for the grid
layout and discretization notes.  Every expression mirrors the NumPy
implementation's per-element arithmetic order (and the extension is built
with FP contraction off), so both backends produce bitwise-identical
results.
"""

import numpy as np

cimport cython
from libc.math cimport fabs


def rhs_tendencies(double[:, ::1] u, double[:, ::1] v, double[:, ::1] T,
                   double dx, double dy, double nu, double kappa,
                   double prandtl,
                   double[:, ::1] du, double[:, ::1] dv, double[:, ::1] dT):
    cdef Py_ssize_t nx = T.shape[0]
    cdef Py_ssize_t ny = T.shape[1]
    cdef double dx2 = dx * dx
    cdef double dy2 = dy * dy
    cdef double pr05 = prandtl * 0.5
    cdef Py_ssize_t i, j, ip, im
    cdef double uuc_i, uuc_im, duu, uv_bot, uv_top, duv, lapx, uyy
    cdef double vv_j, vv_jm, dvv, lap, buoy
    cdef double fx_i, fx_ip, dTu, fy_bot, fy_top, dTv, tyy, source
    cdef double a, b

    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        im = i - 1 if i > 0 else nx - 1

        # u-momentum at x-faces
        for j in range(ny):
            a = 0.5 * (u[i, j] + u[ip, j])
            uuc_i = a * a
            a = 0.5 * (u[im, j] + u[i, j])
            uuc_im = a * a
            duu = (uuc_i - uuc_im) / dx
            if j == 0:
                uv_bot = 0.0
            else:
                a = 0.5 * (u[i, j] + u[i, j - 1])
                b = 0.5 * (v[i, j] + v[im, j])
                uv_bot = a * b
            if j + 1 == ny:
                uv_top = 0.0
            else:
                a = 0.5 * (u[i, j + 1] + u[i, j])
                b = 0.5 * (v[i, j + 1] + v[im, j + 1])
                uv_top = a * b
            duv = (uv_top - uv_bot) / dy
            lapx = ((u[ip, j] - 2.0 * u[i, j]) + u[im, j]) / dx2
            if j == 0:
                uyy = u[i, 1] - 3.0 * u[i, 0]
            elif j == ny - 1:
                uyy = u[i, ny - 2] - 3.0 * u[i, ny - 1]
            else:
                uyy = (u[i, j + 1] - 2.0 * u[i, j]) + u[i, j - 1]
            du[i, j] = -(duu + duv) + nu * (lapx + uyy / dy2)

        # v-momentum at interior y-faces
        dv[i, 0] = 0.0
        dv[i, ny] = 0.0
        for j in range(1, ny):
            a = 0.5 * (u[ip, j] + u[ip, j - 1])
            b = 0.5 * (v[ip, j] + v[i, j])
            uv_top = a * b  # corner at x=(i+1)*dx
            a = 0.5 * (u[i, j] + u[i, j - 1])
            b = 0.5 * (v[i, j] + v[im, j])
            uv_bot = a * b  # corner at x=i*dx
            duv = (uv_top - uv_bot) / dx
            a = 0.5 * (v[i, j + 1] + v[i, j])
            vv_j = a * a
            a = 0.5 * (v[i, j] + v[i, j - 1])
            vv_jm = a * a
            dvv = (vv_j - vv_jm) / dy
            lap = ((v[ip, j] - 2.0 * v[i, j]) + v[im, j]) / dx2 \
                + ((v[i, j + 1] - 2.0 * v[i, j]) + v[i, j - 1]) / dy2
            buoy = pr05 * (T[i, j] + T[i, j - 1])
            dv[i, j] = -(duv + dvv) + nu * lap + buoy

        # energy at cell centers
        for j in range(ny):
            fx_i = u[i, j] * (0.5 * (T[i, j] + T[im, j]))
            fx_ip = u[ip, j] * (0.5 * (T[ip, j] + T[i, j]))
            dTu = (fx_ip - fx_i) / dx
            if j == 0:
                fy_bot = 0.0
            else:
                fy_bot = v[i, j] * (0.5 * (T[i, j] + T[i, j - 1]))
            if j + 1 == ny:
                fy_top = 0.0
            else:
                fy_top = v[i, j + 1] * (0.5 * (T[i, j + 1] + T[i, j]))
            dTv = (fy_top - fy_bot) / dy
            lapx = ((T[ip, j] - 2.0 * T[i, j]) + T[im, j]) / dx2
            if j == 0:
                tyy = T[i, 1] - 3.0 * T[i, 0]
            elif j == ny - 1:
                tyy = T[i, ny - 2] - 3.0 * T[i, ny - 1]
            else:
                tyy = (T[i, j + 1] - 2.0 * T[i, j]) + T[i, j - 1]
            source = 0.5 * (v[i, j + 1] + v[i, j])
            dT[i, j] = -(dTu + dTv) + kappa * (lapx + tyy / dy2) + source


def divergence(double[:, ::1] u, double[:, ::1] v, double dx, double dy,
               double[:, ::1] out):
    cdef Py_ssize_t nx = out.shape[0]
    cdef Py_ssize_t ny = out.shape[1]
    cdef Py_ssize_t i, j, ip
    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        for j in range(ny):
            out[i, j] = (u[ip, j] - u[i, j]) / dx + (v[i, j + 1] - v[i, j]) / dy


def subtract_gradient(double[:, ::1] u, double[:, ::1] v, double[:, ::1] phi,
                      double dx, double dy, double dt):
    cdef Py_ssize_t nx = phi.shape[0]
    cdef Py_ssize_t ny = phi.shape[1]
    cdef double c1 = dt / dx
    cdef double c2 = dt / dy
    cdef Py_ssize_t i, j, im
    for i in range(nx):
        im = i - 1 if i > 0 else nx - 1
        for j in range(ny):
            u[i, j] = u[i, j] - c1 * (phi[i, j] - phi[im, j])
        for j in range(1, ny):
            v[i, j] = v[i, j] - c2 * (phi[i, j] - phi[i, j - 1])


def thomas_solve(double[:, ::1] m, double[:, ::1] cp, double a,
                 double complex[:, ::1] d):
    cdef Py_ssize_t nk = d.shape[0]
    cdef Py_ssize_t ny = d.shape[1]
    cdef Py_ssize_t k, j
    for k in range(nk):
        d[k, 0] = d[k, 0] * m[k, 0]
        for j in range(1, ny):
            d[k, j] = (d[k, j] - a * d[k, j - 1]) * m[k, j]
        for j in range(ny - 2, -1, -1):
            d[k, j] = d[k, j] - cp[k, j] * d[k, j + 1]


def apply_patch_constant(double[:, ::1] f, Py_ssize_t s, double[:, ::1] out):
    cdef Py_ssize_t nx = f.shape[0]
    cdef Py_ssize_t nyf = f.shape[1]
    cdef Py_ssize_t i, j
    for i in range(nx):
        for j in range(nyf):
            out[i, j] = f[(i // s) * s, (j // s) * s]


def add_patch_nudge(double[:, ::1] df, double[:, ::1] f,
                    double[:, ::1] obs_coarse, Py_ssize_t s, double mu):
    cdef Py_ssize_t nx = df.shape[0]
    cdef Py_ssize_t ny_cov = obs_coarse.shape[1] * s
    cdef Py_ssize_t i, j
    for i in range(nx):
        for j in range(ny_cov):
            df[i, j] = df[i, j] + mu * (obs_coarse[i // s, j // s]
                                        - f[(i // s) * s, (j // s) * s])


def ab_combine1(double[:, ::1] out, double[:, ::1] y, double dt,
                double c0, double[:, ::1] f0):
    cdef Py_ssize_t nx = out.shape[0]
    cdef Py_ssize_t ny = out.shape[1]
    cdef Py_ssize_t i, j
    for i in range(nx):
        for j in range(ny):
            out[i, j] = y[i, j] + dt * (c0 * f0[i, j])


def ab_combine2(double[:, ::1] out, double[:, ::1] y, double dt,
                double c0, double[:, ::1] f0, double c1, double[:, ::1] f1):
    cdef Py_ssize_t nx = out.shape[0]
    cdef Py_ssize_t ny = out.shape[1]
    cdef Py_ssize_t i, j
    for i in range(nx):
        for j in range(ny):
            out[i, j] = y[i, j] + dt * (c0 * f0[i, j] + c1 * f1[i, j])


def ab_combine3(double[:, ::1] out, double[:, ::1] y, double dt,
                double c0, double[:, ::1] f0, double c1, double[:, ::1] f1,
                double c2, double[:, ::1] f2):
    cdef Py_ssize_t nx = out.shape[0]
    cdef Py_ssize_t ny = out.shape[1]
    cdef Py_ssize_t i, j
    for i in range(nx):
        for j in range(ny):
            out[i, j] = y[i, j] + dt * ((c0 * f0[i, j] + c1 * f1[i, j])
                                        + c2 * f2[i, j])


def max_abs(double[:, ::1] f):
    cdef Py_ssize_t nx = f.shape[0]
    cdef Py_ssize_t ny = f.shape[1]
    cdef double best = 0.0
    cdef double val
    cdef Py_ssize_t i, j
    for i in range(nx):
        for j in range(ny):
            val = fabs(f[i, j])
            if val > best or val != val:  # propagate NaN as non-finite max
                best = val
    return best
