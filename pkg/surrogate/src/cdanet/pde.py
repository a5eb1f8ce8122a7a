"""Physics residual of the nondimensional convection system via autodiff.

The governing system on predictions (u, v, T, p)(x, y, t):

    u_x + v_y = 0
    u_t + u u_x + v u_y = -p_x + (Pr / sqrt(Ra)) (u_xx + u_yy)
    v_t + u v_x + v v_y = -p_y + (Pr / sqrt(Ra)) (v_xx + v_yy) + Pr T
    T_t + u T_x + v T_y = (1 / sqrt(Ra)) (T_xx + T_yy) + v

``residual_parts`` evaluates the mean-square of each equation over the
given collocation points with derivatives taken by automatic
differentiation through the prediction function, which must map
(x, y, t) tensors to an (N, 4) output.
"""

from __future__ import annotations

import math

import torch

__all__ = ["field_derivatives", "residual_parts", "residual_loss"]


def _grads(f: torch.Tensor, coords: tuple[torch.Tensor, ...],
           create: bool = True) -> tuple[torch.Tensor, ...]:
    # retain_graph: several grad calls share one forward graph even in
    # evaluation mode, so it must survive until the last of them.
    # materialize_grads / the requires_grad check: a prediction (or one
    # of its first derivatives) may not depend on some coordinate at
    # all; the corresponding derivative is then exactly zero.
    if not f.requires_grad:
        return tuple(torch.zeros_like(c) for c in coords)
    return torch.autograd.grad(f.sum(), coords, create_graph=create,
                               retain_graph=True, allow_unused=True,
                               materialize_grads=True)


def field_derivatives(predict, x: torch.Tensor, y: torch.Tensor,
                      t: torch.Tensor,
                      create_graph: bool = True) -> dict[str, torch.Tensor]:
    """Fields and every derivative the residual needs, at (x, y, t).

    Returns u, v, T, p plus first derivatives u_x..p_y and the second
    derivatives u_xx, u_yy, v_xx, v_yy, T_xx, T_yy; all shaped (N,).
    """
    x = x.detach().clone().requires_grad_(True)
    y = y.detach().clone().requires_grad_(True)
    t = t.detach().clone().requires_grad_(True)
    out = predict(x, y, t)
    if out.ndim != 2 or out.shape[-1] != 4:
        raise ValueError(f"predict must return (N, 4), got "
                         f"{tuple(out.shape)}")
    u, v, T, p = out[:, 0], out[:, 1], out[:, 2], out[:, 3]

    u_x, u_y, u_t = _grads(u, (x, y, t))
    v_x, v_y, v_t = _grads(v, (x, y, t))
    T_x, T_y, T_t = _grads(T, (x, y, t))
    p_x, p_y = _grads(p, (x, y), create=create_graph)

    u_xx = _grads(u_x, (x,), create=create_graph)[0]
    u_yy = _grads(u_y, (y,), create=create_graph)[0]
    v_xx = _grads(v_x, (x,), create=create_graph)[0]
    v_yy = _grads(v_y, (y,), create=create_graph)[0]
    T_xx = _grads(T_x, (x,), create=create_graph)[0]
    T_yy = _grads(T_y, (y,), create=create_graph)[0]

    return {
        "u": u, "v": v, "T": T, "p": p,
        "u_x": u_x, "u_y": u_y, "u_t": u_t,
        "v_x": v_x, "v_y": v_y, "v_t": v_t,
        "T_x": T_x, "T_y": T_y, "T_t": T_t,
        "p_x": p_x, "p_y": p_y,
        "u_xx": u_xx, "u_yy": u_yy,
        "v_xx": v_xx, "v_yy": v_yy,
        "T_xx": T_xx, "T_yy": T_yy,
    }


def residual_parts(predict, x: torch.Tensor, y: torch.Tensor,
                   t: torch.Tensor, rayleigh: float, prandtl: float,
                   create_graph: bool = True) -> dict[str, torch.Tensor]:
    """Mean-square residual of each governing equation at (x, y, t).

    ``predict`` maps coordinate tensors to (N, 4) fields.  Returns a dict
    with keys mass, momentum_x, momentum_y, energy.  ``create_graph``
    keeps the result differentiable w.r.t. model parameters (training);
    evaluation-only callers can switch it off.
    """
    d = field_derivatives(predict, x, y, t, create_graph=create_graph)
    if not create_graph:
        # first derivatives keep a graph internally (the second
        # derivatives need it); evaluation callers get plain values
        d = {k: v.detach() for k, v in d.items()}
    u, v, T = d["u"], d["v"], d["T"]

    nu = prandtl / math.sqrt(rayleigh)
    kappa = 1.0 / math.sqrt(rayleigh)

    r_mass = d["u_x"] + d["v_y"]
    r_mx = d["u_t"] + u * d["u_x"] + v * d["u_y"] + d["p_x"] \
        - nu * (d["u_xx"] + d["u_yy"])
    r_my = d["v_t"] + u * d["v_x"] + v * d["v_y"] + d["p_y"] \
        - nu * (d["v_xx"] + d["v_yy"]) - prandtl * T
    r_en = d["T_t"] + u * d["T_x"] + v * d["T_y"] \
        - kappa * (d["T_xx"] + d["T_yy"]) - v

    return {
        "mass": (r_mass * r_mass).mean(),
        "momentum_x": (r_mx * r_mx).mean(),
        "momentum_y": (r_my * r_my).mean(),
        "energy": (r_en * r_en).mean(),
    }


def residual_loss(predict, x, y, t, rayleigh: float, prandtl: float,
                  create_graph: bool = True) -> torch.Tensor:
    """Sum of the per-equation mean-square residuals."""
    parts = residual_parts(predict, x, y, t, rayleigh, prandtl,
                           create_graph=create_graph)
    return parts["mass"] + parts["momentum_x"] + parts["momentum_y"] \
        + parts["energy"]
