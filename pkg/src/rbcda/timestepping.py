"""Explicit Adams-Bashforth time integration ladder.

The ladder used everywhere in this package: one second-order Runge-Kutta
(Heun) step to start, a two-step Adams-Bashforth step next, then the
three-step scheme for the rest of the run.  Starting with Heun instead of a
single forward-Euler step keeps the global error O(dt^3); an Euler start
would contaminate the whole run with an O(dt^2) term and cap the observed
convergence order near 2.

``integrate_ode`` runs the same ladder on plain callables and is the
reference used by the temporal-order tests; the flow solver mirrors it
array-wise with projection applied after each update.
"""

from __future__ import annotations

import numpy as np

# Coefficients for y_{n+1} = y_n + dt * sum_m c_m f_{n-m}, newest first.
AB3 = (23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0)
AB2 = (1.5, -0.5)


def ab_coefficients(n_history: int) -> tuple[float, ...]:
    """Adams-Bashforth weights for the available history depth (>= 1)."""
    if n_history >= 3:
        return AB3
    if n_history == 2:
        return AB2
    return (1.0,)


def integrate_ode(f, y0, dt: float, n_steps: int):
    """Integrate y' = f(t, y) with the Heun/AB2/AB3 ladder.

    Returns the array of states [y0, y1, ..., y_n].  ``y0`` may be a scalar
    or an ndarray; ``f`` must return the same shape.
    """
    y = np.asarray(y0, dtype=float)
    out = np.empty((n_steps + 1,) + y.shape, dtype=float)
    out[0] = y
    history: list[np.ndarray] = []  # newest first
    t = 0.0
    for n in range(n_steps):
        fn = np.asarray(f(t, y), dtype=float)
        if not history:
            # Heun: trapezoidal corrector on a forward-Euler predictor.
            y_pred = y + dt * fn
            y = y + (dt * 0.5) * (fn + np.asarray(f(t + dt, y_pred), dtype=float))
        else:
            coeffs = ab_coefficients(len(history) + 1)
            incr = coeffs[0] * fn
            for c, fm in zip(coeffs[1:], history):
                incr = incr + c * fm
            y = y + dt * incr
        history.insert(0, fn)
        del history[2:]  # keep at most two past tendencies
        t += dt
        out[n + 1] = y
    return out


def observed_order(errors, ratio: float = 2.0) -> float:
    """Richardson order estimate from errors at dt, dt/r, dt/r^2, ...

    Returns the mean of log_r(e_k / e_{k+1}) over consecutive pairs.
    """
    e = np.asarray(errors, dtype=float)
    if e.size < 2 or np.any(e <= 0):
        raise ValueError("need >= 2 positive error samples")
    return float(np.mean(np.log(e[:-1] / e[1:]) / np.log(ratio)))
