"""Shared heavy fixtures: one spun-up desk-scale state, one tapped window.

The assimilation tests and the acceptance suite all run against the same
spun-up convection state and the same 6-time-unit reference window, so the
expensive solver passes happen once per session.
"""

from dataclasses import dataclass, replace

import numpy as np
import pytest

from rbcda.config import RunConfig, TimeSpec, desk_config
from rbcda.observations import CoarseObservation
from rbcda.solver import FieldState, simulate

SPIN_TIME = 25.0   # time units from the random start to a developed flow
WINDOW = 6.0       # assimilation window length
DT = 1e-3
S_FACTOR = 4
OBS_EVERY = 4      # fine steps between observation snapshots
EVAL_EVERY = 20    # fine steps between stored fine snapshots (0.02 tu)


@dataclass(frozen=True)
class ReferenceWindow:
    """A reference pass plus everything the downscaling tests consume."""

    config: RunConfig
    initial: FieldState
    final: FieldState
    obs_clean: CoarseObservation
    fine_temperature: np.ndarray   # (n_eval, nx, ny)
    eval_times: np.ndarray
    eval_steps: np.ndarray
    kinetic_energy: np.ndarray     # at eval times
    max_cfl: float


@pytest.fixture(scope="session")
def desk_state() -> FieldState:
    """Desk-scale state after spinning up past the instability transient."""
    config = desk_config(dt=DT, t_final=SPIN_TIME,
                         save_every=int(round(SPIN_TIME / DT)))
    traj = simulate(config, record=False)
    return traj.final_state


@pytest.fixture(scope="session")
def desk_window(desk_state) -> ReferenceWindow:
    n_steps = int(round(WINDOW / DT))
    config = replace(
        desk_config(),
        time=TimeSpec(dt=DT, t_final=WINDOW, save_every=n_steps),
    )
    grid = config.grid
    ou, ov, ot, opr, otimes = [], [], [], [], []
    fine_t, eval_times, ke = [], [], []

    def tap(k, state):
        if k % OBS_EVERY == 0:
            ou.append(state.u[::S_FACTOR, ::S_FACTOR].copy())
            ov.append(state.v[::S_FACTOR, :grid.ny:S_FACTOR].copy())
            ot.append(state.temperature[::S_FACTOR, ::S_FACTOR].copy())
            opr.append(state.pressure[::S_FACTOR, ::S_FACTOR].copy())
            otimes.append(state.time)
        if k % EVAL_EVERY == 0:
            fine_t.append(state.temperature.copy())
            eval_times.append(state.time)
            ke.append(0.5 * (np.mean(state.u ** 2) + np.mean(state.v ** 2)))

    traj = simulate(config, initial=desk_state, tap=tap, record=False)
    obs = CoarseObservation(
        grid=grid,
        physical=config.physical,
        dt=DT,
        cadence=OBS_EVERY,
        s_factor=S_FACTOR,
        t_factor=OBS_EVERY,
        sigma_obs=0.0,
        noise_seed=0,
        source_hash=b"\x00" * 32,
        seed=config.seed,
        times=np.array(otimes),
        u=np.array(ou),
        v=np.array(ov),
        temperature=np.array(ot),
        pressure=np.array(opr),
    )
    eval_times = np.array(eval_times)
    eval_steps = np.round((eval_times - eval_times[0]) / DT).astype(int)
    return ReferenceWindow(
        config=config,
        initial=desk_state,
        final=traj.final_state,
        obs_clean=obs,
        fine_temperature=np.array(fine_t),
        eval_times=eval_times,
        eval_steps=eval_steps,
        kinetic_energy=np.array(ke),
        max_cfl=traj.max_cfl,
    )
