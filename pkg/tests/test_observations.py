"""Observation extraction, noise injection, and ensemble seeding tests."""

import numpy as np
import pytest

from rbcda.config import GridSpec, PhysicalParams, RunConfig, TimeSpec
from rbcda.observations import (
    CoarseObservation,
    ModelNoiseSpec,
    add_obs_noise,
    coarsen,
    make_ensemble,
    member_seed,
    perturb_cda_model,
    read_observation,
    write_observation,
)
from rbcda.solver import simulate
from rbcda.trajio import FormatError, read_trajectory, write_trajectory


@pytest.fixture(scope="module")
def small_traj():
    cfg = RunConfig(
        physical=PhysicalParams(rayleigh=1e5, prandtl=0.7),
        grid=GridSpec(nx=24, ny=8),
        time=TimeSpec(dt=1e-3, t_final=0.012, save_every=2),
        seed=5,
    )
    return simulate(cfg)


def test_coarsen_double_loop_oracle(small_traj):
    s, t = 4, 3
    obs = coarsen(small_traj, s, t)
    n_coarse_t = (small_traj.times.size + t - 1) // t
    nxc, nyc = 24 // s, 8 // s
    assert obs.u.shape == (n_coarse_t, nxc, nyc)
    assert obs.v.shape == (n_coarse_t, nxc, nyc)
    for kc in range(n_coarse_t):
        for ic in range(nxc):
            for jc in range(nyc):
                assert obs.u[kc, ic, jc] == small_traj.u[kc * t, ic * s, jc * s]
                assert obs.v[kc, ic, jc] == small_traj.v[kc * t, ic * s, jc * s]
                assert (obs.temperature[kc, ic, jc]
                        == small_traj.temperature[kc * t, ic * s, jc * s])
                assert (obs.pressure[kc, ic, jc]
                        == small_traj.pressure[kc * t, ic * s, jc * s])
        assert obs.times[kc] == small_traj.times[kc * t]
    # cadence counts fine steps: trajectory cadence times t
    assert obs.cadence == small_traj.cadence * t
    assert obs.s_factor == s and obs.t_factor == t
    assert obs.sigma_obs == 0.0
    assert obs.source_hash == small_traj.source_hash


def test_coarsen_drops_v_top_wall_row(small_traj):
    obs = coarsen(small_traj, 2, 1)
    # stored v rows are 0, 2, ..., ny-2: the top wall row never appears
    assert obs.v.shape[2] == 4
    assert np.array_equal(obs.v, small_traj.v[:, ::2, :8:2])


def test_coarsen_validation(small_traj):
    with pytest.raises(ValueError, match="divide"):
        coarsen(small_traj, 5, 1)
    with pytest.raises(ValueError, match="positive"):
        coarsen(small_traj, 0, 1)
    with pytest.raises(ValueError, match="positive"):
        coarsen(small_traj, 2, 0)


def test_zero_noise_is_bitwise_copy(small_traj):
    obs = coarsen(small_traj, 4, 2)
    for seed in (0, 1, 987654321):
        noisy = add_obs_noise(obs, 0.0, seed)
        assert np.array_equal(noisy.u, obs.u)
        assert np.array_equal(noisy.v, obs.v)
        assert np.array_equal(noisy.temperature, obs.temperature)
        assert np.array_equal(noisy.pressure, obs.pressure)
        assert noisy.noise_seed == seed
        assert noisy.u is not obs.u  # still an independent copy


def test_noise_statistics(small_traj):
    obs = coarsen(small_traj, 2, 1)
    sigma = 0.05
    deltas = []
    for seed in range(40):
        noisy = add_obs_noise(obs, sigma, seed)
        deltas.append((noisy.temperature - obs.temperature).ravel())
    d = np.concatenate(deltas)
    n = d.size
    assert abs(d.mean()) < 5 * sigma / np.sqrt(n)
    assert abs(d.std() - sigma) < 0.02 * sigma
    assert noisy.sigma_obs == sigma


def test_noise_draw_order_pinned(small_traj):
    # u, then v, then temperature, then pressure, each C-order
    obs = coarsen(small_traj, 4, 2)
    seed = 1234
    noisy = add_obs_noise(obs, 0.01, seed)
    rng = np.random.default_rng(seed)
    for clean, perturbed in ((obs.u, noisy.u), (obs.v, noisy.v),
                             (obs.temperature, noisy.temperature),
                             (obs.pressure, noisy.pressure)):
        draw = rng.normal(0.0, 0.01, clean.shape)
        assert np.array_equal(perturbed, clean + draw)


def test_negative_sigma_rejected(small_traj):
    obs = coarsen(small_traj, 4, 2)
    with pytest.raises(ValueError, match="nonnegative"):
        add_obs_noise(obs, -0.1, 0)


def test_make_ensemble_seeds(small_traj):
    obs = coarsen(small_traj, 4, 2)
    members = make_ensemble(obs, 0.01, 5, base_seed=300)
    assert [m.noise_seed for m in members] == [300, 301, 302, 303, 304]
    assert member_seed(300, 4) == 304
    # each member reproducible independently
    again = add_obs_noise(obs, 0.01, 302)
    assert np.array_equal(members[2].temperature, again.temperature)
    with pytest.raises(ValueError, match=">= 1"):
        make_ensemble(obs, 0.01, 0, base_seed=0)


def test_perturb_cda_model():
    params = PhysicalParams(rayleigh=1e5, prandtl=0.7)
    spec = ModelNoiseSpec(sigma_mod=0.3, target="cda_rayleigh",
                          ra_assumed=1.3e5)
    out = perturb_cda_model(params, spec)
    assert out.rayleigh == 1.3e5
    assert out.prandtl == 0.7
    wrong = ModelNoiseSpec(sigma_mod=0.3, target="surrogate_weights")
    with pytest.raises(ValueError, match="target"):
        perturb_cda_model(params, wrong)


def test_model_noise_spec_validation():
    with pytest.raises(ValueError, match="unknown model-noise target"):
        ModelNoiseSpec(sigma_mod=0.1, target="viscosity")
    with pytest.raises(ValueError, match="nonnegative"):
        ModelNoiseSpec(sigma_mod=-0.1, target="surrogate_weights")
    with pytest.raises(ValueError, match="ra_assumed"):
        ModelNoiseSpec(sigma_mod=0.1, target="cda_rayleigh")


def test_observation_io_round_trip(small_traj, tmp_path):
    obs = add_obs_noise(coarsen(small_traj, 4, 2), 0.02, seed=42)
    path = tmp_path / "obs.bin"
    write_observation(obs, path)
    back = read_observation(path)
    assert back.grid == obs.grid
    assert back.physical == obs.physical
    assert back.dt == obs.dt
    assert back.cadence == obs.cadence
    assert back.s_factor == obs.s_factor
    assert back.t_factor == obs.t_factor
    assert back.sigma_obs == obs.sigma_obs
    assert back.noise_seed == obs.noise_seed
    assert back.seed == obs.seed
    assert back.source_hash == obs.source_hash
    assert np.array_equal(back.times, obs.times)
    assert np.array_equal(back.u, obs.u)
    assert np.array_equal(back.v, obs.v)
    assert np.array_equal(back.temperature, obs.temperature)
    assert np.array_equal(back.pressure, obs.pressure)


def test_reader_flag_mismatch(small_traj, tmp_path):
    obs = coarsen(small_traj, 4, 2)
    obs_path = tmp_path / "obs.bin"
    traj_path = tmp_path / "traj.bin"
    write_observation(obs, obs_path)
    write_trajectory(small_traj, traj_path)
    with pytest.raises(FormatError, match="observation"):
        read_trajectory(obs_path)
    with pytest.raises(FormatError, match="trajectory"):
        read_observation(traj_path)
