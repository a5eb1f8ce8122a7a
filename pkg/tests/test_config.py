import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbcda.config import (
    ConfigError,
    GridSpec,
    PhysicalParams,
    RunConfig,
    TimeSpec,
    desk_config,
    load_config,
    parse_config,
    save_config,
    serialize_config,
    validate,
)


def test_desk_defaults():
    cfg = desk_config()
    assert (cfg.grid.nx, cfg.grid.ny) == (192, 64)
    assert (cfg.grid.lx, cfg.grid.ly) == (3.0, 1.0)
    assert cfg.physical.rayleigh == 1e5
    assert cfg.physical.prandtl == 0.7
    assert cfg.grid.dx == 3.0 / 192
    assert cfg.grid.dy == 1.0 / 64


def test_derived_quantities():
    phys = PhysicalParams(rayleigh=1e5, prandtl=0.7)
    # nu = Pr/sqrt(Ra), kappa = 1/sqrt(Ra)
    assert math.isclose(phys.nu, 0.7 / math.sqrt(1e5), rel_tol=1e-15)
    assert math.isclose(phys.kappa, 1.0 / math.sqrt(1e5), rel_tol=1e-15)
    grid = GridSpec(nx=10, ny=4, lx=3.0, ly=1.0)
    assert grid.shape_u == (10, 4)
    assert grid.shape_v == (10, 5)
    assert grid.shape_center == (10, 4)
    ts = TimeSpec(dt=0.25, t_final=2.0, save_every=2)
    assert ts.n_steps == 8


def test_validate_rejects_bad_grid():
    cfg = desk_config()
    bad = RunConfig(
        physical=cfg.physical,
        grid=GridSpec(nx=0, ny=64, lx=3.0, ly=1.0),
        time=cfg.time,
    )
    with pytest.raises(ConfigError, match="grid size"):
        validate(bad)


def test_validate_rejects_nonpositive_rayleigh():
    cfg = desk_config()
    bad = RunConfig(
        physical=PhysicalParams(rayleigh=0.0, prandtl=0.7),
        grid=cfg.grid,
        time=cfg.time,
    )
    with pytest.raises(ConfigError, match="rayleigh"):
        validate(bad)


def test_validate_rejects_fractional_step_count():
    cfg = desk_config()
    bad = RunConfig(
        physical=cfg.physical,
        grid=cfg.grid,
        time=TimeSpec(dt=0.3, t_final=1.0, save_every=1),
    )
    with pytest.raises(ConfigError, match="whole number of steps"):
        validate(bad)


def test_validate_rejects_nontiling_factor():
    cfg = desk_config()
    with pytest.raises(ConfigError, match="factor"):
        validate(cfg, s_factors=(5,))
    # 4 divides both 192 and 64
    validate(cfg, s_factors=(4,), t_factors=(4,))


def test_cfl_warning_threshold():
    # At the desk scale dx = dy = 1/64; the heuristic velocity scale 0.7
    # crosses the 0.15 CFL limit between dt = 1e-3 and dt = 4e-3.
    ok = desk_config(dt=1e-3, t_final=1.0)
    assert not any("cfl" in w.lower() for w in validate(ok))
    risky = desk_config(dt=4e-3, t_final=1.0)
    assert any("cfl" in w.lower() for w in validate(risky))


def test_grid_reynolds_warning():
    fine = desk_config()
    assert not any("Reynolds" in w for w in validate(fine))
    coarse = desk_config(nx=48, ny=16, dt=1e-3, t_final=1.0)
    assert any("Reynolds" in w for w in validate(coarse))


def test_serialize_parse_roundtrip_exact():
    cfg = desk_config(dt=1e-3, t_final=7.0, save_every=13, seed=42)
    text = serialize_config(cfg)
    assert parse_config(text) == cfg


def test_save_load_roundtrip(tmp_path):
    cfg = desk_config(rayleigh=3.7e6, nx=96, ny=32, dt=2.5e-4, t_final=0.5,
                      save_every=7, seed=9)
    path = tmp_path / "cfg.ini"
    save_config(cfg, path)
    assert load_config(path) == cfg


finite_pos = st.floats(min_value=1e-12, max_value=1e12,
                       allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(
    rayleigh=finite_pos,
    prandtl=finite_pos,
    lx=finite_pos,
    ly=finite_pos,
    dt=finite_pos,
    nx=st.integers(min_value=1, max_value=4096),
    ny=st.integers(min_value=1, max_value=4096),
    n_steps=st.integers(min_value=0, max_value=10**6),
    save_every=st.integers(min_value=1, max_value=10**6),
    seed=st.integers(min_value=0, max_value=2**63 - 1),
    amp=st.floats(min_value=0, max_value=10, allow_nan=False),
)
def test_roundtrip_is_bitwise_for_arbitrary_values(
    rayleigh, prandtl, lx, ly, dt, nx, ny, n_steps, save_every, seed, amp
):
    # Floats survive the INI round trip exactly (written via repr), so the
    # parsed config compares equal field-for-field, not just approximately.
    cfg = RunConfig(
        physical=PhysicalParams(rayleigh=rayleigh, prandtl=prandtl),
        grid=GridSpec(nx=nx, ny=ny, lx=lx, ly=ly),
        time=TimeSpec(dt=dt, t_final=n_steps * dt, save_every=save_every),
        seed=seed,
        init_amplitude=amp,
    )
    assert parse_config(serialize_config(cfg)) == cfg


def test_parse_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_config("not an ini file at all [[[")
    with pytest.raises(ConfigError):
        parse_config("[physical]\nrayleigh = 1e5\n")  # missing sections
