"""Whole-grid inference, trajectory output, and the command-line surface."""

import json

import numpy as np
import pytest

from cdanet import (
    FormatError,
    TrainPlan,
    infer_fields,
    read_container,
    save_checkpoint,
    train,
    write_inference,
)
from conftest import MINI_CONFIG, run_cdanet, run_cli


@pytest.fixture(scope="module")
def mini_ckpt(mini_files, tmp_path_factory):
    plan = TrainPlan(model=MINI_CONFIG, mode=1,
                     train_pairs=(mini_files["pair"],), target_stride=2)
    model, meta, hist = train(plan)
    path = tmp_path_factory.mktemp("ckpt") / "mini.pt"
    save_checkpoint(path, model, meta, hist)
    return {"path": str(path), "model": model, "meta": meta}


def test_inference_covers_the_fine_grid(mini_ckpt, mini_files):
    obs = read_container(mini_files["pair"][0])
    res = infer_fields(mini_ckpt["model"], obs, mini_ckpt["meta"])
    assert np.array_equal(res["times"], obs.times)
    for name in ("u", "T", "p"):
        assert res[name].shape == (8, 48, 16)
        assert np.all(np.isfinite(res[name]))
    # v is sampled on the horizontal edges, wall rows exactly zero
    assert res["v"].shape == (8, 48, 17)
    assert np.all(np.isfinite(res["v"]))
    assert np.all(res["v"][:, :, 0] == 0.0)
    assert np.all(res["v"][:, :, -1] == 0.0)


def test_inference_at_times_between_observation_frames(mini_ckpt, mini_files):
    obs = read_container(mini_files["pair"][0])
    t0, t1 = obs.times[0], obs.times[-1]
    times = [t0, 0.7 * t0 + 0.3 * t1, t1]
    res = infer_fields(mini_ckpt["model"], obs, mini_ckpt["meta"],
                       times=times, fields=("T",))
    assert res["T"].shape == (3, 48, 16)
    assert np.all(np.isfinite(res["T"]))


def test_inference_rejects_times_outside_the_window(mini_ckpt, mini_files):
    obs = read_container(mini_files["pair"][0])
    with pytest.raises(FormatError, match="observation window"):
        infer_fields(mini_ckpt["model"], obs, mini_ckpt["meta"],
                     times=[obs.times[-1] + 0.5])
    with pytest.raises(FormatError, match="no evaluation times"):
        infer_fields(mini_ckpt["model"], obs, mini_ckpt["meta"], times=[])


def test_inference_requires_an_observation_container(mini_ckpt, mini_files):
    fine = read_container(mini_files["pair"][1])
    with pytest.raises(FormatError, match="must be an observation"):
        infer_fields(mini_ckpt["model"], fine, mini_ckpt["meta"])


def test_inference_rejects_mismatched_coarsening(mini_ckpt, mini_files,
                                                 tmp_path):
    other = tmp_path / "obs_t2.bin"
    run_cli("observe", mini_files["pair"][1], "--s-factor", 4,
            "--t-factor", 2, "--sigma", 0.0, "--out", other)
    obs = read_container(other)
    with pytest.raises(FormatError,
                       match="incompatible factors: trained for S=4, T=4"):
        infer_fields(mini_ckpt["model"], obs, mini_ckpt["meta"])


def test_written_trajectory_is_deterministic_and_faithful(mini_ckpt,
                                                          mini_files,
                                                          tmp_path):
    obs = read_container(mini_files["pair"][0])
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    res = write_inference(mini_ckpt["model"], obs, mini_ckpt["meta"], p1)
    write_inference(mini_ckpt["model"], obs, mini_ckpt["meta"], p2)
    assert p1.read_bytes() == p2.read_bytes()

    c = read_container(p1)
    assert not c.is_observation
    assert (c.nx, c.ny) == (obs.nx, obs.ny)
    assert (c.lx, c.ly) == (obs.lx, obs.ly)
    assert (c.rayleigh, c.prandtl) == (obs.rayleigh, obs.prandtl)
    assert c.dt == obs.dt
    assert c.cadence == obs.cadence  # frame spacing carried over
    assert c.seed == obs.seed
    assert np.array_equal(c.times, obs.times)
    assert np.array_equal(c.fields[2], res["T"])
    v = c.v_full()
    assert np.array_equal(v, res["v"])
    assert np.all(v[:, :, 0] == 0.0) and np.all(v[:, :, -1] == 0.0)


def test_solver_cli_consumes_the_written_trajectory(mini_ckpt, mini_files,
                                                    tmp_path):
    obs = read_container(mini_files["pair"][0])
    fine_path = tmp_path / "recon.bin"
    write_inference(mini_ckpt["model"], obs, mini_ckpt["meta"], fine_path)
    sub_path = tmp_path / "recon_obs.bin"
    run_cli("observe", fine_path, "--s-factor", 8, "--t-factor", 7,
            "--sigma", 0.0, "--out", sub_path)
    recon = read_container(fine_path)
    sub = read_container(sub_path)
    assert sub.is_observation
    assert sub.fields[2].shape == (2, 6, 2)
    assert np.array_equal(sub.fields[0], recon.fields[0][::7, ::8, ::8])
    assert np.array_equal(sub.fields[2], recon.fields[2][::7, ::8, ::8])


def test_cli_inference_matches_the_library(mini_ckpt, mini_files, tmp_path):
    obs_path = mini_files["pair"][0]
    lib_path = tmp_path / "lib.bin"
    write_inference(mini_ckpt["model"], read_container(obs_path),
                    mini_ckpt["meta"], lib_path)
    cli_path = tmp_path / "cli.bin"
    proc = run_cdanet("infer", obs_path, "--checkpoint", mini_ckpt["path"],
                      "--out", cli_path)
    assert "wrote" in proc.stdout
    assert cli_path.read_bytes() == lib_path.read_bytes()


def test_cli_weight_perturbation_is_seeded(mini_ckpt, mini_files, tmp_path):
    obs_path = mini_files["pair"][0]
    base = tmp_path / "s0.bin"
    run_cdanet("infer", obs_path, "--checkpoint", mini_ckpt["path"],
               "--out", base)
    outs = []
    for tag, sigma, seed in (("a", 0.05, 3), ("b", 0.05, 3), ("c", 0.05, 4)):
        p = tmp_path / f"{tag}.bin"
        run_cdanet("infer", obs_path, "--checkpoint", mini_ckpt["path"],
                   "--out", p, "--sigma-mod", sigma, "--seed", seed)
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]
    assert outs[0] != base.read_bytes()


def test_cli_reports_errors_on_stderr(mini_ckpt, mini_files, tmp_path):
    obs_path = mini_files["pair"][0]

    proc = run_cdanet("infer", obs_path, "--checkpoint",
                      tmp_path / "missing.pt", "--out", tmp_path / "x.bin",
                      expect_rc=2)
    assert proc.stderr.startswith("error:")

    junk = tmp_path / "junk.pt"
    junk.write_bytes(b"not a checkpoint at all")
    proc = run_cdanet("infer", obs_path, "--checkpoint", junk,
                      "--out", tmp_path / "y.bin", expect_rc=2)
    assert proc.stderr.startswith("error:")

    bad_plan = tmp_path / "plan.json"
    bad_plan.write_text(json.dumps({"mode": 4, "train_pairs": []}))
    proc = run_cdanet("train", "--config", bad_plan,
                      "--checkpoint", tmp_path / "z.pt", expect_rc=2)
    assert proc.stderr.startswith("error:")

    other = tmp_path / "obs_t2.bin"
    run_cli("observe", mini_files["pair"][1], "--s-factor", 4,
            "--t-factor", 2, "--sigma", 0.0, "--out", other)
    proc = run_cdanet("infer", other, "--checkpoint", mini_ckpt["path"],
                      "--out", tmp_path / "w.bin", expect_rc=2)
    assert proc.stderr.startswith("error:")
    assert "incompatible factors" in proc.stderr
