"""Shared fixtures: solver-generated datasets and a trained model.

All reference data comes from the ``rbcda`` command line tool; the tests
exercise the surrogate package strictly through the file formats and CSV
schemas shared with the solver.
"""

import shutil
import subprocess

import pytest

from cdanet import (
    SurrogateConfig,
    TrainPlan,
    read_container,
    save_checkpoint,
    slice_window,
    train,
    write_container,
)

RA = 1.0e5
PR = 0.7
S_FACTOR = 4
T_FACTOR = 4

TOY_INI = """\
[physical]
rayleigh = {ra}
prandtl = 0.7

[grid]
nx = 96
ny = 32
lx = 3.0
ly = 1.0

[time]
dt = 0.002
t_final = 12.0
save_every = 20

[run]
seed = {seed}
init_amplitude = 0.3
"""

MINI_INI = """\
[physical]
rayleigh = 100000.0
prandtl = 0.7

[grid]
nx = 48
ny = 16
lx = 3.0
ly = 1.0

[time]
dt = 0.002
t_final = 8.0
save_every = 20

[run]
seed = {seed}
init_amplitude = 0.3
"""

TOY_TRAIN_SEEDS = (31, 32, 33)
TOY_HELDOUT_SEED = 34
# windows start after the kinetic energy saturates and cover exactly
# 29 saved frames = 7 observation intervals + 1 at T_FACTOR = 4; start
# frames are indices into the saved trajectory (frame spacing 0.04)
WINDOW_FRAMES = 29
TOY_WINDOW_STARTS = (250, 216)
MINI_WINDOW_START = 150

TOY_CONFIG = SurrogateConfig(
    channels=(16, 32),
    feature_dim=24,
    mlp_hidden=(64, 64, 64),
    pde_loss_weight=0.01,
    learning_rate=2e-3,
    batch_size=8192,
    pde_batch_size=1024,
    epochs=20,
    seed=5,
)

MINI_CONFIG = SurrogateConfig(
    channels=(8, 16),
    feature_dim=12,
    mlp_hidden=(32, 32),
    pde_loss_weight=0.01,
    learning_rate=2e-3,
    batch_size=4096,
    pde_batch_size=512,
    epochs=3,
    seed=7,
)


def run_cli(*args):
    """Run the solver CLI; hard-fail with its stderr on any error."""
    exe = shutil.which("rbcda")
    assert exe is not None, "solver CLI 'rbcda' not on PATH"
    proc = subprocess.run([exe, *map(str, args)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, f"rbcda {args[0]} failed: {proc.stderr}"
    return proc


def run_cdanet(*args, expect_rc=0):
    """Run our own CLI and assert on its exit code."""
    exe = shutil.which("cdanet")
    assert exe is not None, "CLI 'cdanet' not on PATH"
    proc = subprocess.run([exe, *map(str, args)],
                          capture_output=True, text=True)
    assert proc.returncode == expect_rc, (
        f"cdanet {args[0]} exited {proc.returncode}: {proc.stderr}"
    )
    return proc


def _make_windows(out_dir, ini_text, seed, starts):
    """Reference run -> sliced fine windows -> clean coarse observations.

    ``starts`` are saved-frame indices; slicing by index keeps the frame
    count exact despite the tiny float drift in accumulated times.
    """
    cfg_path = out_dir / f"run{seed}.ini"
    cfg_path.write_text(ini_text.format(ra=RA, seed=seed))
    ref_path = out_dir / f"ref{seed}.bin"
    run_cli("reference", "--config", cfg_path, "--out", ref_path)
    ref = read_container(ref_path)
    pairs = []
    for k, k0 in enumerate(starts):
        tag = f"{seed}" if k == 0 else f"{seed}{'bcdefg'[k - 1]}"
        win_path = out_dir / f"win{tag}.bin"
        ta = ref.times[k0] - 1e-9
        tb = ref.times[k0 + WINDOW_FRAMES - 1] + 1e-9
        write_container(slice_window(ref, ta, tb), win_path)
        obs_path = out_dir / f"obs{tag}.bin"
        run_cli("observe", win_path, "--s-factor", S_FACTOR,
                "--t-factor", T_FACTOR, "--sigma", 0.0,
                "--out", obs_path)
        pairs.append((str(obs_path), str(win_path)))
    return ref_path, pairs


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("cdanet-data")


@pytest.fixture(scope="session")
def toy_files(data_dir):
    """96x32 dataset: three training seeds plus one held-out seed.

    Returns a dict with ``train_pairs`` (5 pairs: two time windows for the
    first two seeds, one for the third), ``val_pair``, and the held-out
    reference path.
    """
    pairs = []
    for i, seed in enumerate(TOY_TRAIN_SEEDS):
        starts = TOY_WINDOW_STARTS if i < 2 else TOY_WINDOW_STARTS[:1]
        _, p = _make_windows(data_dir, TOY_INI, seed, starts)
        pairs.extend(p)
    ref_path, val = _make_windows(data_dir, TOY_INI, TOY_HELDOUT_SEED,
                                  TOY_WINDOW_STARTS[:1])
    return {
        "train_pairs": tuple(pairs),
        "val_pair": val[0],
        "heldout_ref": ref_path,
        "dir": data_dir,
    }


@pytest.fixture(scope="session")
def mini_files(data_dir):
    """48x16 dataset for fast trainer-mechanics tests: one pair."""
    mini_dir = data_dir / "mini"
    mini_dir.mkdir(exist_ok=True)
    _, pairs = _make_windows(mini_dir, MINI_INI, 21, (MINI_WINDOW_START,))
    return {"pair": pairs[0], "dir": mini_dir}


@pytest.fixture(scope="session")
def toy_plan(toy_files):
    return TrainPlan(model=TOY_CONFIG, mode=1,
                     train_pairs=toy_files["train_pairs"],
                     val_pair=toy_files["val_pair"],
                     target_stride=2)


@pytest.fixture(scope="session")
def toy_checkpoint(toy_plan, data_dir):
    """The shared trained model; the expensive fixture of this suite."""
    model, meta, history = train(toy_plan)
    path = data_dir / "toy_model.pt"
    save_checkpoint(path, model, meta, history)
    return {"path": path, "model": model, "meta": meta,
            "history": history}
