"""Network/training configuration and the JSON training plan."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SurrogateConfig:
    """Architecture and optimization settings.

    ``channels`` gives the encoder width per resolution level (>= 2
    levels; each level below the first halves the spatial grid).
    ``batch_size`` is the number of sample points per optimization step;
    the physics term uses ``pde_batch_size`` points instead when that is
    set (the residual costs several extra backward passes per point, so
    a smaller physics batch buys a large speedup).  ``sigma_obs``
    and ``sigma_mod`` are the per-epoch training noise levels used by the
    noisy-training mode and ignored otherwise.
    """

    channels: tuple[int, ...] = (24, 48)
    feature_dim: int = 32
    inception: bool = True
    mlp_hidden: tuple[int, ...] = (96, 96, 96)
    pde_loss_weight: float = 0.01
    learning_rate: float = 2e-3
    batch_size: int = 4096
    pde_batch_size: int | None = None
    epochs: int = 40
    sigma_obs: float = 0.0
    sigma_mod: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if len(self.channels) < 2:
            raise ConfigError("channels needs at least two levels")
        if any(c < 1 for c in self.channels):
            raise ConfigError("channel counts must be positive")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be positive")
        if not self.mlp_hidden or any(w < 1 for w in self.mlp_hidden):
            raise ConfigError("mlp_hidden widths must be positive")
        if self.pde_loss_weight < 0:
            raise ConfigError("pde_loss_weight must be nonnegative")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.pde_batch_size is not None and self.pde_batch_size < 1:
            raise ConfigError("pde_batch_size must be >= 1 when set")
        if self.sigma_obs < 0 or self.sigma_mod < 0:
            raise ConfigError("training noise levels must be nonnegative")


@dataclass(frozen=True)
class TrainPlan:
    """One training job: file pairs, mode flags, and the model config.

    ``mode`` selects the supervision regime: 1 trains on the given pairs
    as is, 2 additionally redraws observation and weight noise at each
    epoch start (levels from the model config), 3 is mode 1 with
    ``ra_assumed`` overriding the Rayleigh number inside the physics
    residual (targets are expected to come from an imperfect downscaler).
    ``train_pairs``/``val_pair`` are (observation file, target trajectory
    file) paths.  ``target_stride`` supervises on every stride-th stored
    target frame, which trades supervision density for epoch cost.
    """

    model: SurrogateConfig = field(default_factory=SurrogateConfig)
    mode: int = 1
    train_pairs: tuple[tuple[str, str], ...] = ()
    val_pair: tuple[str, str] | None = None
    ra_assumed: float | None = None
    target_stride: int = 1

    def __post_init__(self):
        if self.mode not in (1, 2, 3):
            raise ConfigError(f"unknown training mode {self.mode}")
        if not self.train_pairs:
            raise ConfigError("train_pairs must be nonempty")
        if any(len(p) != 2 for p in self.train_pairs):
            raise ConfigError("train_pairs entries must be (obs, fine)")
        if self.val_pair is not None and len(self.val_pair) != 2:
            raise ConfigError("val_pair must be (obs, fine)")
        if self.ra_assumed is not None and self.ra_assumed <= 0:
            raise ConfigError("ra_assumed must be positive")
        if self.mode == 3 and self.ra_assumed is None:
            raise ConfigError("mode 3 needs an explicit ra_assumed")
        if self.target_stride < 1:
            raise ConfigError("target_stride must be >= 1")


def config_to_dict(cfg: SurrogateConfig) -> dict:
    d = asdict(cfg)
    d["channels"] = list(cfg.channels)
    d["mlp_hidden"] = list(cfg.mlp_hidden)
    return d


def config_from_dict(data: dict) -> SurrogateConfig:
    known = set(SurrogateConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kwargs = dict(data)
    for key in ("channels", "mlp_hidden"):
        if key in kwargs:
            kwargs[key] = tuple(int(v) for v in kwargs[key])
    try:
        return SurrogateConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(cfg: SurrogateConfig) -> str:
    """SHA-256 of the canonical JSON rendering, for checkpoint checks."""
    canon = json.dumps(config_to_dict(cfg), sort_keys=True,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def plan_from_dict(data: dict) -> TrainPlan:
    known = set(TrainPlan.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown plan keys {sorted(unknown)}")
    kwargs = dict(data)
    if "model" in kwargs:
        kwargs["model"] = config_from_dict(kwargs["model"])
    if "train_pairs" in kwargs:
        kwargs["train_pairs"] = tuple(
            tuple(str(x) for x in pair) for pair in kwargs["train_pairs"]
        )
    if kwargs.get("val_pair") is not None:
        kwargs["val_pair"] = tuple(str(x) for x in kwargs["val_pair"])
    return TrainPlan(**kwargs)


def load_plan(path) -> TrainPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return plan_from_dict(json.load(fh))


def save_plan(plan: TrainPlan, path) -> None:
    data = {
        "model": config_to_dict(plan.model),
        "mode": plan.mode,
        "train_pairs": [list(p) for p in plan.train_pairs],
        "val_pair": list(plan.val_pair) if plan.val_pair else None,
        "ra_assumed": plan.ra_assumed,
        "target_stride": plan.target_stride,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
