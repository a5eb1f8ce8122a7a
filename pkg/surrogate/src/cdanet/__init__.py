"""Coarse-to-fine convection field reconstruction.

A small physics-regularized network that maps coarse space-time windows
of convection fields to their fine-grid counterparts.  It exchanges data
with the solver-side toolkit exclusively through the binary snapshot
container format and the shared CSV report schema.
"""

from .config import ConfigError, SurrogateConfig, TrainPlan, load_plan
from .infer import infer_fields, predict_field_grid, write_inference
from .model import ShapeError, SurrogateModel, build_model
from .pde import field_derivatives, residual_loss, residual_parts
from .perturb import (WeightPerturbation, apply_perturbation, layer_sigmas,
                      member_seed, perturb_sweep)
from .trajio import (Container, FormatError, read_container, read_header,
                     slice_window, write_container, write_fine_trajectory)
from .train import (CheckpointError, TrainingError, load_checkpoint,
                    save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "SurrogateConfig",
    "TrainPlan",
    "load_plan",
    "infer_fields",
    "predict_field_grid",
    "write_inference",
    "ShapeError",
    "SurrogateModel",
    "build_model",
    "field_derivatives",
    "residual_loss",
    "residual_parts",
    "WeightPerturbation",
    "apply_perturbation",
    "layer_sigmas",
    "member_seed",
    "perturb_sweep",
    "Container",
    "FormatError",
    "read_container",
    "read_header",
    "slice_window",
    "write_container",
    "write_fine_trajectory",
    "CheckpointError",
    "TrainingError",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]
