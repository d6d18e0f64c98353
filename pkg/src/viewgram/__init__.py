"""n-gram aggregation over multi-view feature sequences.

Training, 512-d descriptor extraction, and retrieval evaluation for models
that slide n-view windows over a shape's view-feature matrix and aggregate
them with parameter-free attention.
"""

from .autodiff import (
    GradientTape,
    Tensor,
    backward,
    compute_dtype,
    cross_entropy,
    finite_diff_check,
    finite_diff_report,
    layer_norm,
    linear,
    relu,
    set_compute_dtype,
    softmax,
)
from .kernels import BACKEND
from .model import (
    BranchConfig,
    ModelParameters,
    attention_aggregate,
    attention_scores,
    branch_forward,
    extract_descriptor,
    init_parameters,
    multi_scale_forward,
    nglu_forward,
    row_max_pool,
)
from .optim import OptimizerState, clip_gradients, sgd_step
from .rng import Rng
from .train import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint, train, train_step

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BranchConfig",
    "Checkpoint",
    "GradientTape",
    "ModelParameters",
    "OptimizerState",
    "Rng",
    "Tensor",
    "TrainConfig",
    "attention_aggregate",
    "attention_scores",
    "backward",
    "branch_forward",
    "clip_gradients",
    "compute_dtype",
    "cross_entropy",
    "extract_descriptor",
    "finite_diff_check",
    "finite_diff_report",
    "init_parameters",
    "layer_norm",
    "linear",
    "load_checkpoint",
    "multi_scale_forward",
    "nglu_forward",
    "relu",
    "row_max_pool",
    "save_checkpoint",
    "set_compute_dtype",
    "sgd_step",
    "softmax",
    "train",
    "train_step",
]
