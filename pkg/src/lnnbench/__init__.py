"""Linear regression versus deep linear networks on synthetic noisy lines."""

from lnnbench.datagen import Dataset, generate_dataset, sample_true_params
from lnnbench.models import (
    LinearParams,
    LnnParams,
    collapse,
    forward_linear,
    forward_lnn,
    init_lnn,
)
from lnnbench.oracle import DegenerateInputError, deviation, normal_equation
from lnnbench.optim import (
    RunResult,
    Status,
    TrainConfig,
    gd_step,
    grad_linear,
    grad_lnn,
    mse,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DegenerateInputError",
    "LinearParams",
    "LnnParams",
    "RunResult",
    "Status",
    "TrainConfig",
    "collapse",
    "deviation",
    "forward_linear",
    "forward_lnn",
    "gd_step",
    "generate_dataset",
    "grad_linear",
    "grad_lnn",
    "init_lnn",
    "mse",
    "normal_equation",
    "sample_true_params",
    "train",
]
