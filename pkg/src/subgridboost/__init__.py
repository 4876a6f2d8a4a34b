"""Gradient boosting of small convolutional weak learners on dynamically
selected pixel subgrids, with importance maps driven by input gradients."""

__version__ = "0.1.0"

from .boosting import (  # noqa: F401
    BoostEnsemble,
    boost_round,
    compute_boost_weights,
    ensemble_risk,
    functional_gradient,
    line_search,
    multiclass_loss,
    risk_of_scores,
)
from .checkpoint import load_checkpoint, save_checkpoint  # noqa: F401
from .data import LabeledBatch, load_cifar10_binary, load_idx, make_synthetic  # noqa: F401
from .harness import DatasetSpec, RunConfig, run_experiment, seed_study  # noqa: F401
from .kernels import BACKEND as kernel_backend  # noqa: F401
from .learners import (  # noqa: F401
    build_basic_learner,
    build_probe,
    train_weak_learner,
    warm_start_learner,
)
from .nn import Network, Tensor, mse_loss  # noqa: F401
from .subgrid import (  # noqa: F401
    ImportanceMap,
    SubgridMask,
    select_subgrid,
    slice_batch,
    update_importance,
)
