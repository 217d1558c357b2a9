"""Structure selection for one-hidden-layer perceptrons.

Robust Levenberg-Marquardt training, four pruning strategies (Engel,
Engel_mod, N2PFA and Engel_mod followed by N2PFA), a synthetic sawmill
dataset generator and a multi-seed comparison harness.
"""

__version__ = "0.1.0"

from .mlp_core import MlpModel, count_params, forward, jacobian_params, sensitivity_wrt_input
from .training import Dataset, TrainConfig, TrainReport, levenberg_marquardt, train
from .pruning import ALGORITHMS, PruneConfig, PruneReport, prune
from .datagen import GeneratorConfig, generate

__all__ = [
    "__version__",
    "ALGORITHMS",
    "Dataset",
    "GeneratorConfig",
    "MlpModel",
    "PruneConfig",
    "PruneReport",
    "TrainConfig",
    "TrainReport",
    "count_params",
    "forward",
    "generate",
    "jacobian_params",
    "levenberg_marquardt",
    "prune",
    "sensitivity_wrt_input",
    "train",
]
