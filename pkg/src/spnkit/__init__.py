"""spnkit: RAT-SPN probabilistic circuits with hypernetwork weight generation.

Exact likelihoods, marginals, conditionals, ancestral sampling, a
memory-optimal streaming evaluator, and gradient-descent training with
either per-weight decay or soft weight-sharing through sector embeddings.
"""

from .data import Dataset, ParzenConfig, avg_log_likelihood, gen_synthetic, load_dataset, parzen_score
from .errors import DataError, ModelFormatError, NumericError, SpnError, ZeroProbabilityError
from .evaluate import MARGINALIZED, conditional_log, eval_log_density, full_marginal
from .hypernet import (
    DecoderConfig,
    HyperParams,
    hyper_param_count,
    init_hyper,
    materialize_all,
    materialize_sector,
)
from .io import load_model, save_model
from .sampling import sample
from .stream import store_provider, stream_eval
from .structure import CircuitStructure, ReplicaTree, Sector, build_structure, param_count
from .training import (
    HyperModel,
    OptState,
    PlainModel,
    TrainConfig,
    adam_step,
    default_config,
    gradient,
    nll_loss,
    train_loop,
)
from .weights import WeightStore

__version__ = "0.1.0"

__all__ = [
    "CircuitStructure", "ReplicaTree", "Sector", "build_structure", "param_count",
    "WeightStore", "MARGINALIZED", "full_marginal", "eval_log_density", "conditional_log",
    "stream_eval", "store_provider", "sample",
    "DecoderConfig", "HyperParams", "init_hyper", "materialize_sector", "materialize_all",
    "hyper_param_count",
    "PlainModel", "HyperModel", "TrainConfig", "OptState", "adam_step", "default_config",
    "nll_loss", "gradient", "train_loop",
    "Dataset", "ParzenConfig", "load_dataset", "gen_synthetic", "avg_log_likelihood",
    "parzen_score",
    "save_model", "load_model",
    "SpnError", "DataError", "ZeroProbabilityError", "ModelFormatError", "NumericError",
]
