"""Scalar-gated residual networks for fully-connected models, in numpy."""

from .data import Dataset, batches, load_idx, load_mnist
from .layers import gate, gate_grad
from .model import (
    Network,
    NetworkConfig,
    build,
    forward,
    backward,
    insert_identity_layer,
    init_distance_report,
    k_profile,
    load_checkpoint,
    mean_k,
    predict,
    save_checkpoint,
)
from .optimizer import Nadam
from .pruning import PruneReport, prune_curve, remove_block
from .tensor import Rng
from .training import RunReport, train

__version__ = "0.1.0"
