"""Spike-driven decision transformer for offline RL on a single CPU.

A from-scratch float64 autodiff core, LIF spiking layers with surrogate
gradients, three spiking causal-attention mechanisms plus a real-valued
reference, progressive threshold-scaled normalization that folds into
linear layers at inference, synthetic offline-RL tasks, and an
operation-level energy estimator.
"""

__version__ = "0.1.0"

from .data import TrajectoryDataset, gen_keydoor, gen_reacher
from .energy import EnergyModel, estimate_energy
from .model import DecisionModel, ModelConfig, load_model
from .tensor import ContractError, DimensionError, Tensor, no_grad
from .training import TrainConfig, evaluate, train_and_evaluate

__all__ = [
    "ContractError",
    "DecisionModel",
    "DimensionError",
    "EnergyModel",
    "ModelConfig",
    "Tensor",
    "TrainConfig",
    "TrajectoryDataset",
    "estimate_energy",
    "evaluate",
    "gen_keydoor",
    "gen_reacher",
    "load_model",
    "no_grad",
    "train_and_evaluate",
    "__version__",
]
