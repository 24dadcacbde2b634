"""Distributional regression with pre-additive-noise generator networks.

Train a stochastic neural generator by the energy score (or a kernel
score), sample from the fitted conditional distribution, and read off
means, quantiles and prediction intervals; compare against classical
L1/L2/quantile regression; validate against closed-form extrapolation
oracles on synthetic settings with known truth.
"""

from .core import Rng, empirical_quantile, matmul, sample_uniform
from .engression import EngressionModel, fit
from .errors import DomainError, EngressError, FormatError, ShapeError, TrainingDiverged
from .losses import LossSpec
from .mlp import NetConfig, NetParams
from .optim import TrainConfig
from .simulate import SimSetting

__all__ = [
    "Rng",
    "empirical_quantile",
    "matmul",
    "sample_uniform",
    "EngressionModel",
    "fit",
    "LossSpec",
    "NetConfig",
    "NetParams",
    "TrainConfig",
    "SimSetting",
    "EngressError",
    "ShapeError",
    "DomainError",
    "FormatError",
    "TrainingDiverged",
]
