"""GAN generators with stochastic (Gaussian reparameterized) layers, built on a small numpy autodiff engine."""

from .autodiff import Graph, Tensor
from .nn import LayerSpec, ModelParams, init_params, parse_layers, sample
from .prng import Prng
from .synthetic import SynthSpec, generate
from .trainer import TrainConfig, evaluate_model, train_gan

__version__ = "0.1.0"

__all__ = [
    "Graph",
    "Tensor",
    "LayerSpec",
    "ModelParams",
    "init_params",
    "parse_layers",
    "sample",
    "Prng",
    "SynthSpec",
    "generate",
    "TrainConfig",
    "evaluate_model",
    "train_gan",
]
