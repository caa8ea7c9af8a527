"""Keypoint-driven video recognition on a from-scratch numpy autodiff core."""

from .autodiff import Graph, GradientReport, grad_check, kink_margin
from .config import TrainConfig, load_config, parse_config
from .errors import ConfigError, FormatError, GraphError, ShapeError
from .kernels import BACKEND
from .tensor import Tensor, no_grad, parameter, track_kinks

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "FormatError",
    "GradientReport",
    "Graph",
    "GraphError",
    "ShapeError",
    "Tensor",
    "TrainConfig",
    "grad_check",
    "kink_margin",
    "load_config",
    "no_grad",
    "parameter",
    "parse_config",
    "track_kinks",
    "__version__",
]
