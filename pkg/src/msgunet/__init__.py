"""Multi-scale-gradient U-Net: paired image translation on a small
reverse-mode autodiff engine, with per-scale discriminators and heads."""

from .nets import ArchitectureConfig
from .tensor import Tensor

__all__ = ["ArchitectureConfig", "Tensor"]
__version__ = "0.1.0"
