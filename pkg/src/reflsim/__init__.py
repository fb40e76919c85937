"""Synthesis of glass-reflection training examples from scene-referred images."""

from .config import SimulationConfig
from .culling import CullReason, CullSignal
from .image_core import ColorSpace, LinearImage, read_image, write_image

__all__ = ["ColorSpace", "CullReason", "CullSignal", "LinearImage", "SimulationConfig",
           "read_image", "write_image"]
__version__ = "0.1.0"
