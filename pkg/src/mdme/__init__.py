"""Multi-domain motion embedding toolkit."""

from .network import (MdmeConfig, MdmeModel, build_ablation, humanoid_preset,
                      quadruped_preset, synth_preset)
from .rng import Rng
from .tensor import Tape, Tensor

__version__ = "0.1.0"

__all__ = [
    "MdmeConfig", "MdmeModel", "Rng", "Tape", "Tensor",
    "build_ablation", "humanoid_preset", "quadruped_preset", "synth_preset",
    "__version__",
]
