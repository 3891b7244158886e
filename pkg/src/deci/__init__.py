"""DeCI: progressive Cycle/Drift decomposition with channel-independent logit fusion."""

from deci.errors import ConfigError, DeciError, DimensionError, LoadError, NumericError
from deci.model import (
    DecompositionTrace,
    ModelConfig,
    ModelParams,
    decompose,
    forward,
    init_params,
)

__all__ = [
    "ConfigError",
    "DeciError",
    "DimensionError",
    "LoadError",
    "NumericError",
    "DecompositionTrace",
    "ModelConfig",
    "ModelParams",
    "decompose",
    "forward",
    "init_params",
]

__version__ = "0.1.0"
