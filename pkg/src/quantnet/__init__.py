"""Quantized ReLU networks built from explicit gadgets, with exact verification."""

from .core import (
    Mode,
    NetworkError,
    QuantizedNetwork,
    WeightCodebook,
    complexity,
    eval_exact,
    eval_f64,
    validate,
)

__all__ = [
    "Mode",
    "NetworkError",
    "QuantizedNetwork",
    "WeightCodebook",
    "complexity",
    "eval_exact",
    "eval_f64",
    "validate",
]
__version__ = "0.1.0"
