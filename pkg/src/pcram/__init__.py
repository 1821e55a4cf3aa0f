"""Simulator and algorithm library for the Pipelining Circuit RAM (PCRAM):
a word-RAM with a fixed table of synchronous Boolean circuits that can be
started once per tick and deliver their outputs after a depth-long delay."""

from .circuit import (Circuit, CircuitBuilder, deserialize, deserialize_many, evaluate,
                      evaluate_batch, serialize, synchronize, validate)
from .machine import CostReport, InFlight, Machine, MachineConfig
from .errors import (AlignmentError, BudgetError, ConcurrentWriteError, ModelViolation,
                     ParameterError, ParseError, PcramError, PhaseError, ValidationError)

__version__ = "0.1.0"

__all__ = [
    "Circuit", "CircuitBuilder", "deserialize", "deserialize_many", "evaluate", "evaluate_batch",
    "serialize", "synchronize", "validate",
    "CostReport", "InFlight", "Machine", "MachineConfig",
    "AlignmentError", "BudgetError", "ConcurrentWriteError", "ModelViolation", "ParameterError",
    "ParseError", "PcramError", "PhaseError", "ValidationError",
]
