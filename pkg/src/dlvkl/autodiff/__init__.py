"""Reverse-mode automatic differentiation on numpy arrays."""

from . import ops
from .tape import Tape, Var, backward, is_var, value

__all__ = ["Tape", "Var", "backward", "is_var", "ops", "value"]
