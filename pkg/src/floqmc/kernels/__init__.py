"""Kernel backend selection: compiled Cython core with pure-numpy fallback."""

try:
    from ._core import BACKEND, apply_bond, apply_slots
except ImportError:  # extension not built on this interpreter
    from ._pure import BACKEND, apply_bond, apply_slots

__all__ = ["BACKEND", "apply_bond", "apply_slots"]
