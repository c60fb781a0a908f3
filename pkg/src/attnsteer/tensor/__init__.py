from . import ops
from .core import (
    DEFAULT_DTYPE,
    PRIMITIVES,
    NonFiniteError,
    Primitive,
    Record,
    ShapeError,
    Tape,
    Tensor,
    active_tape,
    apply_primitive,
    backward,
    constant,
    register_primitive,
)
from .gradcheck import GradCheckReport, LeafCheck, gradient_check

__all__ = [
    "DEFAULT_DTYPE", "PRIMITIVES", "GradCheckReport", "LeafCheck", "NonFiniteError", "Primitive",
    "Record", "ShapeError", "Tape", "Tensor", "active_tape", "apply_primitive", "backward",
    "constant", "gradient_check", "ops", "register_primitive",
]
