"""Dense tensors with a recording tape for reverse-mode differentiation.

A :class:`Tensor` wraps a read-only numpy array. Primitive applications made
while a :class:`Tape` is active are appended to it as :class:`Record` entries,
which is enough to run the reverse pass (:func:`backward`) or to replay the
computation forward with substituted leaf values (:meth:`Tape.replay`).
"""
from __future__ import annotations

import contextvars
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_ids = itertools.count(1)
_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "attnsteer_active_tape", default=None
)


class ShapeError(ValueError):
    """Raised when input shapes do not conform to a primitive's shape rule."""


class NonFiniteError(ArithmeticError):
    """Raised when a primitive produces NaN or Inf."""


class Tensor:
    """Immutable n-d array with an identity used by the tape.

    ``requires_grad`` marks leaves whose gradients are wanted; outputs of
    primitives inherit it from their inputs.
    """

    __slots__ = ("data", "id", "name", "requires_grad")
    __array_priority__ = 100

    def __init__(self, data, dtype=None, name: str | None = None, requires_grad: bool = True):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(())
        arr = arr.view()
        arr.flags.writeable = False
        self.data = arr
        self.id = next(_ids)
        self.name = name
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # operator sugar; the functional API in ``ops`` is the reference
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.subtract(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.subtract(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.multiply(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.multiply(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.slice(self, index)


def constant(value, like: Tensor | None = None) -> Tensor:
    """Wrap ``value`` as a non-differentiable leaf matching ``like``'s dtype."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype or DEFAULT_DTYPE), requires_grad=False)


@dataclass(frozen=True)
class Primitive:
    """Forward rule ``(attrs, *arrays) -> (out, saved)`` and adjoint rule
    ``(attrs, saved, grad_out, *arrays) -> per-input gradients``."""

    name: str
    forward: Callable[..., tuple[np.ndarray, Any]]
    backward: Callable[..., Sequence[np.ndarray | None]]
    smooth: bool = True


PRIMITIVES: dict[str, Primitive] = {}


def register_primitive(prim: Primitive) -> Primitive:
    PRIMITIVES[prim.name] = prim
    return prim


@dataclass
class Record:
    op: str
    inputs: tuple[int, ...]
    output: int
    attrs: dict[str, Any]
    saved: Any = None


@dataclass
class Tape:
    """Ordered log of primitive applications.

    Use as a context manager; primitives applied inside the ``with`` block
    are recorded. Tensors that enter a record without having been produced by
    an earlier record are the tape's leaves.
    """

    records: list[Record] = field(default_factory=list)
    values: dict[int, Tensor] = field(default_factory=dict)
    leaves: dict[int, Tensor] = field(default_factory=dict)
    _token: Any = field(default=None, repr=False)

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def watch(self, *tensors: Tensor) -> None:
        """Register tensors as leaves even if no recorded op consumes them."""
        for t in tensors:
            if t.id not in self.values:
                self.values[t.id] = t
                self.leaves[t.id] = t

    def _add(self, rec: Record, inputs: Sequence[Tensor], out: Tensor) -> None:
        for t in inputs:
            if t.id not in self.values:
                self.values[t.id] = t
                self.leaves[t.id] = t
        self.values[out.id] = out
        self.records.append(rec)

    @property
    def output(self) -> Tensor:
        if not self.records:
            raise ValueError("tape is empty")
        return self.values[self.records[-1].output]

    def replay(self, overrides: dict[int, np.ndarray] | None = None, dtype=None) -> "Tape":
        """Re-run every record forward, optionally substituting leaf values.

        Returns a new tape whose records share op ids and tensor ids with this
        one, so gradients and outputs can be looked up by the original ids.
        With ``dtype`` all floating leaves are cast first, which is how the
        64-bit gradient oracle re-evaluates a 32-bit tape.
        """
        overrides = overrides or {}
        env: dict[int, np.ndarray] = {}
        new = Tape()
        for lid, leaf in self.leaves.items():
            arr = overrides.get(lid, leaf.data)
            if dtype is not None:
                arr = np.asarray(arr, dtype=dtype)
            env[lid] = arr
            t = _with_id(arr, lid, leaf)
            new.values[lid] = t
            new.leaves[lid] = t
        for rec in self.records:
            prim = PRIMITIVES[rec.op]
            arrays = [env[i] for i in rec.inputs]
            out, saved = prim.forward(rec.attrs, *arrays)
            _check_finite(rec.op, out)
            env[rec.output] = out
            orig = self.values[rec.output]
            new.values[rec.output] = _with_id(out, rec.output, orig)
            new.records.append(Record(rec.op, rec.inputs, rec.output, rec.attrs, saved))
        return new


def _with_id(arr: np.ndarray, tid: int, like: Tensor) -> Tensor:
    t = Tensor.__new__(Tensor)
    a = np.asarray(arr).view()
    a.flags.writeable = False
    t.data = a
    t.id = tid
    t.name = like.name
    t.requires_grad = like.requires_grad
    return t


def active_tape() -> Tape | None:
    return _active_tape.get()


def _check_finite(op: str, out: np.ndarray) -> None:
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{op} produced a non-finite result")


def apply_primitive(op: str, *inputs: Tensor, **attrs) -> Tensor:
    """Apply primitive ``op`` to ``inputs`` and record it on the active tape."""
    prim = PRIMITIVES.get(op)
    if prim is None:
        raise KeyError(f"unknown primitive {op!r}")
    out_arr, saved = prim.forward(attrs, *(t.data for t in inputs))
    _check_finite(op, out_arr)
    out = Tensor(out_arr, dtype=out_arr.dtype)
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = _active_tape.get()
    if tape is not None:
        tape._add(Record(op, tuple(t.id for t in inputs), out.id, attrs, saved), inputs, out)
    return out


def backward(tape: Tape, seed, output: Tensor | None = None,
             leaves: Iterable[Tensor] | None = None) -> dict[int, Tensor]:
    """Reverse pass over ``tape`` seeded at its final output.

    Returns a gradient for every leaf of the tape (plus any extra ``leaves``),
    keyed by tensor id. Leaves that do not influence the output get zeros.
    """
    if not tape.records:
        raise ValueError("cannot differentiate an empty tape")
    out = output if output is not None else tape.output
    seed_arr = seed.data if isinstance(seed, Tensor) else np.asarray(seed, dtype=out.dtype)
    if seed_arr.shape != out.shape:
        if seed_arr.size == 1 and out.size == 1:
            seed_arr = seed_arr.reshape(out.shape)
        else:
            raise ShapeError(f"seed shape {seed_arr.shape} does not match output shape {out.shape}")
    grads: dict[int, np.ndarray] = {out.id: seed_arr.astype(out.dtype, copy=False)}
    for rec in reversed(tape.records):
        g = grads.get(rec.output)
        if g is None:
            continue
        ins = [tape.values[i] for i in rec.inputs]
        if not any(t.requires_grad for t in ins):
            continue
        prim = PRIMITIVES[rec.op]
        in_grads = prim.backward(rec.attrs, rec.saved, g, *(t.data for t in ins))
        for t, gi in zip(ins, in_grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.shape:
                raise ShapeError(
                    f"adjoint of {rec.op} returned shape {gi.shape} for input of shape {t.shape}"
                )
            prev = grads.get(t.id)
            grads[t.id] = gi if prev is None else prev + gi
    result: dict[int, Tensor] = {}
    wanted = dict(tape.leaves)
    for t in leaves or ():
        wanted[t.id] = t
    for lid, leaf in wanted.items():
        g = grads.get(lid)
        if g is None:
            g = np.zeros(leaf.shape, dtype=leaf.dtype)
        result[lid] = Tensor(g, dtype=leaf.dtype, requires_grad=False)
    return result
