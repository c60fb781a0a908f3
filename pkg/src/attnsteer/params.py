"""Parameter initialisation and small helpers shared by the network modules."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .tensor import Tensor

Params = dict[str, Tensor]


def xavier_bound(shape: tuple[int, ...]) -> float:
    """Glorot-uniform bound ``sqrt(6 / (fan_in + fan_out))``.

    Convolution kernels (``KH, KW, C_in, C_out``) count the receptive field in
    both fans; a vector counts its length as both.
    """
    if len(shape) == 0:
        raise ValueError("xavier init needs rank >= 1")
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        receptive = int(np.prod(shape[:-2])) if len(shape) > 2 else 1
        fan_in = shape[-2] * receptive
        fan_out = shape[-1] * receptive
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def xavier_init(shape, seed, dtype=np.float32, name: str | None = None) -> Tensor:
    """Uniform samples in +-xavier_bound(shape); deterministic given ``seed``.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    shape = tuple(int(s) for s in shape)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bound = xavier_bound(shape)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), name=name)


def zeros(shape, name: str | None = None, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), name=name)


def as_arrays(params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: np.asarray(v.data) for k, v in params.items()}


def from_arrays(arrays: Mapping[str, np.ndarray], dtype=np.float32) -> Params:
    return {k: Tensor(np.asarray(v, dtype=dtype), name=k) for k, v in arrays.items()}


def subset(params: Mapping[str, Tensor], prefix: str) -> Params:
    return {k: v for k, v in params.items() if k.startswith(prefix)}


def cast(params: Mapping[str, Tensor], dtype) -> Params:
    return {k: Tensor(np.asarray(v.data, dtype=dtype), name=k) for k, v in params.items()}
