"""Learnable-parameter creation and bookkeeping.

Weights draw from uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out));
biases start at zero, norm scales at one. A single seeded generator drives
all draws in registration order, so a (seed, config) pair pins every
initial value.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def uniform_fan(rng: np.random.Generator, shape: tuple[int, ...],
                fan_in: int, fan_out: int, dtype=np.float32) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


def zeros(shape: tuple[int, ...], dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones(shape: tuple[int, ...], dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


def conv_kernel(rng: np.random.Generator, c_out: int, c_in: int, k_t: int,
                dtype=np.float32) -> Tensor:
    return uniform_fan(rng, (c_out, c_in, 1, k_t), fan_in=c_in * k_t,
                       fan_out=c_out * k_t, dtype=dtype)


def linear_weight(rng: np.random.Generator, d_out: int, d_in: int,
                  dtype=np.float32) -> Tensor:
    return uniform_fan(rng, (d_out, d_in), fan_in=d_in, fan_out=d_out, dtype=dtype)


def count_parameters(params: dict[str, Tensor]) -> int:
    return sum(p.size for p in params.values())
