"""Named parameter storage and weight initialization.

Initialization scheme (nothing about it is dictated by the model equations;
recorded as a project decision):

* linear / convolution weights: uniform on +/- sqrt(1/fan_in), biases zero;
* residual output projections (attention output, second MLP linear, second
  residual conv): the same, additionally scaled by 1/sqrt(2*depth) so the
  residual stream keeps near-unit variance through the stack;
* embedding and positional tables: uniform with per-table variance 1/2 so
  their sum enters the first normalization with variance close to one.
"""

from __future__ import annotations

import math
from typing import Callable, Iterator

import numpy as np

from .tensor import Tensor


class ParameterStore:
    """Map from dot-separated parameter names to tensors with gradients.

    Names are unique; iteration is lexicographic, so downstream consumers
    (optimizer, checkpoints, finite-difference sweeps) see a deterministic
    order.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.ascontiguousarray(data), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in sorted(self._params):
            yield name, self._params[name]

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def load_arrays(self, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
        """Overwrite matching parameters in place from raw arrays."""
        for name, arr in arrays.items():
            full = prefix + name
            if full not in self._params:
                continue
            t = self._params[full]
            if t.shape != arr.shape:
                raise ValueError(f"shape mismatch loading {full}: {t.shape} vs {arr.shape}")
            t.data[...] = arr.astype(t.data.dtype, copy=False)

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.items()}

    def cast(self, dtype) -> "ParameterStore":
        """A fresh store with the same names and values at another precision."""
        out = ParameterStore()
        for name, t in self.items():
            out.add(name, t.data.astype(dtype))
        return out

    def num_scalars(self) -> int:
        return sum(t.data.size for t in self._params.values())


class Initializer:
    """Seeded parameter factory writing into a ParameterStore."""

    def __init__(self, store: ParameterStore, rng: np.random.Generator, dtype=np.float32):
        self.store = store
        self.rng = rng
        self.dtype = dtype

    def uniform_fan_in(self, name: str, shape: tuple[int, ...], fan_in: int,
                       gain: float = 1.0) -> Tensor:
        bound = gain * math.sqrt(1.0 / fan_in)
        data = self.rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        return self.store.add(name, data)

    def uniform_variance(self, name: str, shape: tuple[int, ...], variance: float) -> Tensor:
        bound = math.sqrt(3.0 * variance)
        data = self.rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        return self.store.add(name, data)

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.store.add(name, np.zeros(shape, dtype=self.dtype))

    def ones(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self.store.add(name, np.ones(shape, dtype=self.dtype))

    def constant(self, name: str, data: np.ndarray) -> Tensor:
        return self.store.add(name, np.asarray(data, dtype=self.dtype))
