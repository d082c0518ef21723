"""Adam optimizer over a ParameterStore."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParameterStore


class Adam:
    """Standard Adam with bias correction.

    Each call to ``step`` checks gradient finiteness (NaN/Inf is a hard
    error), applies the update to every parameter accepted by ``trainable``,
    increments the step counter, and zeroes all gradients.
    """

    def __init__(self, store: ParameterStore, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 trainable: Callable[[str], bool] | None = None):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.trainable = trainable or (lambda name: True)
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in store.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in store.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.store.items():
            g = p.grad
            if g is None:
                continue
            if not np.isfinite(g).all():
                raise FloatingPointError(f"non-finite gradient for {name}")
            if self.trainable(name):
                m = self._m[name]
                v = self._v[name]
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        self.store.zero_grads()

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Optimizer state as named arrays (for checkpoint embedding)."""
        out: dict[str, np.ndarray] = {"adam.t": np.asarray([self.t], dtype=np.float64)}
        for name in self.store.names():
            out[f"adam.m.{name}"] = self._m[name].copy()
            out[f"adam.v.{name}"] = self._v[name].copy()
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if "adam.t" in arrays:
            self.t = int(arrays["adam.t"][0])
        for name in self.store.names():
            if f"adam.m.{name}" in arrays:
                self._m[name][...] = arrays[f"adam.m.{name}"]
            if f"adam.v.{name}" in arrays:
                self._v[name][...] = arrays[f"adam.v.{name}"]
