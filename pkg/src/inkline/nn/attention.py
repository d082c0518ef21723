"""Masked multi-head attention composed from kernel primitives."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigurationError, DimensionError
from .tensor import Tensor, _record, causal_softmax, linear, matmul, scale


def masked_multi_head_attention(
    x: Tensor,
    wq: Tensor, bq: Tensor,
    wk: Tensor, bk: Tensor,
    wv: Tensor, bv: Tensor,
    wo: Tensor, bo: Tensor,
    heads: int,
) -> Tensor:
    """Scaled dot-product attention with a causal mask.

    `x` is (n, d) or batched (B, n, d); all projection weights are (d, d).
    Position i attends only to positions <= i, and masked attention weights
    are exactly zero, so output row i is bitwise invariant to changes in rows
    after i.
    """
    d = x.shape[-1]
    if d % heads != 0:
        raise ConfigurationError(f"width {d} is not divisible by {heads} heads")
    if wq.shape != (d, d):
        raise DimensionError(f"attention projections must be ({d}, {d}), got {wq.shape}")
    dh = d // heads

    q = linear(x, wq, bq)
    k = linear(x, wk, bk)
    v = linear(x, wv, bv)

    q = _to_heads(q, heads, dh)
    k = _to_heads(k, heads, dh)
    v = _to_heads(v, heads, dh)

    scores = scale(matmul(q, _swap_last2(k)), 1.0 / math.sqrt(dh))
    weights = causal_softmax(scores)
    mixed = matmul(weights, v)
    merged = _from_heads(mixed)
    return linear(merged, wo, bo)


def _to_heads(t: Tensor, heads: int, dh: int) -> Tensor:
    """(..., n, heads*dh) -> (..., heads, n, dh)."""
    lead = t.shape[:-2]
    n = t.shape[-2]
    out = Tensor(np.moveaxis(t.data.reshape(lead + (n, heads, dh)), -2, -3).copy())

    def backward():
        if t.requires_grad:
            g = np.moveaxis(out.grad, -3, -2).reshape(t.shape)
            t._ensure_grad()[...] += g

    return _record(out, (t,), backward)


def _from_heads(t: Tensor) -> Tensor:
    """(..., heads, n, dh) -> (..., n, heads*dh)."""
    lead = t.shape[:-3]
    heads, n, dh = t.shape[-3], t.shape[-2], t.shape[-1]
    out = Tensor(np.moveaxis(t.data, -3, -2).reshape(lead + (n, heads * dh)).copy())

    def backward():
        if t.requires_grad:
            g = np.moveaxis(out.grad.reshape(lead + (n, heads, dh)), -2, -3)
            t._ensure_grad()[...] += g

    return _record(out, (t,), backward)


def _swap_last2(t: Tensor) -> Tensor:
    out = Tensor(t.data.swapaxes(-1, -2).copy())

    def backward():
        if t.requires_grad:
            t._ensure_grad()[...] += out.grad.swapaxes(-1, -2)

    return _record(out, (t,), backward)
