"""Dense-tensor kernel with reverse-mode differentiation.

A ``Tensor`` wraps a row-major numpy array together with an optional gradient
buffer.  Primitive operations compute forward results eagerly with numpy and,
when a ``GradTape`` is active, append a backward closure to the tape.  Calling
``GradTape.backward`` on a scalar loss replays the closures in reverse
execution order, accumulating gradients into every tensor that participated in
the forward pass; tensors that did not participate keep zero gradients.

Two precisions are supported: float32 for training runs and float64 for
gradient-check mode.  Binary operations require both operands to share a
dtype; there is no silent promotion.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import DimensionError

FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A numpy array plus an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data)
        if data.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            data = data.astype(np.float32)
        self.data = data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = np.zeros_like(data) if requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def _ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def tensor(data, dtype=np.float32, requires_grad: bool = False) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


class GradTape:
    """Ordered record of executed primitives for one forward pass.

    Execution order is a valid topological order of the data-flow graph, so
    replaying the recorded closures in reverse propagates gradients from the
    loss to every participating tensor.
    """

    def __init__(self):
        self._ops: list[Callable[[], None]] = []
        self._prev_active: "GradTape | None" = None

    def __len__(self) -> int:
        return len(self._ops)

    def push(self, backward_fn: Callable[[], None]) -> None:
        self._ops.append(backward_fn)

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise DimensionError(f"backward requires a scalar loss, got shape {loss.shape}")
        loss._ensure_grad()[...] = 1.0
        for fn in reversed(self._ops):
            fn()

    def __enter__(self) -> "GradTape":
        global _ACTIVE_TAPE
        self._prev_active = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev_active
        self._prev_active = None


_ACTIVE_TAPE: GradTape | None = None


def active_tape() -> GradTape | None:
    return _ACTIVE_TAPE


class suspend_tape:
    """Context that pauses gradient recording (inference inside training)."""

    def __enter__(self):
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev


class RoutingTrace:
    """Capture-and-replay of piecewise routing decisions (relu masks and
    max-pool argmax indices).

    Central finite differences are only valid where the function is locally
    smooth; at a kink the two-sided evaluation straddles two linear pieces.
    Inside this context the first pass records every routing decision, and
    after ``freeze()`` subsequent passes reuse them, so finite differences
    probe exactly the linear region whose derivative the tape computed.
    """

    def __init__(self):
        self._decisions: list[np.ndarray] = []
        self._cursor = 0
        self.replaying = False

    def record(self, decision: np.ndarray) -> np.ndarray:
        if self.replaying:
            d = self._decisions[self._cursor]
            self._cursor += 1
            return d
        self._decisions.append(decision)
        return decision

    def freeze(self) -> None:
        self.replaying = True
        self._cursor = 0

    def rewind(self) -> None:
        self._cursor = 0

    def __enter__(self) -> "RoutingTrace":
        global _ACTIVE_ROUTING
        self._prev = _ACTIVE_ROUTING
        _ACTIVE_ROUTING = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_ROUTING
        _ACTIVE_ROUTING = self._prev


_ACTIVE_ROUTING: RoutingTrace | None = None


def _record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable[[], None]) -> Tensor:
    """Mark `out` as requiring grad and tape the closure if recording."""
    if _ACTIVE_TAPE is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._ensure_grad()
        _ACTIVE_TAPE.push(backward_fn)
    return out


def _check_same_dtype(*tensors: Tensor) -> np.dtype:
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise DimensionError(f"dtype mismatch: {dt} vs {t.data.dtype}")
    return dt


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def assert_finite(t: Tensor, context: str) -> Tensor:
    """NaN/Inf anywhere is a hard error; used at pass boundaries."""
    if not np.isfinite(t.data).all():
        raise FloatingPointError(f"non-finite values after {context}")
    return t


# ---------------------------------------------------------------------------
# elementwise and shape primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = Tensor(a.data + b.data)

    def backward():
        g = out.grad
        if a.requires_grad:
            a._ensure_grad()[...] += _unbroadcast(g, a.shape)
        if b.requires_grad:
            b._ensure_grad()[...] += _unbroadcast(g, b.shape)

    return _record(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = Tensor(a.data * b.data)

    def backward():
        g = out.grad
        if a.requires_grad:
            a._ensure_grad()[...] += _unbroadcast(g * b.data, a.shape)
        if b.requires_grad:
            b._ensure_grad()[...] += _unbroadcast(g * a.data, b.shape)

    return _record(out, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.data * a.data.dtype.type(s))

    def backward():
        if a.requires_grad:
            a._ensure_grad()[...] += out.grad * a.data.dtype.type(s)

    return _record(out, (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    if _ACTIVE_ROUTING is not None:
        mask = _ACTIVE_ROUTING.record(mask)
    out = Tensor(a.data * mask)

    def backward():
        if a.requires_grad:
            a._ensure_grad()[...] += out.grad * mask

    return _record(out, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # 1/(1+exp(-x)) computed via tanh for stability on large |x|
    out = Tensor(0.5 * (np.tanh(0.5 * a.data) + 1.0))

    def backward():
        if a.requires_grad:
            y = out.data
            a._ensure_grad()[...] += out.grad * y * (1.0 - y)

    return _record(out, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))

    def backward():
        if a.requires_grad:
            a._ensure_grad()[...] += out.grad * (1.0 - out.data * out.data)

    return _record(out, (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def backward():
        if a.requires_grad:
            a._ensure_grad()[...] += out.grad.reshape(a.shape)

    return _record(out, (a,), backward)


def flatten(a: Tensor) -> Tensor:
    """Collapse everything to one axis (used after the last pool)."""
    return reshape(a, (a.data.size,))


def narrow(a: Tensor, start: int, length: int) -> Tensor:
    """Slice `length` elements of the last axis starting at `start`."""
    out = Tensor(a.data[..., start:start + length].copy())

    def backward():
        if a.requires_grad:
            a._ensure_grad()[..., start:start + length] += out.grad

    return _record(out, (a,), backward)


def narrow_axis(a: Tensor, axis: int, start: int, length: int = 1) -> Tensor:
    """Slice `length` elements along `axis` starting at `start`."""
    sel = (slice(None),) * axis + (slice(start, start + length),)
    out = Tensor(a.data[sel].copy())

    def backward():
        if a.requires_grad:
            a._ensure_grad()[sel] += out.grad

    return _record(out, (a,), backward)


def concat_last(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = Tensor(np.concatenate([a.data, b.data], axis=-1))
    na = a.shape[-1]

    def backward():
        g = out.grad
        if a.requires_grad:
            a._ensure_grad()[...] += g[..., :na]
        if b.requires_grad:
            b._ensure_grad()[...] += g[..., na:]

    return _record(out, (a, b), backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    dt = _check_same_dtype(*tensors)
    del dt
    out = Tensor(np.stack([t.data for t in tensors], axis=axis))

    def backward():
        parts = np.moveaxis(out.grad, axis, 0)
        for t, g in zip(tensors, parts):
            if t.requires_grad:
                t._ensure_grad()[...] += g

    return _record(out, tuple(tensors), backward)


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum(), dtype=a.data.dtype))

    def backward():
        if a.requires_grad:
            a._ensure_grad()[...] += out.grad

    return _record(out, (a,), backward)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError("matmul operands must have rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner axes disagree: {a.shape} @ {b.shape} (axis -1 vs axis -2)")
    out = Tensor(np.matmul(a.data, b.data))

    def backward():
        g = out.grad
        if a.requires_grad:
            ga = np.matmul(g, b.data.swapaxes(-1, -2))
            a._ensure_grad()[...] += _unbroadcast(ga, a.shape)
        if b.requires_grad:
            gb = np.matmul(a.data.swapaxes(-1, -2), g)
            b._ensure_grad()[...] += _unbroadcast(gb, b.shape)

    return _record(out, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias over the last axis; weight is (in, out)."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"linear input axis -1 has {x.shape[-1]} features, weight expects {weight.shape[0]}")
    return add(matmul(x, weight), bias)


# ---------------------------------------------------------------------------
# convolution and pooling (stride fixed at 1)
# ---------------------------------------------------------------------------

def _zero_pad(xd: np.ndarray, padding: int) -> np.ndarray:
    if not padding:
        return xd
    b, c, h, w = xd.shape
    out = np.zeros((b, c, h + 2 * padding, w + 2 * padding), dtype=xd.dtype)
    out[:, :, padding:padding + h, padding:padding + w] = xd
    return out


def _patch_matrix(xd: np.ndarray, kh: int, kw: int, padding: int) -> np.ndarray:
    """(C*kh*kw, B*Ho*Wo) patch matrix of a [B, C, H, W] array."""
    xd = _zero_pad(xd, padding)
    b, c, hp, wp = xd.shape
    ho, wo = hp - kh + 1, wp - kw + 1
    sb, sc, sh, sw = xd.strides
    view = np.lib.stride_tricks.as_strided(
        xd, (c, kh, kw, b, ho, wo), (sc, sh, sw, sb, sh, sw), writeable=False)
    return np.ascontiguousarray(view).reshape(c * kh * kw, b * ho * wo)


def _conv_from_patmat(patmat: np.ndarray, w: np.ndarray, b: int,
                      ho: int, wo: int) -> np.ndarray:
    cout = w.shape[0]
    res = w.reshape(cout, -1) @ patmat
    return res.reshape(cout, b, ho, wo).transpose(1, 0, 2, 3)


def _conv_raw(xd: np.ndarray, w: np.ndarray, padding: int) -> np.ndarray:
    """Stride-1 cross-correlation of [B, C, H, W] with [Co, C, kh, kw]."""
    b = xd.shape[0]
    cout, _, kh, kw = w.shape
    ho = xd.shape[2] + 2 * padding - kh + 1
    wo = xd.shape[3] + 2 * padding - kw + 1
    if kh == 1 and kw == 1 and padding == 0:
        res = np.matmul(w.reshape(cout, -1), xd.reshape(b, xd.shape[1], -1))
        return res.reshape(b, cout, ho, wo)
    patmat = _patch_matrix(xd, kh, kw, padding)
    return _conv_from_patmat(patmat, w, b, ho, wo)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, padding: int = 0) -> Tensor:
    """2-D cross-correlation plus bias, stride 1.

    `x` is (C_in, H, W) or batched (B, C_in, H, W); `weight` is
    (C_out, C_in, kh, kw) with odd kernel sides; output spatial size is
    H + 2*padding - kh + 1.  The input gradient is the full correlation of
    the output gradient with the flipped kernel, so forward and backward
    share one gemm-backed path.
    """
    _check_same_dtype(x, weight, bias)
    batched = x.data.ndim == 4
    xd = x.data if batched else x.data[None]
    cout, cin, kh, kw = weight.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"kernel sides must be odd, got ({kh}, {kw})")
    if padding < 0:
        raise DimensionError("padding must be >= 0")
    if xd.shape[1] != cin:
        raise DimensionError(
            f"conv2d channel axis mismatch: input has {xd.shape[1]} channels, weight expects {cin}")
    if bias.shape != (cout,):
        raise DimensionError(f"conv2d bias must have shape ({cout},), got {bias.shape}")
    ho = xd.shape[2] + 2 * padding - kh + 1
    wo = xd.shape[3] + 2 * padding - kw + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d output spatial size ({ho}, {wo}) must be >= 1")

    point_wise = kh == 1 and kw == 1 and padding == 0
    if point_wise:
        patmat = None
        res = _conv_raw(xd, weight.data, padding)
    else:
        patmat = _patch_matrix(xd, kh, kw, padding)
        res = _conv_from_patmat(patmat, weight.data, xd.shape[0], ho, wo)
    res = res + bias.data[None, :, None, None]
    out = Tensor(res if batched else res[0])

    def backward():
        g = out.grad if batched else out.grad[None]
        if bias.requires_grad:
            bias._ensure_grad()[...] += g.sum(axis=(0, 2, 3))
        if weight.requires_grad:
            g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(cout, -1)
            if point_wise:
                gw = (g2 @ xd.transpose(1, 0, 2, 3).reshape(cin, -1).T)
            else:
                gw = g2 @ patmat.T
            weight._ensure_grad()[...] += gw.reshape(cout, cin, kh, kw)
        if x.requires_grad:
            w_flip = weight.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
            gx = _conv_raw(g, np.ascontiguousarray(w_flip), kh - 1 - padding)
            x._ensure_grad()[...] += gx if batched else gx[0]

    return _record(out, (x, weight, bias), backward)


def _patch_matrix_cm(xd: np.ndarray, kh: int, kw: int, padding: int) -> np.ndarray:
    """(C*kh*kw, B*Ho*Wo) patch matrix of a channel-major [C, B, H, W] array."""
    if padding:
        c, b, h, w = xd.shape
        padded = np.zeros((c, b, h + 2 * padding, w + 2 * padding), dtype=xd.dtype)
        padded[:, :, padding:padding + h, padding:padding + w] = xd
        xd = padded
    c, b, hp, wp = xd.shape
    ho, wo = hp - kh + 1, wp - kw + 1
    sc, sb, sh, sw = xd.strides
    view = np.lib.stride_tricks.as_strided(
        xd, (c, kh, kw, b, ho, wo), (sc, sh, sw, sb, sh, sw), writeable=False)
    return np.ascontiguousarray(view).reshape(c * kh * kw, b * ho * wo)


def conv2d_cm(x: Tensor, weight: Tensor, bias: Tensor, padding: int = 0) -> Tensor:
    """conv2d over channel-major activations [C_in, B, H, W] -> [C_out, B, H', W'].

    Same arithmetic as conv2d; this layout keeps the gemm output contiguous
    (no transposes materialize), which is what the conv stack's hot path
    wants.  Used internally by the glyph encoder.
    """
    _check_same_dtype(x, weight, bias)
    cout, cin, kh, kw = weight.shape
    xd = x.data
    ho = xd.shape[2] + 2 * padding - kh + 1
    wo = xd.shape[3] + 2 * padding - kw + 1
    b = xd.shape[1]
    if xd.shape[0] != cin:
        raise DimensionError(
            f"conv2d_cm channel axis mismatch: input has {xd.shape[0]} channels, "
            f"weight expects {cin}")
    if kh == 1 and kw == 1 and padding == 0:
        patmat = xd.reshape(cin, -1)
    else:
        patmat = _patch_matrix_cm(xd, kh, kw, padding)
    res = (weight.data.reshape(cout, -1) @ patmat).reshape(cout, b, ho, wo)
    res += bias.data[:, None, None, None]
    out = Tensor(res)

    def backward():
        g = out.grad
        if bias.requires_grad:
            bias._ensure_grad()[...] += g.sum(axis=(1, 2, 3))
        if weight.requires_grad:
            gw = g.reshape(cout, -1) @ patmat.T
            weight._ensure_grad()[...] += gw.reshape(cout, cin, kh, kw)
        if x.requires_grad:
            w_flip = np.ascontiguousarray(
                weight.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
            gpat = _patch_matrix_cm(g, kh, kw, kh - 1 - padding) \
                if not (kh == 1 and kw == 1 and padding == 0) else g.reshape(cout, -1)
            gx = (w_flip.reshape(cin, -1) @ gpat).reshape(cin, b, *x.shape[2:])
            x._ensure_grad()[...] += gx

    return _record(out, (x, weight, bias), backward)


def max_pool_2x2(x: Tensor) -> Tensor:
    """2x2 max pooling; ties route the gradient to the first element in
    row-major window order."""
    xd = x.data
    h, w = xd.shape[-2], xd.shape[-1]
    if h % 2 or w % 2:
        raise DimensionError(f"max_pool_2x2 requires even spatial dims, got ({h}, {w})")
    lead = xd.shape[:-2]
    win = xd.reshape(lead + (h // 2, 2, w // 2, 2))
    win = np.moveaxis(win, -3, -2).reshape(lead + (h // 2, w // 2, 4))
    idx = win.argmax(axis=-1)
    if _ACTIVE_ROUTING is not None:
        idx = _ACTIVE_ROUTING.record(idx)
    out = Tensor(np.take_along_axis(win, idx[..., None], axis=-1)[..., 0])

    def backward():
        if not x.requires_grad:
            return
        gwin = np.zeros_like(win)
        np.put_along_axis(gwin, idx[..., None], out.grad[..., None], axis=-1)
        gw4 = gwin.reshape(lead + (h // 2, w // 2, 2, 2))
        gw4 = np.moveaxis(gw4, -2, -3).reshape(xd.shape)
        x._ensure_grad()[...] += gw4

    return _record(out, (x,), backward)


# ---------------------------------------------------------------------------
# normalization, embedding, softmax, loss
# ---------------------------------------------------------------------------

LAYER_NORM_EPS = 1e-5


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    _check_same_dtype(x, gain, shift)
    d = x.shape[-1]
    if gain.shape != (d,) or shift.shape != (d,):
        raise DimensionError(f"layer_norm affine parameters must have shape ({d},)")
    eps = x.data.dtype.type(LAYER_NORM_EPS)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + shift.data)

    def backward():
        g = out.grad
        if shift.requires_grad:
            shift._ensure_grad()[...] += g.reshape(-1, d).sum(axis=0)
        if gain.requires_grad:
            gain._ensure_grad()[...] += (g * xhat).reshape(-1, d).sum(axis=0)
        if x.requires_grad:
            gx_hat = g * gain.data
            m1 = gx_hat.mean(axis=-1, keepdims=True)
            m2 = (gx_hat * xhat).mean(axis=-1, keepdims=True)
            x._ensure_grad()[...] += inv * (gx_hat - m1 - xhat * m2)

    return _record(out, (x, gain, shift), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather from an embedding table; ids is an integer array."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"embedding id out of range [0, {table.shape[0]}): min={ids.min()}, max={ids.max()}")
    out = Tensor(table.data[ids])

    def backward():
        if table.requires_grad:
            g = out.grad.reshape(-1, table.shape[1])
            np.add.at(table._ensure_grad(), ids.reshape(-1), g)

    return _record(out, (table,), backward)


def _softmax_forward(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Row-stochastic softmax over the last axis, max-subtraction stabilized."""
    out = Tensor(_softmax_forward(x.data))

    def backward():
        if x.requires_grad:
            y = out.data
            gy = out.grad * y
            x._ensure_grad()[...] += gy - y * gy.sum(axis=-1, keepdims=True)

    return _record(out, (x,), backward)


def causal_softmax(scores: Tensor) -> Tensor:
    """Softmax over the last axis of (..., n, n) attention scores where entry
    (i, j) with j > i is masked out; masked probabilities are exactly zero, so
    row i of any downstream value mix is bitwise independent of masked inputs.
    """
    n = scores.shape[-1]
    if scores.shape[-2] != n:
        raise DimensionError(f"causal_softmax expects square trailing axes, got {scores.shape}")
    masked = np.where(np.tril(np.ones((n, n), dtype=bool)), scores.data, -np.inf)
    out = Tensor(_softmax_forward(masked))

    def backward():
        if scores.requires_grad:
            y = out.data
            gy = out.grad * y
            scores._ensure_grad()[...] += gy - y * gy.sum(axis=-1, keepdims=True)

    return _record(out, (scores,), backward)


def cross_entropy(logits: Tensor, targets: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of `targets` under row softmax of `logits`.

    `logits` is (n, V) or (B, n, V); targets are flattened to match and must
    each lie in [0, V).
    """
    v = logits.shape[-1]
    flat = logits.data.reshape(-1, v)
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if t.shape[0] != flat.shape[0]:
        raise DimensionError(
            f"cross_entropy got {t.shape[0]} targets for {flat.shape[0]} positions")
    if t.size and (t.min() < 0 or t.max() >= v):
        raise IndexError(f"target out of range [0, {v}): min={t.min()}, max={t.max()}")
    n = flat.shape[0]
    m = flat.max(axis=-1, keepdims=True)
    z = flat - m
    lse = np.log(np.exp(z).sum(axis=-1)) + m[:, 0]
    losses = lse - flat[np.arange(n), t]
    out = Tensor(np.asarray(losses.mean(), dtype=logits.data.dtype))

    def backward():
        if logits.requires_grad:
            p = _softmax_forward(flat)
            p[np.arange(n), t] -= 1.0
            p *= out.grad / n
            logits._ensure_grad()[...] += p.reshape(logits.shape)

    return _record(out, (logits,), backward)
