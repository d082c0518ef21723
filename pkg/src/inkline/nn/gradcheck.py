"""Finite-difference gradient verification.

The oracle side only ever calls the forward pass, so it stays independent of
the tape replay it is checking.  Relative error for a parameter tensor is

    max_i |g_analytic_i - g_fd_i| / max(floor, |g_analytic_i|, |g_fd_i|)

with ``floor = 1e-3`` so that coordinates whose true gradient is essentially
zero cannot fail on round-off noise.  Checks should run at float64 with the
default step 1e-5.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import GradTape, RoutingTrace, Tensor

DENOM_FLOOR = 1e-3


def finite_difference_gradient(forward: Callable[[], float], t: Tensor,
                               step: float = 1e-5,
                               coords: Sequence[int] | None = None) -> np.ndarray:
    """Central-difference gradient of `forward()` w.r.t. scalars of `t`.

    With `coords` (flat indices) only those coordinates are probed and the
    rest of the returned array is NaN; callers compare the probed subset.
    """
    flat = t.data.reshape(-1)
    if coords is None:
        coords = range(flat.size)
        grad = np.zeros_like(flat)
    else:
        grad = np.full_like(flat, np.nan)
    for i in coords:
        orig = flat[i]
        flat[i] = orig + step
        up = forward()
        flat[i] = orig - step
        down = forward()
        flat[i] = orig
        grad[i] = (up - down) / (2.0 * step)
    return grad.reshape(t.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(DENOM_FLOOR, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(build_loss: Callable[[], Tensor],
                    wrt: Sequence[Tensor],
                    step: float = 1e-5,
                    freeze_routing: bool = False,
                    sample: int | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Compare tape gradients of `build_loss()` against central differences.

    `build_loss` must be a deterministic closure over the tensors in `wrt`
    (reading their ``data`` in place) that returns a scalar loss tensor.
    Returns the worst relative error over all checked tensors.

    With ``freeze_routing`` the relu masks and pool argmax decisions of the
    base-point forward are replayed during the difference evaluations.  Deep
    compositions have thousands of piecewise routing decisions, so at any
    usable step some finite difference would otherwise straddle a kink;
    freezing restricts the probe to the linear region whose derivative the
    tape actually computed.

    ``sample`` limits the probe to that many randomly drawn coordinates per
    tensor, which keeps full-model checks affordable.
    """
    for t in wrt:
        t.zero_grad()
    if not freeze_routing:
        with GradTape() as tape:
            loss = build_loss()
        tape.backward(loss)
        analytic = [np.array(t.grad, copy=True) for t in wrt]

        def forward() -> float:
            return float(build_loss().data)

        return _sweep(forward, wrt, analytic, step, sample, rng)

    with RoutingTrace() as trace:
        with GradTape() as tape:
            loss = build_loss()
        tape.backward(loss)
        analytic = [np.array(t.grad, copy=True) for t in wrt]
        trace.freeze()

        def forward() -> float:
            trace.rewind()
            return float(build_loss().data)

        return _sweep(forward, wrt, analytic, step, sample, rng)


def _sweep(forward: Callable[[], float], wrt: Sequence[Tensor],
           analytic: Sequence[np.ndarray], step: float,
           sample: int | None = None,
           rng: np.random.Generator | None = None) -> float:
    worst = 0.0
    for t, ga in zip(wrt, analytic):
        coords = None
        if sample is not None and t.data.size > sample:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(t.data.size, size=sample, replace=False).tolist()
        gf = finite_difference_gradient(forward, t, step=step, coords=coords)
        if coords is None:
            worst = max(worst, relative_error(ga, gf))
        else:
            flat_a = ga.reshape(-1)[coords]
            flat_f = gf.reshape(-1)[coords]
            worst = max(worst, relative_error(flat_a, flat_f))
    return worst
