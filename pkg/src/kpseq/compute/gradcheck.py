"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParameterStore
from .tensor import Tape, Tensor, backward

LossFn = Callable[[Tape, dict], Tensor]

WIDE = np.longdouble


def analytic_gradients(loss_fn: LossFn, params: ParameterStore) -> tuple[float, dict[str, np.ndarray]]:
    tape = Tape()
    leaves = tape.watch(params)
    loss = loss_fn(tape, leaves)
    grads = backward(tape, loss, leaves)
    return loss.item(), grads


def _evaluate(loss_fn: LossFn, arrays: dict[str, np.ndarray], dtype):
    tape = Tape(grad=False, dtype=dtype)
    leaves = {name: Tensor(arr, tape, name=name) for name, arr in arrays.items()}
    return loss_fn(tape, leaves).data.reshape(-1)[0]


def evaluate(loss_fn: LossFn, params: ParameterStore, dtype=np.float64) -> float:
    arrays = {name: np.asarray(arr, dtype=dtype) for name, arr in params.items()}
    return float(_evaluate(loss_fn, arrays, dtype))


def _central(loss_fn, arrays, name, j, h, dtype) -> float:
    flat = arrays[name].reshape(-1)
    orig = flat[j]
    flat[j] = orig + h
    fp = _evaluate(loss_fn, arrays, dtype)
    flat[j] = orig - h
    fm = _evaluate(loss_fn, arrays, dtype)
    flat[j] = orig
    return float((fp - fm) / ((orig + h) - (orig - h)))


def _rel(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(
    loss_fn: LossFn,
    params: ParameterStore,
    eps: float = 1e-5,
    names=None,
    dtype=None,
    recheck_above: float = 1e-6,
) -> float:
    """Worst relative error between backward() and central differences.

    ``loss_fn(tape, leaves)`` must build a scalar loss from the leaf tensors.
    Every coordinate of every parameter (or of ``names``) is perturbed and
    compared with denominator max(|analytic|, |numeric|, 1e-8).

    With ``dtype=None`` differences are taken in float64 and any coordinate
    whose error exceeds ``recheck_above`` is re-measured in extended precision,
    whose result replaces the float64 one.  Float64 cancellation noise is about
    1e-11 absolute at eps=1e-5, which only matters for gradients near the 1e-8
    floor.  Passing a dtype forces every difference into that dtype.
    """
    if not eps > 0:
        raise ValueError(f"finite-difference step must be positive, got {eps}")
    _, grads = analytic_gradients(loss_fn, params)
    first = np.dtype(np.float64 if dtype is None else dtype).type
    arrays = {name: np.array(arr, dtype=first) for name, arr in params.items()}
    wide = None
    worst = 0.0
    for name in names or params.names():
        ga = grads[name].reshape(-1)
        for j in range(ga.size):
            a = float(ga[j])
            err = _rel(a, _central(loss_fn, arrays, name, j, first(eps), first))
            if dtype is None and err > recheck_above:
                if wide is None:
                    wide = {k: np.array(v, dtype=WIDE) for k, v in params.items()}
                err = _rel(a, _central(loss_fn, wide, name, j, WIDE(eps), WIDE))
            worst = max(worst, err)
    return worst
