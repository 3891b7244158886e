from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from deci.errors import NumericError

LossFn = Callable[[], tuple[float, Mapping[str, np.ndarray]]]


def grad_check(
    loss_fn: LossFn,
    params: Mapping[str, np.ndarray],
    step: float = 1e-5,
    tol: float | None = None,
) -> float:
    """Largest relative error between tape gradients and central differences.

    ``loss_fn()`` must read ``params`` (which are perturbed in place and
    restored) and return ``(loss, grads)``.  The relative error of one
    scalar is ``|a - n| / max(|a|, |n|, 1e-8)``.  With ``tol`` set, exceeding
    it raises :class:`NumericError` naming the worst entry.
    """
    loss0, grads = loss_fn()
    if not np.isfinite(loss0):
        raise NumericError(f"grad_check: loss is not finite ({loss0})")
    grads = {k: np.array(v, copy=True) for k, v in grads.items()}

    worst, where = 0.0, None
    for name, theta in params.items():
        flat = theta.reshape(-1)
        analytic = grads[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up, _ = loss_fn()
            flat[j] = orig - step
            down, _ = loss_fn()
            flat[j] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"grad_check: non-finite loss perturbing {name}[{j}]")
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(analytic[j]), abs(numeric), 1e-8)
            err = abs(analytic[j] - numeric) / denom
            if err > worst:
                worst, where = err, (name, j, analytic[j], numeric)
    if tol is not None and worst > tol:
        name, j, a, n = where
        raise NumericError(
            f"grad_check: {name}[{j}] analytic={a:.6e} numeric={n:.6e} rel err {worst:.3e} > {tol:g}"
        )
    return float(worst)
