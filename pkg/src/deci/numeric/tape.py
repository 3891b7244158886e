"""A minimal reverse-mode tape over the kernels in :mod:`deci.numeric.kernels`.

Operations take an optional ``tape``.  With ``tape=None`` they only compute
values, which is what inference uses; with a tape they also push a closure
that, when replayed in reverse, accumulates gradients into their inputs.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from deci.numeric import kernels as K


class Var:
    __slots__ = ("value", "grad", "name")

    def __init__(self, value: np.ndarray, name: str | None = None):
        self.value = value
        self.grad: np.ndarray | None = None
        self.name = name

    def accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.value.shape:
            # broadcast leftovers, e.g. a bias added to a batch
            g = g.reshape((-1,) + self.value.shape).sum(axis=0)
        self.grad = g.copy() if self.grad is None else self.grad + g

    def __repr__(self) -> str:
        return f"Var({self.name or ''}, shape={self.value.shape})"


class GradTape:
    """Ordered record of backward closures for one forward pass."""

    def __init__(self) -> None:
        self._ops: list[Callable[[], None]] = []
        self.params: dict[str, Var] = {}

    def __len__(self) -> int:
        return len(self._ops)

    def watch(self, name: str, value: np.ndarray) -> Var:
        var = Var(value, name)
        self.params[name] = var
        return var

    def push(self, fn: Callable[[], None]) -> None:
        self._ops.append(fn)

    def backward(self, out, seed=1.0) -> dict[str, np.ndarray]:
        """Replay the tape from ``out``; returns a gradient for every watched parameter.

        ``out`` may be a list of outputs with a matching list of seeds.
        Parameters that the forward pass never touched get exact zeros.
        """
        outs, seeds = (out, seed) if isinstance(out, (list, tuple)) else ([out], [seed])
        for o, s in zip(outs, seeds):
            o.accumulate(np.broadcast_to(np.asarray(s, dtype=np.float64), o.value.shape))
        for fn in reversed(self._ops):
            fn()
        return {
            name: np.zeros_like(v.value) if v.grad is None else v.grad
            for name, v in self.params.items()
        }


def _lift(x) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


def _live(v: Var) -> bool:
    return v.grad is not None


def affine(x, W: Var, b: Var, tape: GradTape | None = None) -> Var:
    x = _lift(x)
    out = Var(K.affine(x.value, W.value, b.value))
    if tape is not None:
        def back():
            if _live(out):
                gx, gW, gb = K.affine_backward(out.grad, x.value, W.value)
                x.accumulate(gx)
                W.accumulate(gW)
                b.accumulate(gb)
        tape.push(back)
    return out


def conv1d(x, w: Var, tape: GradTape | None = None) -> Var:
    x = _lift(x)
    out = Var(K.conv1d_front_padded(x.value, w.value))
    if tape is not None:
        def back():
            if _live(out):
                gx, gw = K.conv1d_front_padded_backward(out.grad, x.value, w.value)
                x.accumulate(gx)
                w.accumulate(gw)
        tape.push(back)
    return out


def layer_norm(x, gamma: Var, beta: Var, tape: GradTape | None = None) -> Var:
    x = _lift(x)
    out = Var(K.layer_norm(x.value, gamma.value, beta.value))
    if tape is not None:
        def back():
            if _live(out):
                gx, gg, gb = K.layer_norm_backward(out.grad, x.value, gamma.value)
                x.accumulate(gx)
                gamma.accumulate(gg)
                beta.accumulate(gb)
        tape.push(back)
    return out


def gelu(x: Var, tape: GradTape | None = None) -> Var:
    out = Var(K.gelu(x.value))
    if tape is not None:
        def back():
            if _live(out):
                x.accumulate(K.gelu_backward(out.grad, x.value))
        tape.push(back)
    return out


def sigmoid(x: Var, tape: GradTape | None = None) -> Var:
    out = Var(K.sigmoid(x.value))
    if tape is not None:
        def back():
            if _live(out):
                x.accumulate(K.sigmoid_backward(out.grad, out.value))
        tape.push(back)
    return out


def dropout(x: Var, p: float, train: bool, rng=None, tape: GradTape | None = None) -> Var:
    value, mask = K.dropout(x.value, p, train, rng)
    if mask is None:
        return x
    out = Var(value)
    if tape is not None:
        def back():
            if _live(out):
                x.accumulate(K.dropout_backward(out.grad, mask))
        tape.push(back)
    return out


def add(a: Var, b: Var, tape: GradTape | None = None) -> Var:
    out = Var(a.value + b.value)
    if tape is not None:
        def back():
            if _live(out):
                a.accumulate(out.grad)
                b.accumulate(out.grad)
        tape.push(back)
    return out


def sub(a: Var, b: Var, tape: GradTape | None = None) -> Var:
    out = Var(a.value - b.value)
    if tape is not None:
        def back():
            if _live(out):
                a.accumulate(out.grad)
                b.accumulate(-out.grad)
        tape.push(back)
    return out


def mul(a: Var, b: Var, tape: GradTape | None = None) -> Var:
    out = Var(a.value * b.value)
    if tape is not None:
        def back():
            if _live(out):
                a.accumulate(out.grad * b.value)
                b.accumulate(out.grad * a.value)
        tape.push(back)
    return out


def scale(a: Var, c: float, tape: GradTape | None = None) -> Var:
    out = Var(a.value * c)
    if tape is not None:
        def back():
            if _live(out):
                a.accumulate(out.grad * c)
        tape.push(back)
    return out


def mean_stack(xs: list[Var], axis: int, tape: GradTape | None = None) -> Var:
    """Mean over the list and over ``axis`` of each member, summed in list order."""
    total = xs[0].value.sum(axis=axis)
    for v in xs[1:]:
        total = total + v.value.sum(axis=axis)
    count = len(xs) * xs[0].value.shape[axis]
    out = Var(total / count)
    if tape is not None:
        def back():
            if _live(out):
                g = np.expand_dims(out.grad / count, axis)
                for v in xs:
                    v.accumulate(np.broadcast_to(g, v.value.shape))
        tape.push(back)
    return out
