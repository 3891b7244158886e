"""Dense float64 kernels with hand-written backward passes.

Every kernel acts on the last axis and broadcasts over any leading axes, so a
batch of ``(subjects, ROIs, D)`` tokens goes through one call.  Backward
functions take the upstream gradient plus whatever forward inputs they need
and return gradients in argument order.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import ndtr

from deci.errors import ConfigError, DimensionError

LN_EPS = 1e-5
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _leading_sum(g: np.ndarray, ndim: int) -> np.ndarray:
    """Sum ``g`` over all but its last ``ndim`` axes."""
    return g.reshape((-1,) + g.shape[g.ndim - ndim:]).sum(axis=0)


# -- affine -----------------------------------------------------------------

def affine(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``x @ W + b`` over the last axis of ``x``."""
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise DimensionError(f"affine: x has trailing dim {x.shape[-1:]} but W has shape {W.shape}")
    if b.shape != (W.shape[1],):
        raise DimensionError(f"affine: W has shape {W.shape} but b has shape {b.shape}")
    return x @ W + b


def affine_backward(g: np.ndarray, x: np.ndarray, W: np.ndarray):
    gx = g @ W.T
    gW = x.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    gb = _leading_sum(g, 1)
    return gx, gW, gb


# -- causal (front-padded) convolution --------------------------------------

def _check_kernel(D: int, K: int) -> None:
    if K < 1 or K > D:
        raise ConfigError(f"conv1d: kernel size K={K} must satisfy 1 <= K <= D={D}")


def conv1d_front_padded(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Stride-1 cross-correlation of ``x`` (K-1 leading zeros) with ``w``.

    ``out[t] = sum_k xpad[t + k] * w[k]``; the last tap ``w[K-1]`` sees the
    current sample, earlier taps see the past.
    """
    D, K = x.shape[-1], w.shape[0]
    _check_kernel(D, K)
    pad = [(0, 0)] * (x.ndim - 1) + [(K - 1, 0)]
    windows = sliding_window_view(np.pad(x, pad), K, axis=-1)
    return windows @ w


def conv1d_front_padded_backward(g: np.ndarray, x: np.ndarray, w: np.ndarray):
    D, K = x.shape[-1], w.shape[0]
    _check_kernel(D, K)
    lead = [(0, 0)] * (x.ndim - 1)
    x_windows = sliding_window_view(np.pad(x, lead + [(K - 1, 0)]), K, axis=-1)
    gw = x_windows.reshape(-1, K).T @ g.reshape(-1)
    # x[s] feeds out[s + K-1-k] through tap k.
    g_windows = sliding_window_view(np.pad(g, lead + [(0, K - 1)]), K, axis=-1)
    gx = g_windows @ w[::-1]
    return gx, gw


# -- layer norm ---------------------------------------------------------------

def _ln_stats(x: np.ndarray, eps: float):
    if x.shape[-1] < 2:
        raise ConfigError(f"layer_norm needs at least 2 features, got {x.shape[-1]}")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    return xc * inv_std, inv_std


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    if gamma.shape != x.shape[-1:] or beta.shape != x.shape[-1:]:
        raise DimensionError(
            f"layer_norm: x has trailing dim {x.shape[-1:]}, gamma {gamma.shape}, beta {beta.shape}"
        )
    xhat, _ = _ln_stats(x, eps)
    return gamma * xhat + beta


def layer_norm_backward(g: np.ndarray, x: np.ndarray, gamma: np.ndarray, eps: float = LN_EPS):
    xhat, inv_std = _ln_stats(x, eps)
    dxhat = g * gamma
    gx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    ggamma = _leading_sum(g * xhat, 1)
    gbeta = _leading_sum(g, 1)
    return gx, ggamma, gbeta


# -- pointwise nonlinearities -------------------------------------------------

def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, ``x * Phi(x)``."""
    return x * ndtr(x)


def gelu_backward(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    return g * (ndtr(x) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x))


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    # exp of a non-positive argument only, so neither branch overflows
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid_backward(g: np.ndarray, out: np.ndarray) -> np.ndarray:
    return g * out * (1.0 - out)


# -- dropout ------------------------------------------------------------------

def dropout(x: np.ndarray, p: float, train: bool, rng: np.random.Generator | None = None):
    """Inverted dropout.  Returns ``(out, mask)``; ``mask`` is None in eval mode.

    In eval mode (or with ``p == 0``) ``out`` is ``x`` itself.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1), got {p}")
    if not train or p == 0.0:
        return x, None
    if rng is None:
        raise ConfigError("dropout in train mode needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(g: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return g if mask is None else g * mask


# -- loss ---------------------------------------------------------------------

def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Per-row loss ``-log softmax(logits)[label]`` and its gradient wrt logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_p = shifted - log_z
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
    loss = -(log_p * onehot).sum(axis=-1)
    return loss, np.exp(log_p) - onehot
