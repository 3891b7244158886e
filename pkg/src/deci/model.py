"""The DeCI network.

Each ROI series is embedded into one D-dim token by a projection shared
across ROIs.  Tokens then go through N blocks, each of which peels off a
drift component (causal convolution) and a cycle component (gated SE-style
branch) and emits two logit vectors.  The prediction is the mean of every
block's logits over every ROI.  ROIs never interact before that mean.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from deci.errors import ConfigError, DimensionError, LoadError
from deci.numeric import tape as tp
from deci.numeric.kernels import softmax_cross_entropy
from deci.numeric.tape import GradTape, Var

BRANCHES = ("both", "cycle", "drift", "none")
CYCLE_KEYS = ("W1", "b1", "W2", "b2", "Wg", "bg", "W3", "b3", "W4", "b4")


@dataclass(frozen=True)
class ModelConfig:
    series_len: int
    n_channels: int
    n_classes: int = 2
    n_blocks: int = 1
    model_dim: int = 64
    kernel_size: int | None = None  # None means K = model_dim
    dropout: float = 0.0
    use_cycle: bool = True
    use_drift: bool = True

    def __post_init__(self):
        if self.kernel_size is None:
            object.__setattr__(self, "kernel_size", self.model_dim)
        checks = [
            (self.n_blocks >= 1, "n_blocks must be >= 1"),
            (self.model_dim >= 2, "model_dim must be >= 2"),
            (1 <= self.kernel_size <= self.model_dim, "kernel_size must satisfy 1 <= K <= model_dim"),
            (self.n_classes >= 2, "n_classes must be >= 2"),
            (self.series_len >= 2, "series_len must be >= 2"),
            (self.n_channels >= 1, "n_channels must be >= 1"),
            (0.0 <= self.dropout < 1.0, "dropout must lie in [0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(f"{msg} (got {self})")

    @property
    def branches(self) -> str:
        return {
            (True, True): "both",
            (True, False): "cycle",
            (False, True): "drift",
            (False, False): "none",
        }[(self.use_cycle, self.use_drift)]

    def with_branches(self, branches: str) -> "ModelConfig":
        if branches not in BRANCHES:
            raise ConfigError(f"branches must be one of {BRANCHES}, got {branches!r}")
        return self.replace(
            use_cycle=branches in ("both", "cycle"), use_drift=branches in ("both", "drift")
        )

    def replace(self, **changes) -> "ModelConfig":
        d = asdict(self)
        if "model_dim" in changes and "kernel_size" not in changes and self.kernel_size == self.model_dim:
            d["kernel_size"] = None
        d.update(changes)
        return ModelConfig(**d)


def param_count(cfg: ModelConfig) -> int:
    T, D, K, V, N = cfg.series_len, cfg.model_dim, cfg.kernel_size, cfg.n_classes, cfg.n_blocks
    head = D * V + V
    cycle = 5 * (D * D + D) + 4 * D
    return T * D + D + N * (K + cycle + 3 * head)


def _param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    T, D, K, V = cfg.series_len, cfg.model_dim, cfg.kernel_size, cfg.n_classes
    shapes = {"embed.W": (T, D), "embed.b": (D,)}
    for n in range(cfg.n_blocks):
        p = f"block{n}."
        shapes[p + "drift.w"] = (K,)
        shapes[p + "drift_head.W"] = (D, V)
        shapes[p + "drift_head.b"] = (V,)
        for key in CYCLE_KEYS:
            shapes[p + "cycle." + key] = (D, D) if key.startswith("W") else (D,)
        for ln in ("ln1", "ln2"):
            shapes[p + f"cycle.{ln}.gamma"] = (D,)
            shapes[p + f"cycle.{ln}.beta"] = (D,)
        shapes[p + "cycle_head.W"] = (D, V)
        shapes[p + "cycle_head.b"] = (V,)
        # head used only by the no-decomposition ablation
        shapes[p + "plain_head.W"] = (D, V)
        shapes[p + "plain_head.b"] = (V,)
    return shapes


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})


def init_params(cfg: ModelConfig, rng: np.random.Generator | int = 0) -> ModelParams:
    """Weights ~ U(-a, a) with a = sqrt(1/fan_in); biases 0; LayerNorm gamma 1, beta 0."""
    rng = np.random.default_rng(rng)
    tensors = {}
    for name, shape in _param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[1]
        if leaf == "gamma":
            tensors[name] = np.ones(shape)
        elif leaf == "beta" or leaf.startswith("b"):
            tensors[name] = np.zeros(shape)
        else:
            a = np.sqrt(1.0 / shape[0])
            tensors[name] = rng.uniform(-a, a, size=shape)
    return ModelParams(cfg, tensors)


def is_decayed(name: str) -> bool:
    """Whether weight decay applies: weight matrices and the drift kernel only."""
    leaf = name.rsplit(".", 1)[1]
    return leaf not in ("gamma", "beta") and not leaf.startswith("b")


@dataclass
class DecompositionTrace:
    """Per-block, per-ROI decomposition of one forward pass.

    Shapes for a single subject (a batched forward adds a leading subject axis):
    ``embedding`` (C, D); ``residual`` (N+1, C, D) where ``residual[n]`` is the
    input of block n and ``residual[N]`` the final leftover; ``drift`` and
    ``cycle`` (N, C, D); ``drift_logits``, ``cycle_logits``, ``block_logits``
    (N, C, V).  Disabled branches are stored as zeros.
    """

    embedding: np.ndarray
    residual: np.ndarray
    drift: np.ndarray
    cycle: np.ndarray
    drift_logits: np.ndarray
    cycle_logits: np.ndarray
    block_logits: np.ndarray
    branches: str = "both"

    def reconstruction_error(self) -> float:
        """Max |R^n - T^n - S^n - R^{n+1}| over all blocks and ROIs."""
        r = self.residual
        lhs = (r[..., :-1, :, :] - self.drift) - self.cycle
        return float(np.max(np.abs(lhs - r[..., 1:, :, :])))

    def telescoping_error(self) -> float:
        """Max |E - sum_n (T^n + S^n) - R^{N+1}|."""
        parts = (self.drift + self.cycle).sum(axis=-3)
        return float(np.max(np.abs(self.embedding - parts - self.residual[..., -1, :, :])))


def fuse_logits(block_logits: np.ndarray) -> np.ndarray:
    """Mean of block logits over blocks and ROIs, summed block by block."""
    n_blocks, n_rois = block_logits.shape[-3], block_logits.shape[-2]
    total = block_logits[..., 0, :, :].sum(axis=-2)
    for n in range(1, n_blocks):
        total = total + block_logits[..., n, :, :].sum(axis=-2)
    return total / (n_blocks * n_rois)


def _cycle_branch(L: Var, v: dict, p: str, drop: float, train: bool, rng, tape) -> tuple[Var, Var]:
    c = p + "cycle."
    a = tp.affine(L, v[c + "W1"], v[c + "b1"], tape)
    a = tp.gelu(tp.dropout(a, drop, train, rng, tape), tape)
    G = tp.sigmoid(tp.affine(a, v[c + "W2"], v[c + "b2"], tape), tape)
    H = tp.affine(tp.mul(L, G, tape), v[c + "Wg"], v[c + "bg"], tape)
    Q1 = tp.layer_norm(tp.add(H, L, tape), v[c + "ln1.gamma"], v[c + "ln1.beta"], tape)
    q = tp.affine(Q1, v[c + "W3"], v[c + "b3"], tape)
    q = tp.gelu(tp.dropout(q, drop, train, rng, tape), tape)
    Q2 = tp.affine(q, v[c + "W4"], v[c + "b4"], tape)
    S = tp.layer_norm(tp.add(Q2, Q1, tape), v[c + "ln2.gamma"], v[c + "ln2.beta"], tape)
    PS = tp.affine(S, v[p + "cycle_head.W"], v[p + "cycle_head.b"], tape)
    return S, PS


def _drift_branch(R: Var, v: dict, p: str, drop: float, train: bool, rng, tape) -> tuple[Var, Var]:
    Td = tp.dropout(tp.conv1d(R, v[p + "drift.w"], tape), drop, train, rng, tape)
    PT = tp.affine(Td, v[p + "drift_head.W"], v[p + "drift_head.b"], tape)
    return Td, PT


def _block(R: Var, v: dict, n: int, cfg: ModelConfig, train: bool, rng, tape):
    p = f"block{n}."
    drop = cfg.dropout
    Td = PT = S = PS = None
    L = R
    if cfg.use_drift:
        Td, PT = _drift_branch(R, v, p, drop, train, rng, tape)
        L = tp.sub(R, Td, tape)
    R_next = L
    if cfg.use_cycle:
        S, PS = _cycle_branch(L, v, p, drop, train, rng, tape)
        R_next = tp.sub(L, S, tape)
    if PT is not None and PS is not None:
        P = tp.scale(tp.add(PT, PS, tape), 0.5, tape)
    elif PT is not None:
        P = PT
    elif PS is not None:
        P = PS
    else:
        P = tp.affine(R, v[p + "plain_head.W"], v[p + "plain_head.b"], tape)
    return P, R_next, (Td, S, PT, PS)


def _as_batch(X: np.ndarray, cfg: ModelConfig) -> tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (cfg.series_len, cfg.n_channels):
        raise DimensionError(
            f"input of shape {X.shape[-2:] if X.ndim >= 2 else X.shape} does not match "
            f"config (T={cfg.series_len}, C={cfg.n_channels})"
        )
    return X, single


def _run(X, params: ModelParams, train: bool, rng, tape: GradTape | None, keep_trace: bool):
    cfg = params.config
    if tape is not None:
        v = {k: tape.watch(k, t) for k, t in params.tensors.items()}
    else:
        v = {k: Var(t, k) for k, t in params.tensors.items()}
    # (B, T, C) -> (B, C, T): one row per ROI, embedded by the shared projection
    E = tp.affine(np.ascontiguousarray(X.transpose(0, 2, 1)), v["embed.W"], v["embed.b"], tape)
    R = E
    block_P = []
    record = []
    for n in range(cfg.n_blocks):
        P, R_next, parts = _block(R, v, n, cfg, train, rng, tape)
        block_P.append(P)
        if keep_trace:
            record.append((R, parts, P))
        R = R_next
    y_hat = tp.mean_stack(block_P, axis=1, tape=tape)

    trace = None
    if keep_trace:
        trace = _build_trace(E, R, record, cfg)
    return y_hat, block_P, trace


def _build_trace(E: Var, R_last: Var, record, cfg: ModelConfig) -> DecompositionTrace:
    zeros_d = np.zeros_like(E.value)
    zeros_v = np.zeros(E.value.shape[:-1] + (cfg.n_classes,))

    def val(x, zero):
        return zero if x is None else x.value

    stack = lambda xs: np.stack(xs, axis=-3)
    return DecompositionTrace(
        embedding=E.value,
        residual=stack([r.value for r, _, _ in record] + [R_last.value]),
        drift=stack([val(parts[0], zeros_d) for _, parts, _ in record]),
        cycle=stack([val(parts[1], zeros_d) for _, parts, _ in record]),
        drift_logits=stack([val(parts[2], zeros_v) for _, parts, _ in record]),
        cycle_logits=stack([val(parts[3], zeros_v) for _, parts, _ in record]),
        block_logits=stack([P.value for _, _, P in record]),
        branches=cfg.branches,
    )


def _squeeze_trace(trace: DecompositionTrace) -> DecompositionTrace:
    kw = {k: getattr(trace, k)[0] for k in (
        "embedding", "residual", "drift", "cycle", "drift_logits", "cycle_logits", "block_logits"
    )}
    return DecompositionTrace(branches=trace.branches, **kw)


def forward(
    X: np.ndarray,
    params: ModelParams,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    keep_trace: bool = True,
) -> tuple[np.ndarray, DecompositionTrace | None]:
    """Logits for one subject ``(T, C)`` or a batch ``(B, T, C)``, plus the trace."""
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    Xb, single = _as_batch(X, params.config)
    y_hat, _, trace = _run(Xb, params, mode == "train", rng, None, keep_trace)
    if single:
        return y_hat.value[0], (_squeeze_trace(trace) if trace is not None else None)
    return y_hat.value, trace


def decompose(X: np.ndarray, params: ModelParams) -> DecompositionTrace:
    """Eval-mode forward returning the full decomposition trace."""
    return forward(X, params, mode="eval", keep_trace=True)[1]


def predict_logits(X: np.ndarray, params: ModelParams, batch_size: int = 256) -> np.ndarray:
    Xb, _ = _as_batch(X, params.config)
    out = [
        _run(Xb[i:i + batch_size], params, False, None, None, False)[0].value
        for i in range(0, len(Xb), batch_size)
    ]
    return np.concatenate(out, axis=0)


def loss_and_grads(
    params: ModelParams,
    X: np.ndarray,
    labels: np.ndarray,
    train: bool = True,
    rng: np.random.Generator | None = None,
    loss_mode: str = "fused",
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Mean softmax cross-entropy over the batch, with gradients for every parameter.

    ``loss_mode="fused"`` scores the fused prediction; ``"per_logit"`` averages
    the loss of every per-block, per-ROI logit vector instead.
    Returns ``(loss, grads, fused_logits)``.
    """
    Xb, _ = _as_batch(X, params.config)
    labels = np.asarray(labels)
    tape = GradTape()
    y_hat, block_P, _ = _run(Xb, params, train, rng, tape, keep_trace=False)
    B = Xb.shape[0]
    if loss_mode == "fused":
        losses, g = softmax_cross_entropy(y_hat.value, labels)
        grads = tape.backward(y_hat, g / B)
        return float(losses.mean()), grads, y_hat.value
    if loss_mode != "per_logit":
        raise ConfigError(f"loss_mode must be 'fused' or 'per_logit', got {loss_mode!r}")
    C, N = params.config.n_channels, params.config.n_blocks
    total, seeds = 0.0, []
    for P in block_P:
        losses, g = softmax_cross_entropy(P.value, np.broadcast_to(labels[:, None], P.value.shape[:-1]))
        total += losses.sum()
        seeds.append(g / (B * C * N))
    grads = tape.backward(block_P, seeds)
    return float(total / (B * C * N)), grads, y_hat.value


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(params: ModelParams, path: str | Path) -> Path:
    """Write ``manifest.json`` (config + tensor index) and ``tensors.bin`` (little-endian f8)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    with open(path / "tensors.bin", "wb") as fh:
        for name, t in params.tensors.items():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
            entries.append({"name": name, "shape": list(t.shape), "offset": offset})
            offset += t.size * 8
    manifest = {"format": "deci-checkpoint/1", "dtype": "<f8",
                "config": asdict(params.config), "tensors": entries}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_checkpoint(path: str | Path) -> ModelParams:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        blob = (path / "tensors.bin").read_bytes()
    except FileNotFoundError as e:
        raise LoadError(f"checkpoint {path}: {e.strerror}: {e.filename}") from None
    cfg = ModelConfig(**manifest["config"])
    tensors = {}
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=entry["offset"])
        tensors[entry["name"]] = arr.astype(np.float64).reshape(entry["shape"])
    expected = _param_shapes(cfg)
    if {k: tuple(v.shape) for k, v in tensors.items()} != expected:
        raise LoadError(f"checkpoint {path}: tensor inventory does not match its config")
    return ModelParams(cfg, tensors)
