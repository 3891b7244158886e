"""Acceptance criteria for the DeCI package.

Each test records one PASS/FAIL line; conftest prints them at the end of the
session.  Run on its own with ``pytest tests/test_acceptance.py`` or
``python3 tests/test_acceptance.py``.
"""

import contextlib
import json
import sys
import time
from fractions import Fraction as F
from pathlib import Path

import numpy as np
import pytest

from conftest import randomize
from deci.baselines import pearson_fc, shuffle_bold
from deci.cli import main
from deci.data import SynthSpec, mixed_task_spec, synth_generate
from deci.model import ModelConfig, forward, init_params, loss_and_grads
from deci.numeric import grad_check
from deci.numeric import kernels as K
from deci.train import (
    DeciFitter,
    FCLogisticFitter,
    TrainConfig,
    ablation_suite,
    auroc_binary,
    classification_metrics,
    cross_validate,
    model_config_for,
    shuffle_dataset,
)

ROOT = Path(__file__).resolve().parents[1]
BENCH = json.loads((ROOT / "configs" / "benchmark.json").read_text())
SYNTH = json.loads((ROOT / "configs" / "synth_benchmark.json").read_text())

RESULTS: list[str] = []


@contextlib.contextmanager
def criterion(number: int, title: str):
    detail: dict = {}
    try:
        yield detail
    except BaseException as exc:
        RESULTS.append(f"FAIL  [{number:2d}] {title}: {type(exc).__name__}: {str(exc).splitlines()[0][:160]}")
        raise
    RESULTS.append(f"PASS  [{number:2d}] {title}: " + ", ".join(f"{k}={v}" for k, v in detail.items()))


def bench_model_cfg(ds):
    m = BENCH["model"]
    return model_config_for(ds, n_blocks=m["n_blocks"], model_dim=m["model_dim"],
                            kernel_size=m["kernel_size"], dropout=m["dropout"])


def bench_train_cfg():
    return TrainConfig(**BENCH["train"])


def fd(f, x, h=1e-5):
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        up = f()
        flat[j] = orig - h
        down = f()
        flat[j] = orig
        gflat[j] = (up - down) / (2 * h)
    return g


def fd_pointwise(fn, x, h=1e-5):
    return np.array([(fn(np.array(v + h)) - fn(np.array(v - h))) / (2 * h) for v in x])


def rel_err(a, n):
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)))


# -- 1 -----------------------------------------------------------------------------------

def kernel_errors(seed: int) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    errs = {}

    D = int(rng.integers(2, 7))
    x, W, b, proj = rng.standard_normal(D), rng.standard_normal((D, 3)), rng.standard_normal(3), rng.standard_normal(3)
    f = lambda: float(K.affine(x, W, b) @ proj)
    gx, gW, gb = K.affine_backward(proj, x, W)
    errs["affine"] = max(rel_err(gx, fd(f, x)), rel_err(gW, fd(f, W)), rel_err(gb, fd(f, b)))

    k = int(rng.integers(1, D + 1))
    x, w, proj = rng.standard_normal(D), rng.standard_normal(k), rng.standard_normal(D)
    f = lambda: float(K.conv1d_front_padded(x, w) @ proj)
    gx, gw = K.conv1d_front_padded_backward(proj, x, w)
    errs["conv1d"] = max(rel_err(gx, fd(f, x)), rel_err(gw, fd(f, w)))

    x, gamma, beta, proj = (rng.standard_normal(5) for _ in range(4))
    f = lambda: float(K.layer_norm(x, gamma, beta) @ proj)
    gx, gg, gb = K.layer_norm_backward(proj, x, gamma)
    errs["layer_norm"] = max(rel_err(gx, fd(f, x)), rel_err(gg, fd(f, gamma)), rel_err(gb, fd(f, beta)))

    x, proj = 2 * rng.standard_normal(4), rng.standard_normal(4)
    errs["gelu"] = rel_err(K.gelu_backward(proj, x), proj * fd_pointwise(K.gelu, x))
    errs["sigmoid"] = rel_err(K.sigmoid_backward(proj, K.sigmoid(x)), proj * fd_pointwise(K.sigmoid, x))

    _, mask = K.dropout(x, 0.4, True, rng)
    f = lambda: float((x * mask) @ proj)
    errs["dropout"] = rel_err(K.dropout_backward(proj, mask), fd(f, x))

    z, label = 2 * rng.standard_normal(3), int(rng.integers(3))
    f = lambda: float(K.softmax_cross_entropy(z, label)[0])
    errs["softmax_ce"] = rel_err(K.softmax_cross_entropy(z, label)[1], fd(f, z))
    return errs


def test_c01_gradient_fidelity():
    with criterion(1, "gradient fidelity") as d:
        start = time.perf_counter()
        worst: dict[str, float] = {}
        for seed in range(100):
            for name, e in kernel_errors(seed).items():
                worst[name] = max(worst.get(name, 0.0), e)
        cfg = ModelConfig(series_len=8, n_channels=3, n_classes=2, n_blocks=2, model_dim=4, kernel_size=4)
        model_err = 0.0
        for seed in range(10):
            p = init_params(cfg, seed)
            X = np.random.default_rng(100 + seed).standard_normal((4, 8, 3))
            y = np.array([0, 1, 1, 0])
            model_err = max(model_err, grad_check(lambda: loss_and_grads(p, X, y, train=False)[:2], p.tensors))
        elapsed = time.perf_counter() - start
        d.update(model=f"{model_err:.2e}", kernels=f"{max(worst.values()):.2e}", seconds=f"{elapsed:.1f}")
        assert model_err < 1e-4, f"full model relative error {model_err:.3e}"
        bad = {k: v for k, v in worst.items() if v >= 1e-6}
        assert not bad, f"kernels over 1e-6: {bad}"
        assert elapsed < 60, f"took {elapsed:.1f}s"


# -- 2, 3, 4 -------------------------------------------------------------------------------

def random_case(seed: int):
    rng = np.random.default_rng(seed)
    D = int(rng.integers(2, 10))
    cfg = ModelConfig(
        series_len=int(rng.integers(3, 12)), n_channels=int(rng.integers(1, 6)), n_classes=int(rng.integers(2, 5)),
        n_blocks=int(rng.integers(1, 4)), model_dim=D, kernel_size=int(rng.integers(1, D + 1)),
    )
    params = randomize(init_params(cfg, seed), seed, scale=float(rng.uniform(0.1, 1.0)))
    X = rng.standard_normal((cfg.series_len, cfg.n_channels)) * float(rng.uniform(0.5, 5))
    return cfg, params, X


def test_c02_telescoping():
    with criterion(2, "decomposition telescoping") as d:
        worst = 0.0
        for seed in range(100):
            _, params, X = random_case(seed)
            _, tr = forward(X, params)
            rebuilt = tr.drift.sum(axis=0) + tr.cycle.sum(axis=0) + tr.residual[-1]
            worst = max(worst, float(np.max(np.abs(tr.embedding - rebuilt))))
        d["max_abs_err"] = f"{worst:.2e}"
        assert worst <= 1e-10


def test_c03_fusion_identity():
    with criterion(3, "fusion identity") as d:
        worst = 0.0
        for seed in range(100):
            _, params, X = random_case(1000 + seed)
            y, tr = forward(X, params)
            branch = np.concatenate([tr.drift_logits, tr.cycle_logits], axis=0)  # (2N, C, V)
            mean = branch.reshape(-1, branch.shape[-1]).mean(axis=0)
            worst = max(worst, float(np.max(np.abs(y - mean))))
        d["max_abs_err"] = f"{worst:.2e}"
        assert worst <= 1e-12


def test_c04_permutation_invariance():
    with criterion(4, "channel-permutation invariance") as d:
        cfg = ModelConfig(series_len=16, n_channels=8, n_classes=3, n_blocks=2, model_dim=8, kernel_size=5)
        params = randomize(init_params(cfg, 7), 7)
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(50):
            X = rng.standard_normal((16, 8))
            perm = rng.permutation(8)
            worst = max(worst, float(np.max(np.abs(forward(X, params)[0] - forward(X[:, perm], params)[0]))))
        d["max_abs_err"] = f"{worst:.2e}"
        assert worst <= 1e-12


# -- 5, 6 ----------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def benchmark():
    return synth_generate(SynthSpec.from_dict(SYNTH))


@pytest.fixture(scope="module")
def deci_benchmark(benchmark):
    start = time.perf_counter()
    report = cross_validate(benchmark, DeciFitter(bench_model_cfg(benchmark), bench_train_cfg()),
                            k=5, runs=5, seed=0, label="deci")
    return report, time.perf_counter() - start


@pytest.mark.slow
def test_c05_shuffled_bold_control(benchmark, deci_benchmark):
    with criterion(5, "shuffled-BOLD control") as d:
        rng = np.random.default_rng(5)
        fc_err = 0.0
        for s in benchmark.subjects:
            perm = rng.permutation(benchmark.series_len)
            fc_err = max(fc_err, float(np.max(np.abs(pearson_fc(shuffle_bold(s.X, perm)) - pearson_fc(s.X)))))
        shuffled = shuffle_dataset(benchmark, seed=5)
        shuf = cross_validate(shuffled, DeciFitter(bench_model_cfg(shuffled), bench_train_cfg()),
                              k=5, runs=5, seed=0, label="deci-shuffled")
        base_acc = deci_benchmark[0].mean["accuracy"]
        shuf_acc = shuf.mean["accuracy"]
        d.update(fc_err=f"{fc_err:.2e}", deci=f"{base_acc:.3f}", deci_shuffled=f"{shuf_acc:.3f}")
        assert fc_err <= 1e-12
        assert base_acc - shuf_acc >= 0.10, f"drop {100 * (base_acc - shuf_acc):.1f} points"


@pytest.mark.slow
def test_c06_synthetic_separation(benchmark, deci_benchmark):
    with criterion(6, "synthetic separation") as d:
        report, deci_time = deci_benchmark
        start = time.perf_counter()
        b = BENCH["baseline"]
        fc = cross_validate(benchmark, FCLogisticFitter(b["l2"], b["epochs"], b["lr"]), k=5, runs=5, seed=0)
        elapsed = deci_time + time.perf_counter() - start
        deci_acc, fc_acc = report.mean["accuracy"], fc.mean["accuracy"]
        d.update(deci=f"{deci_acc:.3f}", fc_logistic=f"{fc_acc:.3f}", seconds=f"{elapsed:.0f}")
        assert deci_acc >= 0.90
        assert fc_acc <= 0.65
        assert elapsed < 600


# -- 7 ---------------------------------------------------------------------------------------

@pytest.mark.slow
def test_c07_ablation_ordering():
    with criterion(7, "ablation ordering") as d:
        ds = synth_generate(mixed_task_spec())
        rows = ablation_suite(ds, bench_model_cfg(ds), bench_train_cfg(), k=5, runs=5, seed=0)
        acc = {r.label: r.mean["accuracy"] for r in rows}
        d.update({k: f"{v:.3f}" for k, v in acc.items()})
        slack = 0.02
        assert acc["both"] >= acc["cycle"] - slack
        assert acc["both"] >= acc["drift"] - slack
        assert acc["cycle"] >= acc["none"] - slack
        assert acc["drift"] >= acc["none"] - slack


# -- 8 ---------------------------------------------------------------------------------------

def brute_auroc(scores, pos):
    p = [s for s, y in zip(scores, pos) if y]
    n = [s for s, y in zip(scores, pos) if not y]
    return sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in p for b in n) / (len(p) * len(n))


# (y_true, y_pred, V, macro precision, macro recall, macro F1), worked out by hand
HAND_CASES = [
    ([0, 1, 0, 1], [0, 1, 0, 1], 2, F(1), F(1), F(1)),
    ([0, 1], [1, 0], 2, F(0), F(0), F(0)),
    ([0, 0, 1, 1], [0, 0, 0, 0], 2, F(1, 4), F(1, 2), F(1, 3)),
    ([0, 1, 1, 1], [1, 1, 1, 1], 2, F(3, 8), F(1, 2), F(3, 7)),
    ([0, 0, 0, 1, 1, 1], [0, 0, 1, 1, 1, 0], 2, F(2, 3), F(2, 3), F(2, 3)),
    ([0, 0, 0, 0, 1], [0, 0, 0, 0, 0], 2, F(2, 5), F(1, 2), F(4, 9)),
    ([0, 1, 2], [0, 1, 2], 3, F(1), F(1), F(1)),
    ([0, 1, 2], [1, 2, 0], 3, F(0), F(0), F(0)),
    ([0, 1, 2, 2], [2, 2, 2, 2], 3, F(1, 6), F(1, 3), F(2, 9)),
    ([0, 1, 0, 1], [0, 1, 1, 1], 3, F(5, 9), F(1, 2), F(22, 45)),
    ([0, 0, 1, 1], [0, 2, 1, 1], 3, F(2, 3), F(1, 2), F(5, 9)),
    ([0, 1, 2, 0, 1, 2], [0, 2, 1, 0, 1, 2], 3, F(2, 3), F(2, 3), F(2, 3)),
    ([0, 1, 2, 3], [0, 0, 0, 0], 4, F(1, 16), F(1, 4), F(1, 10)),
    ([1], [1], 2, F(1, 2), F(1, 2), F(1, 2)),
    ([1], [0], 2, F(0), F(0), F(0)),
    ([0, 0, 1, 1, 1, 1], [0, 1, 1, 1, 1, 1], 2, F(9, 10), F(3, 4), F(7, 9)),
    ([0, 1, 1, 2, 2, 2], [0, 1, 2, 2, 2, 1], 3, F(13, 18), F(13, 18), F(13, 18)),
    ([0, 0, 0, 1], [1, 1, 1, 1], 2, F(1, 8), F(1, 2), F(1, 5)),
    ([0, 1, 0, 1, 0, 1, 0, 1], [0, 0, 0, 0, 1, 1, 1, 1], 2, F(1, 2), F(1, 2), F(1, 2)),
    ([2, 2, 2], [2, 2, 2], 3, F(1, 3), F(1, 3), F(1, 3)),
]


def test_c08_metric_oracles():
    with criterion(8, "metric oracles") as d:
        rng = np.random.default_rng(8)
        for _ in range(1000):
            n = int(rng.integers(2, 12))
            pos = rng.permutation(np.arange(n) < rng.integers(1, n))  # both sides non-empty
            scores = rng.integers(0, 5, n) / 4.0  # coarse grid forces ties
            assert auroc_binary(scores, pos) == brute_auroc(scores.tolist(), pos.tolist())
        for y_true, y_pred, V, P, R, F1 in HAND_CASES:
            m = classification_metrics(y_true, y_pred, V)
            got = (m.precision_macro, m.recall_macro, m.f1_macro)
            assert np.allclose(got, [float(P), float(R), float(F1)], rtol=0, atol=1e-15), (y_true, y_pred, got)
        d.update(auroc_instances=1000, hand_cases=len(HAND_CASES))


# -- 9, 10 -----------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    assert main(["synth", "--config", str(ROOT / "configs" / "synth_benchmark.json"), "--out", str(root / "data")]) == 0
    return root


def files(path: Path) -> dict[str, bytes]:
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


@pytest.mark.slow
def test_c09_cv_determinism(bench_dir):
    with criterion(9, "cv determinism") as d:
        for name in ("a", "b"):
            code = main(["cv", str(bench_dir / "data"), "--config", str(ROOT / "configs" / "benchmark.json"),
                         "--jobs", "1", "--out", str(bench_dir / f"cv_{name}")])
            assert code == 0
        a, b = files(bench_dir / "cv_a"), files(bench_dir / "cv_b")
        d["files"] = len(a)
        assert a.keys() == b.keys() and len(a) >= 4
        differing = [k for k in a if a[k] != b[k]]
        assert not differing, f"files differ: {differing}"


@pytest.mark.slow
def test_c10_kernel_sweep(bench_dir):
    with criterion(10, "kernel sweep harness") as d:
        D = BENCH["model"]["model_dim"]
        kernels = [D, 3 * D // 4, D // 2]
        out = bench_dir / "ablate"
        code = main(["ablate", str(bench_dir / "data"), "--config", str(ROOT / "configs" / "benchmark.json"),
                     "--kernels", ",".join(map(str, kernels)), "--out", str(out)])
        assert code == 0
        lines = (out / "ablation.csv").read_text().splitlines()
        labels = [line.split(",")[0] for line in lines[1:]]
        assert labels == ["none", "cycle", "drift", "both"] + [f"K={k}" for k in kernels]
        for line in lines[1:]:
            cells = line.split(",")[1:]
            assert all(np.isfinite(float(c)) for c in cells)
        d["rows"] = len(labels)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
