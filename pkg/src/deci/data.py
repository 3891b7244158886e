"""Datasets: on-disk manifest + CSV trees, z-scoring, stratified folds and a
synthetic BOLD generator with planted drift/cycle structure."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from deci.errors import ConfigError, LoadError


@dataclass
class SubjectSeries:
    subject_id: str
    X: np.ndarray  # (T, C)
    label: int
    degenerate: tuple[int, ...] = ()  # zero-variance ROI columns


@dataclass
class Dataset:
    subjects: list[SubjectSeries]
    n_classes: int
    name: str = "dataset"

    def __post_init__(self):
        if not self.subjects:
            raise LoadError(f"dataset {self.name!r} has no subjects")
        shape = self.subjects[0].X.shape
        for s in self.subjects:
            if s.X.shape != shape:
                raise LoadError(f"subject {s.subject_id}: shape {s.X.shape}, expected {shape}")

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def series_len(self) -> int:
        return self.subjects[0].X.shape[0]

    @property
    def n_channels(self) -> int:
        return self.subjects[0].X.shape[1]

    @property
    def X(self) -> np.ndarray:
        return np.stack([s.X for s in self.subjects])

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.subjects], dtype=np.int64)

    def subset(self, indices) -> "Dataset":
        return Dataset([self.subjects[i] for i in indices], self.n_classes, self.name)

    def find(self, subject_id: str) -> SubjectSeries:
        for s in self.subjects:
            if s.subject_id == subject_id:
                return s
        raise LookupError(f"subject {subject_id!r} not found in dataset {self.name!r}")


def zscore(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise z-score with the population sd.

    Returns ``(Z, degenerate)``; zero-variance columns become all zeros and are
    flagged in the boolean mask.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ConfigError(f"zscore needs T >= 2, got {X.shape[0]}")
    Xc = X - X.mean(axis=0)
    sd = np.sqrt((Xc * Xc).mean(axis=0))
    degenerate = sd <= 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0))
    Z = Xc / np.where(degenerate, 1.0, sd)
    Z[:, degenerate] = 0.0
    return Z, degenerate


# -- folds -------------------------------------------------------------------

@dataclass
class FoldSplit:
    test_folds: list[np.ndarray]
    seed: int

    @property
    def k(self) -> int:
        return len(self.test_folds)

    def test_indices(self, fold: int) -> np.ndarray:
        return self.test_folds[fold]

    def train_indices(self, fold: int) -> np.ndarray:
        return np.sort(np.concatenate([f for i, f in enumerate(self.test_folds) if i != fold]))


def stratified_kfold(labels, k: int, seed: int = 0) -> FoldSplit:
    """Shuffle each class, lay the classes end to end and deal them round-robin.

    Each class lands in every fold floor(n_c/k) or ceil(n_c/k) times, so
    classes smaller than k are spread one per fold.
    """
    labels = np.asarray(labels)
    n = labels.size
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of subjects ({n})")
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)])
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[order] = np.arange(n) % k
    return FoldSplit([np.flatnonzero(fold_of == f) for f in range(k)], seed)


# -- synthetic data ------------------------------------------------------------

@dataclass
class SynthSpec:
    """Per-class ramp (drift) + sinusoid (cycle) + white noise, per ROI.

    ``drift_slopes`` are total rise over the series; ``cycle_freqs`` are
    cycles per series.
    """

    n_per_class: int = 60
    T: int = 64
    C: int = 8
    V: int = 2
    drift_slopes: list[float] = field(default_factory=lambda: [1.0, -1.0])
    cycle_freqs: list[float] = field(default_factory=lambda: [4.0, 4.0])
    cycle_amps: list[float] = field(default_factory=lambda: [1.0, 1.0])
    noise_sd: float = 0.5
    fc_matched: bool = True
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self):
        for key in ("drift_slopes", "cycle_freqs", "cycle_amps"):
            if len(getattr(self, key)) != self.V:
                raise ConfigError(f"synth spec: {key} has {len(getattr(self, key))} entries, V={self.V}")
        if self.noise_sd < 0:
            raise ConfigError(f"synth spec: noise_sd must be >= 0, got {self.noise_sd}")
        if self.n_per_class < 1 or self.T < 3 or self.C < 1 or self.V < 2:
            raise ConfigError(f"synth spec: need n_per_class>=1, T>=3, C>=1, V>=2 (got {self})")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"synth spec: unknown keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def mixed_task_spec(**overrides) -> SynthSpec:
    """Four classes crossing drift direction with cycle frequency."""
    spec = dict(
        n_per_class=40, T=64, C=8, V=4,
        drift_slopes=[1.0, -1.0, 1.0, -1.0],
        cycle_freqs=[3.0, 3.0, 9.0, 9.0],
        cycle_amps=[1.0, 1.0, 1.0, 1.0],
        noise_sd=0.5, fc_matched=True, seed=0, name="synthetic-mixed",
    )
    spec.update(overrides)
    return SynthSpec(**spec)


def synth_generate(spec: SynthSpec) -> Dataset:
    """Subjects are interleaved by class: sub0000 is class 0, sub0001 class 1, ...

    Each (subject, ROI) gets its own uniform phase.  With ``fc_matched`` all
    phases come from one stream that ignores the class, so phase statistics
    are identical across classes and only the per-class drift/cycle profile
    differs; otherwise each class draws from its own stream.
    """
    root = np.random.SeedSequence(spec.seed)
    noise_ss, shared_ss, *class_ss = root.spawn(2 + spec.V)
    noise_rng = np.random.default_rng(noise_ss)
    if spec.fc_matched:
        shared = np.random.default_rng(shared_ss)
        phase_rngs = [shared] * spec.V
    else:
        phase_rngs = [np.random.default_rng(s) for s in class_ss]
    t = np.arange(spec.T, dtype=np.float64)[:, None]
    ramp = (t - spec.T / 2) / spec.T

    subjects = []
    for _ in range(spec.n_per_class):
        for v in range(spec.V):
            phases = phase_rngs[v].uniform(0, 2 * math.pi, size=spec.C)
            x = (
                spec.drift_slopes[v] * ramp
                + spec.cycle_amps[v] * np.sin(2 * math.pi * spec.cycle_freqs[v] * t / spec.T + phases)
                + spec.noise_sd * noise_rng.standard_normal((spec.T, spec.C))
            )
            Z, degenerate = zscore(x)
            subjects.append(SubjectSeries(
                f"sub{len(subjects):04d}", Z, v, tuple(np.flatnonzero(degenerate).tolist())
            ))
    return Dataset(subjects, spec.V, spec.name)


# -- disk format ----------------------------------------------------------------

def format_row(values) -> str:
    """Comma-joined shortest round-trip decimals."""
    return ",".join(repr(float(x)) for x in values)


def write_csv(path: Path, M: np.ndarray) -> None:
    with open(path, "w", newline="\n") as fh:
        for row in np.atleast_2d(M):
            fh.write(format_row(row) + "\n")


def read_csv(path: Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    if not rows or len({len(r) for r in rows}) != 1:
        raise LoadError(f"{path}: empty or ragged CSV")
    return np.array(rows, dtype=np.float64)


def save_dataset(ds: Dataset, out_dir: str | Path, normalized: bool = True) -> Path:
    out_dir = Path(out_dir)
    (out_dir / "subjects").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in ds.subjects:
        rel = f"subjects/{s.subject_id}.csv"
        write_csv(out_dir / rel, s.X)
        entries.append({"file": rel, "subject_id": s.subject_id, "label": int(s.label)})
    manifest = {
        "name": ds.name,
        "n_classes": ds.n_classes,
        "series_len": ds.series_len,
        "n_channels": ds.n_channels,
        "normalized": normalized,
        "subjects": entries,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Load a manifest (or a directory holding ``manifest.json``) and its CSVs."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except FileNotFoundError:
        raise LoadError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as e:
        raise LoadError(f"{path}: invalid JSON ({e})") from None
    try:
        V, T, C = manifest["n_classes"], manifest["series_len"], manifest["n_channels"]
        entries = manifest["subjects"]
    except KeyError as e:
        raise LoadError(f"{path}: missing key {e}") from None
    normalized = bool(manifest.get("normalized", False))

    subjects = []
    for entry in entries:
        file = path.parent / entry["file"]
        label = entry["label"]
        if not isinstance(label, int) or not 0 <= label < V:
            raise LoadError(f"{file}: label {label!r} outside [0, {V})")
        if not file.exists():
            raise LoadError(f"series file not found: {file}")
        X = read_csv(file)
        if X.shape != (T, C):
            raise LoadError(f"{file}: shape {X.shape}, expected (T={T}, C={C})")
        degenerate: tuple[int, ...] = ()
        if not normalized:
            X, mask = zscore(X)
            degenerate = tuple(np.flatnonzero(mask).tolist())
        subjects.append(SubjectSeries(str(entry.get("subject_id", file.stem)), X, label, degenerate))
    ds = Dataset(subjects, V, manifest.get("name", path.parent.name))
    missing = set(range(V)) - set(ds.labels.tolist())
    if missing:
        raise LoadError(f"{path}: classes {sorted(missing)} have no subjects")
    return ds
