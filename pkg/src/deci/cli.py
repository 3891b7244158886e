"""``deci`` command-line interface.

Exit codes: 0 success, 1 validation/configuration/load error, 2 runtime or
numeric error.  Every command resolves its settings (built-in defaults <
``--config`` file < flags), writes them to ``<out>/config.json`` before doing
any work, and writes a machine-readable ``result.json`` at the end.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from deci.baselines import pearson_fc
from deci.data import (
    SynthSpec,
    format_row,
    load_dataset,
    read_csv,
    save_dataset,
    stratified_kfold,
    synth_generate,
    write_csv,
    zscore,
)
from deci.errors import ConfigError, DimensionError, LoadError, NumericError
from deci.model import BRANCHES, ModelConfig, decompose, load_checkpoint, save_checkpoint
from deci.train.loop import TrainConfig, model_config_for, train_model
from deci.train.metrics import METRICS, MetricsReport
from deci.train.protocol import (
    DeciFitter,
    FCLogisticFitter,
    ablation_suite,
    cross_validate,
    evaluate,
    shuffle_dataset,
)

log = logging.getLogger("deci")

OUTPUT_ROOT_ENV = "DECI_OUTPUT_ROOT"
RECONSTRUCTION_TOL = 1e-10

DEFAULTS = {
    "model": {"n_blocks": 1, "model_dim": 64, "kernel_size": None, "dropout": 0.0, "branches": "both"},
    "train": asdict(TrainConfig()),
    "cv": {"folds": 5, "runs": 5},
    "baseline": {"l2": 1e-3, "epochs": 500, "lr": 0.5},
    "ablate": {"kernels": []},
    "synth": SynthSpec().to_dict(),
}


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- config resolution -----------------------------------------------------------

def _merge(base: dict, update: dict, where: str) -> dict:
    out = dict(base)
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"{where}: unknown setting {key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: {key!r} must be a table")
            out[key] = _merge(base[key], value, f"{where}.{key}")
        else:
            out[key] = value
    return out


def resolve_config(args) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            file_cfg = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        if "command" in file_cfg and "config" in file_cfg:
            file_cfg = file_cfg["config"]  # a frozen snapshot from an earlier run
        elif args.command == "synth" and "synth" not in file_cfg:
            file_cfg = {"synth": file_cfg}  # a bare synth spec
        cfg = _merge(cfg, file_cfg, str(path))
    flag_map = {
        "branches": ("model", "branches"),
        "kernel": ("model", "kernel_size"),
        "folds": ("cv", "folds"),
        "runs": ("cv", "runs"),
    }
    for flag, (section, key) in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[section][key] = value
    if getattr(args, "kernels", None) is not None:
        cfg["ablate"]["kernels"] = args.kernels
    if args.seed is not None:
        cfg["train"]["seed"] = args.seed
        cfg["synth"]["seed"] = args.seed
    return cfg


def _output_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / args.command


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _snapshot(out: Path, args, cfg: dict, extra: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    inputs = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config", "out")}
    snap = {"command": args.command, "inputs": inputs, "config": cfg}
    if extra:
        snap.update(extra)
    _write_json(out / "config.json", snap)


def _model_config(section: dict, ds) -> ModelConfig:
    base = {k: v for k, v in section.items() if k != "branches"}
    return model_config_for(ds, **base).with_branches(section["branches"])


def _train_config(section: dict) -> TrainConfig:
    return TrainConfig(**section)


def _load(args, cfg):
    ds = load_dataset(args.dataset)
    if getattr(args, "shuffle_bold", False):
        ds = shuffle_dataset(ds, cfg["train"]["seed"])
    return ds


# -- report formatting -------------------------------------------------------------

def _report_json(report: MetricsReport) -> dict:
    return {
        "label": report.label,
        "mean": report.mean,
        "std": report.std,
        "folds": [{"run": r.run, "fold": r.fold, **r.metrics.as_dict()} for r in report.folds],
    }


def _write_fold_csv(path: Path, reports: list[MetricsReport]) -> None:
    with open(path, "w") as fh:
        fh.write("label,run,fold," + ",".join(METRICS) + "\n")
        for rep in reports:
            for r in rep.folds:
                fh.write(f"{rep.label},{r.run},{r.fold}," + format_row(r.metrics.as_dict().values()) + "\n")


def _summary_rows(rows: list[tuple[str, dict, dict]]) -> tuple[str, str]:
    """CSV and aligned-text renderings of (label, mean, std) rows."""
    csv = ["label," + ",".join(f"{m}_mean,{m}_std" for m in METRICS)]
    for label, mean, std in rows:
        csv.append(label + "," + ",".join(f"{float(mean[m])!r},{float(std[m])!r}" for m in METRICS))
    header = ["model"] + list(METRICS)
    body = [[label] + [f"{100 * mean[m]:.2f} ± {100 * std[m]:.2f}" for m in METRICS]
            for label, mean, std in rows]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    text = "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + body)
    return "\n".join(csv) + "\n", text + "\n"


def _write_summary(out: Path, reports: list[MetricsReport]) -> str:
    csv, text = _summary_rows([(r.label, r.mean, r.std) for r in reports])
    (out / "summary.csv").write_text(csv)
    (out / "summary.txt").write_text(text)
    return text


# -- commands ------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = resolve_config(args)
    spec = SynthSpec.from_dict(cfg["synth"])  # validates before anything is written
    out = _output_dir(args)
    _snapshot(out, args, cfg)
    ds = synth_generate(spec)
    save_dataset(ds, out)
    _write_json(out / "synth_spec.json", spec.to_dict())
    _write_json(out / "result.json", {"n_subjects": len(ds), "manifest": "manifest.json"})
    print(f"wrote {len(ds)} subjects to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    ds = _load(args, cfg)
    mcfg, tcfg = _model_config(cfg["model"], ds), _train_config(cfg["train"])
    out = _output_dir(args)
    _snapshot(out, args, cfg, {"resolved_model": asdict(mcfg)})
    train_set, val_set = ds, None
    if tcfg.patience > 0 and len(ds) >= 5:
        split = stratified_kfold(ds.labels, 5, tcfg.seed)
        train_set, val_set = ds.subset(split.train_indices(0)), ds.subset(split.test_indices(0))
    params, history = train_model(train_set, val_set, mcfg, tcfg)
    save_checkpoint(params, out / "checkpoint")
    with open(out / "history.jsonl", "w") as fh:
        for rec in history.epochs:
            fh.write(json.dumps(rec) + "\n")
    train_metrics = evaluate(params, train_set).as_dict()
    _write_json(out / "result.json", {
        "checkpoint": "checkpoint", "epochs_run": len(history.epochs),
        "best_epoch": history.best_epoch, "stopped_early": history.stopped_early,
        "train_metrics": train_metrics,
    })
    print(f"trained {len(history.epochs)} epochs; train accuracy {train_metrics['accuracy']:.4f}")
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    params = load_checkpoint(args.checkpoint)
    ds = _load(args, cfg)
    out = _output_dir(args)
    _snapshot(out, args, cfg)
    m = evaluate(params, ds)
    _write_json(out / "result.json", {"metrics": m.as_dict(), "n_subjects": len(ds)})
    print(" ".join(f"{k}={v:.4f}" for k, v in m.as_dict().items()))
    return 0


def _fitter(args, cfg, ds):
    if args.model == "fc-logistic":
        return FCLogisticFitter(**cfg["baseline"]), "fc-logistic"
    mcfg = _model_config(cfg["model"], ds)
    return DeciFitter(mcfg, _train_config(cfg["train"])), f"deci-{mcfg.branches}"


def cmd_cv(args) -> int:
    cfg = resolve_config(args)
    ds = _load(args, cfg)
    fitter, label = _fitter(args, cfg, ds)
    if args.shuffle_bold:
        label += "-shuffled"
    out = _output_dir(args)
    _snapshot(out, args, cfg)
    report = cross_validate(ds, fitter, cfg["cv"]["folds"], cfg["cv"]["runs"],
                            seed=cfg["train"]["seed"], jobs=args.jobs, label=label)
    _write_fold_csv(out / "folds.csv", [report])
    text = _write_summary(out, [report])
    _write_json(out / "result.json", {"reports": [_report_json(report)]})
    print(text, end="")
    return 0


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    ds = _load(args, cfg)
    mcfg = _model_config(cfg["model"], ds)
    out = _output_dir(args)
    _snapshot(out, args, cfg)
    reports = ablation_suite(ds, mcfg, _train_config(cfg["train"]), cfg["cv"]["folds"], cfg["cv"]["runs"],
                             kernels=cfg["ablate"]["kernels"], seed=cfg["train"]["seed"], jobs=args.jobs)
    _write_fold_csv(out / "folds.csv", reports)
    text = _write_summary(out, reports)
    (out / "ablation.csv").write_text((out / "summary.csv").read_text())
    _write_json(out / "result.json", {"reports": [_report_json(r) for r in reports]})
    print(text, end="")
    return 0


def cmd_decompose(args) -> int:
    cfg = resolve_config(args)
    params = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.dataset)
    mc = params.config
    if (ds.series_len, ds.n_channels) != (mc.series_len, mc.n_channels):
        raise DimensionError(
            f"checkpoint expects (T={mc.series_len}, C={mc.n_channels}) but dataset has "
            f"(T={ds.series_len}, C={ds.n_channels})"
        )
    subject = ds.find(args.subject)
    out = _output_dir(args)
    _snapshot(out, args, cfg)
    trace = decompose(subject.X, params)
    for n in range(mc.n_blocks):
        block = out / f"block{n}"
        block.mkdir(exist_ok=True)
        for i in range(mc.n_channels):
            write_csv(block / f"roi{i:03d}_drift.csv", trace.drift[n, i][:, None])
            write_csv(block / f"roi{i:03d}_cycle.csv", trace.cycle[n, i][:, None])
            write_csv(block / f"roi{i:03d}_residual.csv", trace.residual[n, i][:, None])
        with open(block / "logits.csv", "w") as fh:
            V = mc.n_classes
            fh.write("roi," + ",".join(f"{kind}_{v}" for kind in ("drift", "cycle", "block") for v in range(V)) + "\n")
            for i in range(mc.n_channels):
                row = np.concatenate([trace.drift_logits[n, i], trace.cycle_logits[n, i], trace.block_logits[n, i]])
                fh.write(f"{i}," + format_row(row) + "\n")
    write_csv(out / "embedding.csv", trace.embedding)
    write_csv(out / "final_residual.csv", trace.residual[-1])
    recon, tele = trace.reconstruction_error(), trace.telescoping_error()
    ok = recon <= RECONSTRUCTION_TOL and tele <= RECONSTRUCTION_TOL
    _write_json(out / "reconstruction.json", {
        "reconstruction_error": recon, "telescoping_error": tele,
        "tolerance": RECONSTRUCTION_TOL, "ok": ok,
    })
    _write_json(out / "result.json", {
        "subject_id": subject.subject_id, "label": subject.label, "branches": trace.branches,
        "n_blocks": mc.n_blocks, "n_rois": mc.n_channels, "reconstruction_ok": ok,
    })
    if not ok:
        raise NumericError(f"decomposition does not reconstruct: error {max(recon, tele):.3e} > {RECONSTRUCTION_TOL:g}")
    print(f"wrote {mc.n_blocks} x {mc.n_channels} drift/cycle series to {out}")
    return 0


def cmd_fc(args) -> int:
    cfg = resolve_config(args)
    src = Path(args.input)
    if src.suffix == ".csv":
        X, _ = zscore(read_csv(src))
    else:
        if not args.subject:
            raise ConfigError("fc: --subject is required when INPUT is a dataset")
        X = load_dataset(src).find(args.subject).X
    out = _output_dir(args)
    _snapshot(out, args, cfg)
    fc = pearson_fc(X)
    write_csv(out / "fc.csv", fc)
    _write_json(out / "result.json", {"n_rois": int(fc.shape[0]), "file": "fc.csv"})
    print(f"wrote {fc.shape[0]}x{fc.shape[1]} FC matrix to {out / 'fc.csv'}")
    return 0


def cmd_report(args) -> int:
    cfg = resolve_config(args)
    rows = []
    for d in args.results:
        path = Path(d) / "result.json"
        try:
            result = json.loads(path.read_text())
        except FileNotFoundError:
            raise LoadError(f"no result.json in {d}") from None
        if "reports" not in result:
            raise LoadError(f"{path} holds no cross-validation reports")
        for rep in result["reports"]:
            rows.append((f"{Path(d).name}:{rep['label']}", rep["mean"], rep["std"]))
    out = _output_dir(args)
    _snapshot(out, args, cfg)
    csv, text = _summary_rows(rows)
    (out / "comparison.csv").write_text(csv)
    (out / "comparison.txt").write_text(text)
    _write_json(out / "result.json", {"rows": [{"label": l, "mean": m, "std": s} for l, m, s in rows]})
    print(text, end="")
    return 0


# -- parser ------------------------------------------------------------------------

def _kernel_list(text: str) -> list[int]:
    try:
        return [int(k) for k in text.split(",") if k.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="training / generation seed")
    common.add_argument("--out", help=f"output directory (default ${OUTPUT_ROOT_ENV}/<command> or runs/<command>)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for folds")
    common.add_argument("-v", "--verbose", action="store_true")

    model_flags = _Parser(add_help=False)
    model_flags.add_argument("--branches", choices=BRANCHES)
    model_flags.add_argument("--kernel", type=int, help="drift kernel size K")
    model_flags.add_argument("--shuffle-bold", action="store_true",
                             help="permute each subject's time points (one permutation per subject, shared by ROIs)")

    cv_flags = _Parser(add_help=False)
    cv_flags.add_argument("--folds", type=int)
    cv_flags.add_argument("--runs", type=int)

    parser = _Parser(prog="deci", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset tree")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common, model_flags], help="train one model on a dataset")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_eval, shuffle_bold=False)

    p = sub.add_parser("cv", parents=[common, model_flags, cv_flags], help="stratified k-fold cross-validation")
    p.add_argument("dataset")
    p.add_argument("--model", choices=("deci", "fc-logistic"), default="deci")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("ablate", parents=[common, model_flags, cv_flags], help="branch ablation and kernel sweep")
    p.add_argument("dataset")
    p.add_argument("--kernels", type=_kernel_list, help="comma-separated K values for the sweep")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("decompose", parents=[common], help="export per-block drift/cycle series for one subject")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--subject", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("fc", parents=[common], help="Pearson FC matrix of one subject")
    p.add_argument("input", help="T x C series CSV, or a dataset manifest/directory")
    p.add_argument("--subject")
    p.set_defaults(func=cmd_fc)

    p = sub.add_parser("report", parents=[common], help="side-by-side table of cv/ablate outputs")
    p.add_argument("results", nargs="+", help="output directories of cv or ablate runs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (ConfigError, DimensionError, LoadError, LookupError) as e:
        print(f"deci: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"deci: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
