"""Shared helpers for the experiment scripts."""

import json
from pathlib import Path

from deci.data import SynthSpec
from deci.train import TrainConfig, model_config_for

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def load_benchmark():
    """(settings dict, SynthSpec) for the frozen synthetic benchmark."""
    bench = json.loads((CONFIGS / "benchmark.json").read_text())
    spec = SynthSpec.from_dict(json.loads((CONFIGS / "synth_benchmark.json").read_text()))
    return bench, spec


def model_and_train(bench: dict, ds):
    m = {k: v for k, v in bench["model"].items() if k != "branches"}
    return model_config_for(ds, **m).with_branches(bench["model"]["branches"]), TrainConfig(**bench["train"])


def print_table(reports):
    width = max(len(r.label) for r in reports)
    print(f"{'model'.ljust(width)}  accuracy         f1_macro         auroc_macro")
    for r in reports:
        cells = r.summary_cells()
        print(f"{r.label.ljust(width)}  {cells['accuracy']:<15}  {cells['f1_macro']:<15}  {cells['auroc_macro']}")
