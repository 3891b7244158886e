"""DeCI vs. the FC-logistic baseline on the fc_matched synthetic benchmark,
plus DeCI on shuffled-BOLD data.

    python3 scripts/run_benchmark.py --runs 5
"""

import argparse
import time

from _common import load_benchmark, model_and_train, print_table

from deci.data import synth_generate
from deci.train import DeciFitter, FCLogisticFitter, cross_validate, shuffle_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    bench, spec = load_benchmark()
    ds = synth_generate(spec)
    mcfg, tcfg = model_and_train(bench, ds)
    b = bench["baseline"]
    cv = dict(k=args.folds, runs=args.runs, seed=tcfg.seed, jobs=args.jobs)

    start = time.perf_counter()
    reports = [
        cross_validate(ds, DeciFitter(mcfg, tcfg), label="deci", **cv),
        cross_validate(ds, FCLogisticFitter(b["l2"], b["epochs"], b["lr"]), label="fc-logistic", **cv),
        cross_validate(shuffle_dataset(ds, tcfg.seed), DeciFitter(mcfg, tcfg), label="deci-shuffled", **cv),
    ]
    print_table(reports)
    print(f"\n{time.perf_counter() - start:.0f}s")


if __name__ == "__main__":
    main()
