"""Branch ablation on the mixed cycle+drift task and a kernel-size sweep.

    python3 scripts/ablation.py --runs 5 --kernels 64,48,32
"""

import argparse

from _common import load_benchmark, model_and_train, print_table

from deci.data import mixed_task_spec, synth_generate
from deci.train import ablation_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--kernels", default="", help="comma-separated K values")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    bench, _ = load_benchmark()
    ds = synth_generate(mixed_task_spec())
    mcfg, tcfg = model_and_train(bench, ds)
    kernels = [int(k) for k in args.kernels.split(",") if k]
    rows = ablation_suite(ds, mcfg, tcfg, k=args.folds, runs=args.runs, kernels=kernels,
                          seed=tcfg.seed, jobs=args.jobs)
    print_table(rows)


if __name__ == "__main__":
    main()
