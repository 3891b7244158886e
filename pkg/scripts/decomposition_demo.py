"""Train one DeCI model on the benchmark and show how each block splits a
subject's embedding into drift, cycle and residual energy.

    python3 scripts/decomposition_demo.py --blocks 2
"""

import argparse

import numpy as np
from _common import load_benchmark, model_and_train

from deci.data import synth_generate
from deci.model import decompose
from deci.train import train_model


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--blocks", type=int, default=2)
    ap.add_argument("--subject", default="sub0000")
    args = ap.parse_args()

    bench, spec = load_benchmark()
    ds = synth_generate(spec)
    mcfg, tcfg = model_and_train(bench, ds)
    params, _ = train_model(ds, None, mcfg.replace(n_blocks=args.blocks), tcfg)

    subject = ds.find(args.subject)
    tr = decompose(subject.X, params)
    energy = lambda a: float(np.mean(a ** 2))
    print(f"{args.subject} (class {subject.label}); embedding energy {energy(tr.embedding):.4f}")
    for n in range(args.blocks):
        print(f"block {n}: drift {energy(tr.drift[n]):.4f}  cycle {energy(tr.cycle[n]):.4f}  "
              f"residual in {energy(tr.residual[n]):.4f}")
    print(f"final residual {energy(tr.residual[-1]):.4f}; reconstruction error {tr.reconstruction_error():.2e}")
    print("fused logits", np.round(tr.block_logits.mean(axis=(0, 1)), 4))


if __name__ == "__main__":
    main()
