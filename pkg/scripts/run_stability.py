"""Accuracy spread over repeated inference under random flips and/or random partitioning."""

import argparse
import json
from dataclasses import replace

from petparc.io import load_checkpoint
from petparc.pipeline import STABILITY_MODES, stability_experiment
from petparc.synth import default_benchmark_config, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("checkpoints", nargs="+", help="PTPC files, e.g. from run_synthetic_benchmark.py --save-prefix")
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--context", type=int, default=200)
    ap.add_argument("--modes", default="flips,rsp,both")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--test-seed", type=int, default=12345)
    args = ap.parse_args()

    test_set = generate(replace(default_benchmark_config(10, 1000, 500, args.seed), seed=args.test_seed))
    for path in args.checkpoints:
        model = load_checkpoint(path)
        for mode in args.modes.split(","):
            if mode not in STABILITY_MODES:
                ap.error(f"unknown mode {mode!r}")
            res = stability_experiment(model, test_set, args.runs, mode, args.context, seed=args.seed)
            print(json.dumps({"checkpoint": path, "embedding": model.embedding_mode, **res.summary()}))


if __name__ == "__main__":
    main()
