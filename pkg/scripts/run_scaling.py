"""Inference throughput of a full-size model across tractogram and context sizes (CSV on stdout)."""

import argparse
import sys

import numpy as np

from petparc.bench import rows_to_csv, run_bench
from petparc.io import load_checkpoint
from petparc.nn.model import EncoderConfig, init_params
from petparc.pipeline import ModelCheckpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", help="PTPC checkpoint; default is a randomly initialized full-size model")
    ap.add_argument("--sizes", default="10000,100000")
    ap.add_argument("--contexts", default="500,2000")
    ap.add_argument("--repeat", type=int, default=1)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    if args.model:
        model = load_checkpoint(args.model)
    else:
        cfg = EncoderConfig(input_dim=45)
        params = init_params(cfg, np.random.default_rng(0), np.float32)
        model = ModelCheckpoint(cfg, "flip_augmented", {k: p.data for k, p in params.items()})
    sizes = [int(x) for x in args.sizes.split(",")]
    contexts = [int(x) for x in args.contexts.split(",")]
    rows = run_bench(model, sizes, contexts, args.repeat, threads=args.threads)
    sys.stdout.write(rows_to_csv(rows))


if __name__ == "__main__":
    main()
