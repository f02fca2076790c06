"""``petparc`` command line: synth, train, infer, eval, stability, bench.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every command prints a human-readable summary followed by one JSON line.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import io as pio
from .bench import rows_to_csv, run_bench
from .embedding import input_dim
from .errors import DataError, NumericError, PetparcError
from .nn.model import EncoderConfig
from .pipeline import (
    STABILITY_MODES,
    TrainConfig,
    evaluate,
    infer,
    map_to_bundles,
    stability_experiment,
    train,
)
from .synth import default_benchmark_config, dumps_config, generate, loads_config

MODES = {"flip-inv": "flip_invariant", "flip-aug": "flip_augmented"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _default_threads() -> int:
    env = os.environ.get("PETPARC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"PETPARC_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive")
    return vals


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True))


def cmd_synth(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = loads_config(fh.read())
    else:
        if args.bundles < 2:
            raise UsageError("--bundles must be >= 2")
        if args.per_bundle < 1 or args.outliers < 0:
            raise UsageError("--per-bundle must be >= 1 and --outliers >= 0")
        cfg = default_benchmark_config(args.bundles, args.per_bundle, args.outliers, args.seed)
    t = generate(cfg)
    pio.write_slf_file(args.out, list(t.streamlines))
    pio.write_labels_file(args.labels, t.labels)
    if args.write_config:
        with open(args.write_config, "w", encoding="utf-8") as fh:
            fh.write(dumps_config(cfg))
    print(f"wrote {len(t)} streamlines ({cfg.num_classes} classes) to {args.out}")
    _emit({"command": "synth", "streamlines": len(t), "num_classes": cfg.num_classes})
    return 0


def cmd_train(args) -> int:
    if len(args.data) != len(args.labels):
        raise UsageError("give one --labels file per --data file")
    mode = MODES[args.mode]
    subjects = [pio.load_tractogram(d, lab) for d, lab in zip(args.data, args.labels)]
    enc = EncoderConfig(
        num_layers=args.layers,
        token_dim=args.token_dim,
        ff_hidden=args.ff_hidden,
        dropout=args.dropout,
        num_classes=args.classes,
        head_hidden=args.head_hidden,
        input_dim=input_dim(mode),
        norm=args.norm,
    )
    cfg = TrainConfig(
        batch_size=args.batch,
        iterations=args.iters,
        context_size=args.context,
        embedding_mode=mode,
        seed=args.seed,
        encoder=enc,
        lr=args.lr,
        weight_decay=args.weight_decay,
        dtype=args.dtype,
    )

    def progress(it, loss, lr):
        if it % args.log_every == 0 or it == cfg.iterations - 1:
            print(f"iter {it:6d}  loss {loss:.6f}  lr {lr:.3e}", flush=True)

    model = train(subjects, cfg, progress)
    pio.save_checkpoint(model, args.out)
    print(f"saved checkpoint to {args.out}")
    _emit({"command": "train", "iterations": cfg.iterations, "mode": mode, "out": args.out})
    return 0


def cmd_infer(args) -> int:
    model = pio.load_checkpoint(args.model)
    t = pio.load_tractogram(args.data)
    res = infer(model, t, args.context, args.batch_sub, args.seed, args.threads)
    labels = res.labels
    if args.bundle_map:
        labels = map_to_bundles(labels, pio.read_bundle_map_file(args.bundle_map))
    pio.write_labels_file(args.out, labels)
    print(f"classified {len(t)} streamlines in {res.seconds:.3f} s ({res.streamlines_per_second:.1f} streamlines/s)")
    _emit({
        "command": "infer",
        "streamlines": len(t),
        "seconds": res.seconds,
        "streamlines_per_second": res.streamlines_per_second,
        "subtractograms": res.num_subtractograms,
        "level": "bundle" if args.bundle_map else "cluster",
    })
    return 0


def cmd_eval(args) -> int:
    pred = pio.read_labels_file(args.pred)
    truth = pio.read_labels_file(args.truth)
    rep = evaluate(pred, truth, args.classes)
    print(f"accuracy {100 * rep.accuracy:.2f}")
    print(f"macro_f1 {100 * rep.macro_f1:.2f}")
    _emit({"command": "eval", **rep.summary()})
    return 0


def cmd_stability(args) -> int:
    model = pio.load_checkpoint(args.model)
    t = pio.load_tractogram(args.data, args.labels)
    for mode in args.mode:
        res = stability_experiment(
            model, t, args.runs, mode, args.context, args.batch_sub, args.seed, args.threads
        )
        s = res.summary()
        print(f"{mode:6s} mean {s['mean_pct']:.4f}  std {s['std_pct']:.4g} (percentage points)")
        _emit({"command": "stability", **s})
    return 0


def cmd_bench(args) -> int:
    model = pio.load_checkpoint(args.model)
    rows = run_bench(model, args.sizes, args.context, args.repeat, args.batch_sub, args.threads, args.seed)
    text = rows_to_csv(rows)
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _stability_modes(text: str) -> list[str]:
    modes = [m for m in text.split(",") if m]
    bad = [m for m in modes if m not in STABILITY_MODES]
    if bad or not modes:
        raise argparse.ArgumentTypeError(f"modes must be drawn from {STABILITY_MODES}")
    return modes


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="petparc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic labeled tractogram")
    s.add_argument("--bundles", type=int, default=10)
    s.add_argument("--per-bundle", type=int, default=1000)
    s.add_argument("--outliers", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", help="read a synth config (JSON) instead of the benchmark layout")
    s.add_argument("--write-config", help="also write the config used")
    s.add_argument("--out", required=True)
    s.add_argument("--labels", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a parcellation model")
    t.add_argument("--data", action="append", required=True, help="SLF file; repeat per subject")
    t.add_argument("--labels", action="append", required=True)
    t.add_argument("--mode", choices=sorted(MODES), default="flip-aug")
    t.add_argument("--context", type=int, default=2000)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--iters", type=int, default=50000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--layers", type=int, default=8)
    t.add_argument("--token-dim", type=int, default=128)
    t.add_argument("--ff-hidden", type=int, default=256)
    t.add_argument("--head-hidden", type=int, default=256)
    t.add_argument("--dropout", type=float, default=0.1)
    t.add_argument("--classes", type=int, default=1600)
    t.add_argument("--norm", choices=("pre", "post"), default="pre")
    t.add_argument("--lr", type=float, default=8.5e-4)
    t.add_argument("--weight-decay", type=float, default=1e-3)
    t.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    t.add_argument("--log-every", type=int, default=100)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="classify every streamline of a tractogram")
    i.add_argument("--model", required=True)
    i.add_argument("--data", required=True)
    i.add_argument("--context", type=int, default=2000)
    i.add_argument("--batch-sub", type=int, default=512)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--threads", type=int, default=None)
    i.add_argument("--bundle-map")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="accuracy and macro F1 of a label file")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--classes", type=int, default=None)
    e.set_defaults(func=cmd_eval)

    st = sub.add_parser("stability", help="accuracy spread under random flips / partitioning")
    st.add_argument("--model", required=True)
    st.add_argument("--data", required=True)
    st.add_argument("--labels", required=True)
    st.add_argument("--runs", type=int, default=20)
    st.add_argument("--mode", type=_stability_modes, default=["flips", "rsp", "both"])
    st.add_argument("--context", type=int, default=2000)
    st.add_argument("--batch-sub", type=int, default=512)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--threads", type=int, default=None)
    st.set_defaults(func=cmd_stability)

    b = sub.add_parser("bench", help="inference throughput over sizes and context sizes")
    b.add_argument("--model", required=True)
    b.add_argument("--sizes", type=_int_list, default=[10000, 100000, 1000000])
    b.add_argument("--context", type=_int_list, default=[500, 2000])
    b.add_argument("--repeat", type=int, default=1)
    b.add_argument("--batch-sub", type=int, default=512)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--threads", type=int, default=None)
    b.add_argument("--out", help="also write the CSV here")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", 0) is None:
            args.threads = _default_threads()
        for name in ("threads", "runs", "repeat", "batch_sub", "context", "batch", "log_every"):
            val = getattr(args, name, None)
            if isinstance(val, int) and val < 1:
                raise UsageError(f"--{name.replace('_', '-')} must be >= 1")
        if getattr(args, "iters", 0) < 0:
            raise UsageError("--iters must be >= 0")
    except UsageError as exc:
        print(f"petparc: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"petparc: error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, MemoryError) as exc:
        print(f"petparc: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (DataError, PetparcError, OSError) as exc:
        print(f"petparc: data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
