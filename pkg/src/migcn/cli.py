"""Command-line entry point: ``migcn <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time

from .errors import MIGCNError
from .harness import (Checkpoint, RunConfig, dump_graph, evaluate, export_scores, gradcheck,
                      load_dataset, select_sample, train)
from .ingest import generate_synthetic, write_synthetic
from .localize import predict_top1


def _config(args) -> RunConfig:
    cfg = RunConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _checkpoint(args) -> Checkpoint:
    ckpt = Checkpoint.load(args.ckpt)
    if getattr(args, "seed", None) is not None:
        ckpt.config["seed"] = args.seed
    return ckpt


def _data(ckpt: Checkpoint, args):
    return load_dataset(ckpt.run_config(), getattr(args, "manifest", None), getattr(args, "embeddings", None))


def cmd_train(args) -> int:
    cfg = _config(args)
    result = train(cfg)
    result.checkpoint.save(args.out)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "step", "aln", "rank", "reg", "total"])
            for e in result.trace:
                writer.writerow([e.epoch, e.step, repr(e.aln), repr(e.rank), repr(e.reg), repr(e.total)])
    last = result.trace[-1].total if result.trace else float("nan")
    print(f"trained {result.checkpoint.step} steps in {result.seconds:.2f}s; final loss {last:.6f}")
    return 0


def cmd_eval(args) -> int:
    ckpt = _checkpoint(args)
    X, y = _data(ckpt, args)
    thresholds = [float(t) for t in args.iou.split(",")]
    start = time.perf_counter()
    table = evaluate(ckpt, X, y, thresholds)
    for n, pct in table.items():
        print(f"R@1,IoU@{n:g}\t{pct:.2f}")
    print(f"evaluated {len(X)} queries in {time.perf_counter() - start:.2f}s")
    return 0


def cmd_localize(args) -> int:
    ckpt = _checkpoint(args)
    X, y = _data(ckpt, args)
    sample, _ = select_sample(X, y, args.video, args.query)
    est = ckpt.to_estimator()
    moments = est.predict_candidates([sample])[0]
    tau_s, tau_e, score = predict_top1(moments, sample.duration, est.n_clips_)
    print(f"{tau_s:.6f} {tau_e:.6f} {score:.6f}")
    if args.dump_graph:
        dump_graph(est, sample, args.dump_graph)
    return 0


def cmd_gradcheck(args) -> int:
    report = gradcheck(_config(args))
    print(report.format())
    return 0 if report.passed else 1


def cmd_synth(args) -> int:
    ds = generate_synthetic(args.seed, args.n, args.T, args.dv, args.vocab, args.lmax,
                            embed_dim=args.embed_dim)
    manifest, embeddings = write_synthetic(ds, args.out_dir)
    print(json.dumps({"manifest": str(manifest), "embeddings": str(embeddings)}))
    return 0


def cmd_export_scores(args) -> int:
    ckpt = _checkpoint(args)
    X, y = _data(ckpt, args)
    moments = export_scores(ckpt, args.video, args.query, args.out, X, y)
    print(f"wrote {len(moments)} candidates to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="migcn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("train", cmd_train, "train a model from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="optional CSV of per-step losses")
    p.add_argument("--seed", type=int)

    p = add("eval", cmd_eval, "R@1 at IoU thresholds")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--iou", default="0.3,0.5,0.7")
    p.add_argument("--seed", type=int)

    p = add("localize", cmd_localize, "print 'tau_s tau_e score' for one query")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--video", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--dump-graph", metavar="DIR", help="write adjacency matrices as CSV")
    p.add_argument("--seed", type=int)

    p = add("gradcheck", cmd_gradcheck, "finite-difference gradient check")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)

    p = add("synth", cmd_synth, "write a synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--T", type=int, default=30)
    p.add_argument("--dv", type=int, default=16)
    p.add_argument("--vocab", type=int, default=20)
    p.add_argument("--lmax", type=int, default=10)
    p.add_argument("--embed-dim", type=int, default=300)

    p = add("export-scores", cmd_export_scores, "candidate score map CSV for one query")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--video", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.add_argument("--embeddings")
    p.add_argument("--seed", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MIGCNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
