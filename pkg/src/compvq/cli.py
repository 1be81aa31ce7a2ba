"""Command-line driver: train, encode, groundtruth, search, distortion.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical
failure.
"""

import argparse
import json
import math
import sys
import time

import numpy as np
from threadpoolctl import threadpool_limits

from . import api
from .core import BLOCK_KINDS, StructureError, quantization_error
from .io import (
    FormatError,
    load_model,
    read_codes,
    read_ivecs,
    read_vectors,
    save_model,
    write_codes,
    write_ivecs,
)
from .search import exact_knn, recall_at_n, search

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _ns(text):
    try:
        ns = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad N list {text!r}")
    if not ns or min(ns) < 1:
        raise argparse.ArgumentTypeError("Ns must be positive")
    if any(b < a for a, b in zip(ns, ns[1:])):
        raise argparse.ArgumentTypeError(f"Ns must be sorted ascending, got {text}")
    return ns


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, default=_plain)
        f.write("\n")


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite(value, what):
    if not math.isfinite(value):
        raise NumericalError(f"{what} is not finite ({value})")
    return value


def _encode(model, X, beam, threads):
    t0 = time.perf_counter()
    codes = api.encode(model, X, beam=beam, nthreads=threads)
    return codes, time.perf_counter() - t0


def cmd_train(args):
    if args.beam is not None and args.method not in ("aq", "apq"):
        raise UsageError(f"--beam only applies to aq/apq, not {args.method}")
    X = read_vectors(args.train)
    d = X.shape[1]
    if args.method in BLOCK_KINDS + ("apq",) and d % args.m:
        raise UsageError(f"--m {args.m} does not divide d={d}")
    if args.method == "apq" and args.m % args.group:
        raise UsageError(f"--group {args.group} does not divide --m {args.m}")
    if X.shape[0] < args.h:
        raise StructureError(f"{X.shape[0]} training vectors, need at least h={args.h}")
    iters = api.DEFAULT_ITERS[args.method] if args.iters is None else args.iters
    beam = 16 if args.beam is None else args.beam
    model, _ = api.train(args.method, X, args.m, args.h, iters=iters, seed=args.seed, beam=beam,
                         kmeans_iters=args.kmeans_iters, group=args.group,
                         opq_iters=args.opq_iters, nthreads=args.threads)
    save_model(model, args.out)
    # recompute from the saved artifact so `distortion` reproduces it exactly
    saved = load_model(args.out)
    codes, enc_seconds = _encode(saved, X, args.beam_encode, args.threads)
    err = _finite(quantization_error(X, saved, codes), "training quantization error")
    report = {
        "method": args.method,
        "config": {"m": args.m, "h": args.h, "iters": iters, "beam": beam,
                   "beam_encode": args.beam_encode, "group": args.group,
                   "kmeans_iters": args.kmeans_iters, "opq_iters": args.opq_iters,
                   "train": args.train, "n_train": X.shape[0], "d": d},
        "seed": args.seed,
        "error_trace": model.meta.get("error_trace", []),
        "final_error": err,
        "train_seconds": model.meta.get("train_seconds"),
        "encode_seconds": enc_seconds,
        "recall": None,
    }
    _write_json(args.report or f"{args.out}.report.json", report)
    print(f"final training quantization error: {err!r}")


def cmd_encode(args):
    model = load_model(args.model)
    X = read_vectors(args.base, expected_dim=model.d)
    codes, seconds = _encode(model, X, args.beam_encode, args.threads)
    write_codes(args.out, codes, model.h)
    print(f"encoded {X.shape[0]} vectors in {seconds:.3f} s")
    if args.report:
        _write_json(args.report, {"model": args.model, "base": args.base, "n": X.shape[0],
                                  "beam_encode": args.beam_encode, "encode_seconds": seconds})


def cmd_groundtruth(args):
    base = read_vectors(args.base)
    queries = read_vectors(args.queries, expected_dim=base.shape[1])
    if args.k > base.shape[0]:
        raise StructureError(f"K={args.k} exceeds the database size {base.shape[0]}")
    write_ivecs(args.out, exact_knn(base, queries, args.k).astype(np.int32))


def cmd_search(args):
    model = load_model(args.model)
    codes, h = read_codes(args.codes)
    if h != model.h or codes.shape[1] != model.m:
        raise StructureError(f"codes (m={codes.shape[1]}, h={h}) do not match the model "
                             f"(m={model.m}, h={model.h})")
    queries = read_vectors(args.queries, expected_dim=model.d)
    gt = read_ivecs(args.gt)
    if gt.shape[0] != queries.shape[0]:
        raise StructureError(f"{gt.shape[0]} ground-truth rows for {queries.shape[0]} queries")
    if gt.shape[1] < args.k:
        raise StructureError(f"ground truth has {gt.shape[1]} neighbours, need K={args.k}")
    if args.ns[-1] > codes.shape[0]:
        raise StructureError(f"N={args.ns[-1]} exceeds the database size {codes.shape[0]}")
    ids, _ = search(model, codes, queries, args.ns[-1])
    recall = recall_at_n(ids, gt, args.ns, k=args.k)
    with open(args.out, "w") as f:
        f.write("N,recall\n")
        for n, r in zip(args.ns, recall):
            f.write(f"{n},{float(r)!r}\n")
    if args.ranked:
        write_ivecs(args.ranked, ids.astype(np.int32))
    if args.report:
        with open(args.report) as f:
            report = json.load(f)
        report["recall"] = {"k": args.k, "N": args.ns, "recall": recall.tolist()}
        _write_json(args.report, report)
    for n, r in zip(args.ns, recall):
        print(f"recall@{n} = {r:.4f}")


def cmd_distortion(args):
    model = load_model(args.model)
    X = read_vectors(args.data, expected_dim=model.d)
    if args.codes:
        codes, h = read_codes(args.codes)
        if h != model.h:
            raise StructureError(f"codes have h={h}, model has h={model.h}")
    else:
        codes, _ = _encode(model, X, args.beam_encode, args.threads)
    err = _finite(quantization_error(X, model, codes), "quantization error")
    print(repr(err))


def build_parser():
    p = _Parser(prog="compvq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--threads", type=_positive, default=1, help="worker threads")
        sp.add_argument("--beam-encode", type=_positive, default=64,
                        help="beam depth when encoding with aq/apq models")

    t = sub.add_parser("train", help="train a quantizer")
    t.add_argument("method", choices=api.METHODS)
    t.add_argument("train", help=".fvecs or .bvecs training vectors")
    t.add_argument("--m", type=_positive, required=True, help="number of codebooks")
    t.add_argument("--h", type=int, default=256, choices=range(1, 257), metavar="H",
                   help="codewords per book (1..256)")
    t.add_argument("--iters", type=_nonneg, default=None,
                   help="training rounds (default: pq 0, opq 100, aq/apq 10, sq 100)")
    t.add_argument("--beam", type=_positive, default=None, help="training beam depth (aq/apq)")
    t.add_argument("--seed", type=_nonneg, default=0)
    t.add_argument("--group", type=_positive, default=4, help="books per AQ group (apq)")
    t.add_argument("--kmeans-iters", type=_nonneg, default=25)
    t.add_argument("--opq-iters", type=_nonneg, default=100, help="OPQ rounds before APQ")
    t.add_argument("--out", required=True, help="model file")
    t.add_argument("--report", help="report path (default: <out>.report.json)")
    common(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("encode", help="encode a database")
    e.add_argument("model")
    e.add_argument("base")
    e.add_argument("--out", required=True, help="codes file")
    e.add_argument("--report")
    common(e)
    e.set_defaults(func=cmd_encode)

    g = sub.add_parser("groundtruth", help="exact K nearest neighbours")
    g.add_argument("base")
    g.add_argument("queries")
    g.add_argument("--k", type=_positive, default=100)
    g.add_argument("--out", required=True, help=".ivecs output")
    g.add_argument("--threads", type=_positive, default=1, help="worker threads")
    g.set_defaults(func=cmd_groundtruth)

    s = sub.add_parser("search", help="ADC search and recall@N")
    s.add_argument("model")
    s.add_argument("codes")
    s.add_argument("queries")
    s.add_argument("gt", help="ground truth .ivecs")
    s.add_argument("--ns", type=_ns, default=[1, 2, 5, 10, 20, 50, 100],
                   help="comma-separated ascending Ns")
    s.add_argument("--k", type=_positive, default=1, help="true neighbours counted per query")
    s.add_argument("--out", required=True, help="CSV output")
    s.add_argument("--ranked", help="optional .ivecs of ranked ids")
    s.add_argument("--report", help="train report to update with the recall curve")
    common(s)
    s.set_defaults(func=cmd_search)

    q = sub.add_parser("distortion", help="mean squared quantization error")
    q.add_argument("model")
    q.add_argument("data")
    q.add_argument("--codes", help="use these codes instead of encoding")
    common(q)
    q.set_defaults(func=cmd_distortion)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=args.threads):
            args.func(args)
    except UsageError as exc:
        print(f"compvq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"compvq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, StructureError, OSError, ValueError) as exc:
        print(f"compvq: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
