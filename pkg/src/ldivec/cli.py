"""Command-line interface.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or validation error.
Logs go to standard error; only ``eval`` writes its report to standard output.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import arrays_io, evaluation, scoring, stats, synth, training
from .errors import LdivecError, NumericalError, ValidationError
from .model import Dims, check_compatible, load_model, save_model
from .posterior import classical_ivectors, recover_natural_mean

log = logging.getLogger("ldivec")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not (v >= 0 and np.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a finite number >= 0, got {text}")
    return v


def _positive_float(text):
    v = _nonneg_float(text)
    if v == 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _frames(text):
    """``T`` or ``A..B`` (inclusive)."""
    lo, sep, hi = text.partition("..")
    try:
        lo = int(lo)
        hi = int(hi) if sep else lo
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected T or A..B, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad frame range {text!r}")
    return lo if lo == hi else (lo, hi)


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


# -- commands -----------------------------------------------------------------


def cmd_simulate(args):
    cfg = synth.SynthConfig(
        Dims(D=args.fdim, R=args.rdim, Nc=args.comps, L=args.langs),
        frames_per_segment=args.frames,
        segments_per_language=args.segs_per_lang,
        class_separation=args.sep,
        seed=args.seed,
    )
    data = synth.make_dataset(cfg, keep_frames=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(data.ubm, out)
    save_model(data.tmat, out)
    save_model(data.backend, out)
    stats.save_stats(data.stats, out / "stats.manifest")
    stats.save_features(out / "features", data.frames, data.stats.labels, data.backend.labels)
    arrays_io.save_bundle(
        out / "truth.manifest", "truth",
        {
            "means": data.backend.means,
            "precision": data.backend.precision,
            "latents": data.latents,
            "labels": data.stats.labels.astype(np.float64),
        },
        dims={"R": args.rdim, "L": args.langs, "S": len(data.stats)},
        labels=data.backend.labels,
        fields={"seed": str(args.seed)},
    )
    log.info("simulated %d segments into %s", len(data.stats), out)
    return EXIT_OK


def cmd_stats(args):
    ubm = load_model(args.ubm, "ubm")
    tmat = load_model(args.tmatrix, "tmatrix")
    check_compatible(ubm=ubm, tmat=tmat)
    segments, labels, languages = stats.load_features(args.features)
    ds = stats.stats_from_features(segments, labels, languages, ubm, tmat, prune=args.prune)
    stats.save_stats(ds, args.out)
    log.info("wrote statistics of %d segments to %s", len(ds), args.out)
    return EXIT_OK


def cmd_train(args):
    ds = stats.load_stats(args.stats)
    tmat = load_model(args.tmatrix, "tmatrix")
    cfg = training.TrainConfig(max_iters=args.iters, rel_tol=args.tol)
    backend, report = training.train(ds, tmat, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(backend, out)
    lines = [
        f"# initial_bound = {report.initial_bound!r}",
        f"# converged = {str(report.converged).lower()}",
        "iteration\tbound",
    ]
    lines += [f"{k}\t{b!r}" for k, b in enumerate(report.bounds, 1)]
    (out / "train.log").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if not report.monotone:
        log.error("variational bound decreased during training; see %s", out / "train.log")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_extract(args):
    ds = stats.load_stats(args.stats)
    tmat = load_model(args.tmatrix, "tmatrix")
    iv = classical_ivectors(ds.n, ds.a, tmat)
    stats.save_ivectors(stats.IvectorDataset(iv, ds.n, ds.labels, ds.languages), args.out)
    return EXIT_OK


def cmd_recover(args):
    ivs = stats.load_ivectors(args.ivectors)
    tmat = load_model(args.tmatrix, "tmatrix")
    a = recover_natural_mean(ivs.ivectors, ivs.n, tmat)
    stats.save_stats(stats.StatsDataset(ivs.n, a, ivs.labels, ivs.languages), args.out)
    return EXIT_OK


def cmd_score(args):
    backend = load_model(args.backend, "backend")
    tmat = load_model(args.tmatrix, "tmatrix")
    check_compatible(tmat=tmat, backend=backend)
    if args.ivectors:
        sm = scoring.score_from_ivectors(stats.load_ivectors(args.ivectors), backend, tmat, args.scorer)
    else:
        sm = scoring.score_dataset(stats.load_stats(args.stats), backend, tmat, args.scorer)
    scoring.save_scores(sm, args.out)
    return EXIT_OK


def cmd_eval(args):
    sm = scoring.load_scores(args.scores)
    report = evaluation.evaluate(sm)
    Path(args.out).write_text(report.to_keyvalue(), encoding="utf-8")
    sys.stdout.write(report.to_text())
    return EXIT_OK


def build_parser():
    p = _Parser(prog="ldivec", description="Train and score language-dependent i-vector backends.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="sample models and a labelled dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--langs", type=_positive_int, required=True)
    s.add_argument("--rdim", type=_positive_int, required=True)
    s.add_argument("--fdim", type=_positive_int, required=True)
    s.add_argument("--comps", type=_positive_int, required=True)
    s.add_argument("--segs-per-lang", type=_positive_int, required=True)
    s.add_argument("--frames", type=_frames, required=True, help="T or A..B")
    s.add_argument("--sep", type=_nonneg_float, default=3.0)
    s.add_argument("--seed", type=_seed, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("stats", help="features -> sufficient statistics")
    s.add_argument("--features", required=True)
    s.add_argument("--ubm", required=True)
    s.add_argument("--tmatrix", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--prune", type=_positive_float, default=None,
                   help="drop responsibilities below this value and renormalise")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("train", help="EM training of the backend")
    s.add_argument("--stats", required=True)
    s.add_argument("--tmatrix", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--iters", type=_positive_int, default=20)
    s.add_argument("--tol", type=_positive_float, default=1e-6)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("extract", help="classical i-vectors from statistics")
    s.add_argument("--stats", required=True)
    s.add_argument("--tmatrix", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("recover", help="statistics from i-vectors and counts")
    s.add_argument("--ivectors", required=True)
    s.add_argument("--tmatrix", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_recover)

    s = sub.add_parser("score", help="language scores")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--stats")
    src.add_argument("--ivectors")
    s.add_argument("--backend", required=True)
    s.add_argument("--tmatrix", required=True)
    s.add_argument("--scorer", choices=scoring.SCORERS, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("eval", help="accuracy, confusion and log-loss of scores")
    s.add_argument("--scores", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"ldivec {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, NumericalError, LdivecError) as exc:
        print(f"ldivec {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
