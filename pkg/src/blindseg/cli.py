"""
``blindseg`` command line.

Stages run in order: ``prepare`` -> ``train`` -> ``segment`` -> ``evaluate``;
``sweep`` replaces the last two with a threshold sweep. Every command reads
the same INI config (``-c``) and accepts ``--set section.key=value``
overrides. Exit codes: 0 ok, 2 config, 3 I/O or corpus, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .audio_features import AudioError
from .config import ConfigError, dump_config, load_config
from .corpus_io import CorpusError, SynthSpec
from .neural import DivergenceError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGENCE = 0, 2, 3, 4


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", help="INI config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--corpus", help="shortcut for --set corpus.root=...")
    p.add_argument("--workdir", help="shortcut for --set corpus.workdir=...")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blindseg",
                                     description="Blind phoneme segmentation from prediction-error peaks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", help="show the effective configuration")
    _add_common(p)
    p.add_argument("--dump", action="store_true", help="print every setting with its value")

    p = sub.add_parser("prepare", help="MFCC features, codebook and symbol sequences")
    _add_common(p)
    p.add_argument("--force", action="store_true", help="recompute even if up to date")

    p = sub.add_parser("train", help="fit the configured prediction model")
    _add_common(p)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("segment", help="write boundary files for the test utterances")
    _add_common(p)
    p.add_argument("--delta", type=float, help="peak threshold (default: segment.delta)")
    p.add_argument("--dump-errors", action="store_true", help="also write per-frame error CSVs")
    p.add_argument("--plot", type=int, default=0, metavar="N",
                   help="render error profiles of the first N test utterances")

    p = sub.add_parser("evaluate", help="score boundary files against the gold annotation")
    _add_common(p)
    p.add_argument("--boundaries", help="directory of boundary files (default: <workdir>/boundaries)")
    p.add_argument("--periodic", type=float, metavar="MS",
                   help="score the periodic baseline with this period instead")

    p = sub.add_parser("sweep", help="precision/recall over a range of thresholds")
    _add_common(p)
    p.add_argument("--periodic", action="store_true", help="also sweep the periodic baseline's period")
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("synth", help="generate a synthetic piecewise-stationary corpus")
    p.add_argument("out", help="output corpus directory")
    p.add_argument("--kind", choices=("categorical", "frames"), default="categorical")
    p.add_argument("--n-utts", type=int, default=250)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--min-segments", type=int, default=10)
    p.add_argument("--max-segments", type=int, default=20)
    p.add_argument("--min-len", type=int, default=4)
    p.add_argument("--max-len", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--overwrite", action="store_true")
    return parser


def _config(args):
    overrides = list(args.overrides)
    if args.corpus:
        overrides.append(f"corpus.root={args.corpus}")
    if args.workdir:
        overrides.append(f"corpus.workdir={args.workdir}")
    return load_config(args.config, overrides)


def run(args) -> None:
    if args.command == "synth":
        spec = SynthSpec(n_utts=args.n_utts, n_test=args.n_test, min_segments=args.min_segments,
                         max_segments=args.max_segments, min_len=args.min_len, max_len=args.max_len,
                         kind=args.kind, seed=args.seed)
        pipeline.synth(args.out, spec, overwrite=args.overwrite)
        return
    cfg = _config(args)
    if args.command == "config":
        sys.stdout.write(dump_config(cfg))
    elif args.command == "prepare":
        pipeline.prepare(cfg, force=args.force)
    elif args.command == "train":
        pipeline.train(cfg, force=args.force)
    elif args.command == "segment":
        pipeline.segment(cfg, delta=args.delta, dump_errors=args.dump_errors, plot=args.plot)
    elif args.command == "evaluate":
        results = pipeline.evaluate(cfg, boundaries_dir=args.boundaries, periodic_ms=args.periodic)
        for mode, (pooled, report) in results.items():
            pct = report.as_percent()
            print(f"{mode:>12}  P {pct['P']:5.1f}  R {pct['R']:5.1f}  F {pct['F']:5.1f}  "
                  f"OS {pct['OS']:6.1f}  R-value {pct['R-value']:5.1f}  "
                  f"(hits {pooled.n_hit}/{pooled.n_gold}, {pooled.n_hyp} hypotheses)")
    elif args.command == "sweep":
        pipeline.sweep(cfg, periodic=args.periodic, plot=not args.no_plot)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        run(args)
    except ConfigError as exc:
        logging.getLogger("blindseg").error("config error: %s", exc)
        return EXIT_CONFIG
    except (CorpusError, AudioError, OSError) as exc:
        logging.getLogger("blindseg").error("%s", exc)
        return EXIT_IO
    except DivergenceError as exc:
        logging.getLogger("blindseg").error("training diverged: %s", exc)
        return EXIT_DIVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
