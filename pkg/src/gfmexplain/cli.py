"""Command-line interface.

    gfmexplain synth --spec synth.cfg --out data/
    gfmexplain train --consumption data/consumption.csv --temperature data/temperature.csv --out run/
    gfmexplain explain --meter M003 --month 2 ...
    gfmexplain explain-all ...
    gfmexplain eval ...

Exit codes: 0 success, 2 input validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from gfmexplain.config import RunConfig
from gfmexplain.errors import ExplainError

logger = logging.getLogger("gfmexplain")


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--consumption", type=Path, help="half-hourly consumption CSV")
    p.add_argument("--temperature", type=Path, help="daily temperature CSV")
    p.add_argument("--out", dest="out_dir", type=Path, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-filt", dest="n_filt", type=int)
    p.add_argument("--n-synth", dest="n_synthetic", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--max-rule-len", dest="max_len", type=int)
    p.add_argument("--min-coverage", dest="min_coverage", type=float)
    p.add_argument("--holdout-days", dest="holdout_days", type=int)
    p.add_argument("--jobs", type=int)


RUN_KEYS = ("consumption", "temperature", "out_dir", "seed", "n_filt", "n_synthetic", "bins",
            "k", "max_len", "min_coverage", "holdout_days", "jobs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfmexplain", description="Rule-based guidance for global forecasting model predictions.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit the global forecasting model(s)")
    _run_flags(p)

    p = sub.add_parser("explain", help="rule-based guidance for one meter and month")
    _run_flags(p)
    p.add_argument("--meter", required=True)
    p.add_argument("--month", required=True, type=int, choices=range(1, 13), metavar="1-12")

    p = sub.add_parser("explain-all", help="guidance for every meter")
    _run_flags(p)
    p.add_argument("--month", action="append", type=int, dest="months",
                   help="month to explain (repeatable; default all twelve)")

    p = sub.add_parser("eval", help="fidelity / accuracy tables for all explainers")
    _run_flags(p)

    p = sub.add_parser("synth", help="write a synthetic panel")
    p.add_argument("--spec", type=Path, help="synthetic spec file (key = value)")
    p.add_argument("--out", type=Path, default=Path("synthetic"))
    p.add_argument("--seed", type=int)
    return parser


def _config(args: argparse.Namespace) -> RunConfig:
    return RunConfig.load(args.config, **{k: getattr(args, k) for k in RUN_KEYS})


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ExplainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


def _dispatch(args: argparse.Namespace) -> int:
    from gfmexplain import pipeline

    if args.command == "synth":
        from gfmexplain.synthetic import SyntheticSpec, generate_synthetic_panel

        overrides = {} if args.seed is None else {"seed": args.seed}
        spec = (SyntheticSpec.from_file(args.spec, **overrides) if args.spec
                else SyntheticSpec.from_mapping(overrides))
        for name, path in generate_synthetic_panel(spec, args.out).items():
            print(f"{name}: {path}")
        return 0

    cfg = _config(args)
    if args.command == "train":
        for group, path in pipeline.run_train(cfg).items():
            print(f"{group} model: {path}")
    elif args.command == "explain":
        js, txt = pipeline.run_explain(cfg, args.meter, args.month)
        sys.stdout.write(txt.read_text(encoding="utf-8"))
        print(f"wrote {js} and {txt}")
    elif args.command == "explain-all":
        paths = pipeline.run_explain_all(cfg, args.months or pipeline.ALL_MONTHS)
        print(f"wrote {len(paths)} report files to {cfg.reports_dir}")
    elif args.command == "eval":
        out = pipeline.run_eval(cfg)
        print("explainer,scope,metric_mode,rae,rmse,mae")
        for r in out.local + out.global_:
            print(f"{r.explainer},{r.scope},{r.metric_mode},{r.rae:.3f},{r.rmse:.3f},{r.mae:.3f}")
        print(f"wrote {out.paths['results']} and {out.paths['importance']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
