"""Command-line front end.

Subcommands wire the pipeline end to end:

    hrvbold simulate     generate a synthetic scan corpus + manifest
    hrvbold qc           triage PPG quality, keep usable scans
    hrvbold windows      window-count report + tensor cache
    hrvbold train-cv     k-fold cross-validated training + evaluation
    hrvbold compare-rois ablation over the four ROI configurations
    hrvbold report       SVG figures + markdown summary

Exit codes: 0 success, 2 validation error, 3 data error,
4 numerical divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .errors import DataError, DivergenceError, ValidationError
from .experiment import ExperimentConfig, cmd_compare_rois, cmd_qc, \
    cmd_report, cmd_simulate, cmd_train_cv, cmd_windows, load_config

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4

logger = logging.getLogger("hrvbold")


def _parse_defect_mix(text: str) -> dict[str, float]:
    mix = {}
    for item in text.split(","):
        name, _, value = item.partition("=")
        if not value:
            raise ValidationError(f"malformed defect mix entry {item!r}; "
                                  f"expected Kind=proportion")
        mix[name.strip()] = float(value)
    return mix


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrvbold",
        description="HRV waveform reconstruction from multi-ROI BOLD-fMRI")
    parser.add_argument("--config", help="JSON experiment config file")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", help="output root override")
    parser.add_argument("--data", help="data root override")
    parser.add_argument("--jobs", type=int, help="parallel fold workers")
    parser.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate synthetic scans")
    p_sim.add_argument("--n-scans", type=int, default=None)
    p_sim.add_argument("--defect-mix", type=str, default=None,
                       help="e.g. 'None=0.8,CorrectableSpikes=0.2'")

    sub.add_parser("qc", help="classify PPG quality and filter scans")
    sub.add_parser("windows", help="window report and tensor cache")
    sub.add_parser("train-cv", help="k-fold cross-validated training")
    sub.add_parser("compare-rois", help="ROI-configuration ablation")
    sub.add_parser("report", help="render figures and summary")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_root"] = args.out
    if args.data is not None:
        overrides["data_root"] = args.data
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "simulate":
            mix = _parse_defect_mix(args.defect_mix) if args.defect_mix else None
            manifest = cmd_simulate(cfg, n_scans=args.n_scans, defect_mix=mix)
            print(f"wrote {manifest}")
        elif args.command == "qc":
            kept = cmd_qc(cfg)
            print(f"wrote {kept}")
        elif args.command == "windows":
            report = cmd_windows(cfg)
            print(f"wrote {report}")
        elif args.command == "train-cv":
            report = cmd_train_cv(cfg)
            r = report["mean_over_scans"]["pearson_r"]
            print(f"cross-validation done: mean r over scans = "
                  f"{r if r is None else round(r, 4)}")
        elif args.command == "compare-rois":
            comparison = cmd_compare_rois(cfg)
            print(f"best configuration: {comparison.best_label}")
        elif args.command == "report":
            summary = cmd_report(cfg)
            print(f"wrote {summary}")
    except ValidationError as exc:
        logger.error("validation error: %s", exc)
        return EXIT_VALIDATION
    except DataError as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except DivergenceError as exc:
        logger.error("numerical divergence: %s", exc)
        return EXIT_DIVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
