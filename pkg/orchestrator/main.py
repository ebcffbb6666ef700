import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from rich.console import Console

from app.core.config import apply_overrides, settings
from app.core.logging import setup_logging
from fusion.evidence import combine_dempster, format_mass, parse_mass_texts
from fusion.exceptions import FusionError, InvalidInputError
from fusion.simulation import run_monte_carlo

from .fusion_center import FusionCenter
from .reports import read_report_rows, summary_table, write_curves, write_declarations, write_report_text, write_summary

logger = logging.getLogger("orchestrator")

console = Console(soft_wrap=True)


def _subset_directory(label: str) -> str:
    return label.replace("+", "_")


def _load(args: argparse.Namespace):
    cfg = settings.load(args.config)
    cfg = apply_overrides(
        cfg,
        runs=getattr(args, "runs", None),
        steps=getattr(args, "steps", None),
        seed=getattr(args, "seed", None),
        features=args.features.split(",") if getattr(args, "features", None) else None,
        output_dir=args.out,
    )
    settings.use(cfg)
    setup_logging(settings.get_logging_config())
    return cfg


def cmd_simulate(args: argparse.Namespace) -> int:
    """Run the Monte Carlo experiment for every configured feature subset"""
    cfg = _load(args)
    out = Path(cfg.experiment.output_dir)
    classes = settings.get_class_definitions()
    model_sets = settings.get_model_sets() if cfg.tracking.kinematic_feature == "imm" else None
    logger.info(f"Simulating {len(cfg.experiment.features)} feature subsets, {cfg.experiment.runs} runs each")

    results: List[Tuple[str, float]] = []
    for label in cfg.experiment.features:
        summary = run_monte_carlo(
            cfg.scenario_for(label),
            classes,
            runs=cfg.experiment.runs,
            base_seed=cfg.experiment.seed,
            model_sets=model_sets,
            workers=settings.threads,
        )
        write_curves(out / _subset_directory(label) / "curves.csv", summary.curves, summary.class_ids)
        results.append((label, summary.percent_correct))

    write_summary(out / "summary.csv", results)
    write_report_text(out / "report.txt", results, cfg.experiment.runs, cfg.scenario.steps)
    console.print(summary_table(results, cfg.experiment.runs, cfg.scenario.steps))
    logger.info(f"Results written to {out}")
    return 0


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InvalidInputError(f"cannot read mass file {path}: {e.strerror}") from None


def cmd_evidence(args: argparse.Namespace) -> int:
    """Combine two mass functions with Dempster's rule and print the result with its conflict"""
    setup_logging(settings.load(args.config).logging if args.config else None)
    m1, m2 = parse_mass_texts([(_read_text(path), path) for path in (args.file1, args.file2)])
    combined, conflict = combine_dempster(m1, m2)
    console.print(format_mass(combined), end="", markup=False, highlight=False)
    console.print(f"K {conflict:.12g}", markup=False, highlight=False)
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    """Fuse a report stream for one target and write per-step declarations"""
    cfg = _load(args)
    rows = read_report_rows(args.reports)
    center = FusionCenter(settings.get_class_definitions(), settings.get_catalog())
    declarations = center.process(rows)
    path = Path(cfg.experiment.output_dir) / "declarations.csv"
    write_declarations(path, declarations, center.bank.class_ids)
    logger.info(f"Wrote {len(declarations)} declarations to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fusionkit", description="ESM/radar target recognition and identification")
    subparsers = parser.add_subparsers(dest="command", required=True)

    simulate = subparsers.add_parser("simulate", help="Monte Carlo classification experiment")
    simulate.add_argument("--config", help="Scenario document (JSON or YAML)")
    simulate.add_argument("--runs", type=int)
    simulate.add_argument("--steps", type=int)
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--features", help="Comma-separated feature subsets, e.g. v,a,v+L+a")
    simulate.add_argument("--out", help="Output directory")
    simulate.set_defaults(handler=cmd_simulate)

    evidence = subparsers.add_parser("evidence", help="Combine two mass function files")
    evidence.add_argument("file1")
    evidence.add_argument("file2")
    evidence.add_argument("--config", help="Scenario document, for its logging section")
    evidence.set_defaults(handler=cmd_evidence)

    classify = subparsers.add_parser("classify", help="Fuse a reports.csv stream into declarations.csv")
    classify.add_argument("reports")
    classify.add_argument("--config", help="Scenario document (JSON or YAML)")
    classify.add_argument("--out", help="Output directory")
    classify.set_defaults(handler=cmd_classify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except FusionError as e:
        logger.error(f"{e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
