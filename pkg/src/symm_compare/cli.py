"""Command-line entry point: ``symm-compare run | batch | demo``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from .errors import SymmCompareError
from .verify import ScenarioConfig, VerificationReport, corpus_paths, export, run, talenti_demo_config

log = logging.getLogger("symm_compare")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2
SEED_ENV = "SYMM_COMPARE_SEED"


def corpus_seed(default: int = 0) -> int:
    """Seed for randomized corpus generation, taken from ``SYMM_COMPARE_SEED`` when set."""
    value = os.environ.get(SEED_ENV)
    if value is None or not value.strip():
        return default
    try:
        return int(value)
    except ValueError:
        raise SystemExit(f"{SEED_ENV} must be an integer, got {value!r}") from None


def _summarize(report: VerificationReport, elapsed: float) -> str:
    status = "PASS" if report.passed else "FAIL"
    lines = [f"{status} {report.scenario} [{report.theorem}] "
             f"({sum(c.passed for c in report.checks)}/{len(report.checks)} checks, {elapsed:.1f} s)"]
    for c in report.failures():
        where = "" if c.h is None else f" h={c.h}"
        lines.append(f"  failed {c.name}{where}: margin {c.margin:.4g}, tolerance {c.tolerance:.3g}")
    return "\n".join(lines)


def _run_one(config: ScenarioConfig, out: Path) -> VerificationReport:
    start = time.perf_counter()
    report = run(config)
    export(report, out)
    print(_summarize(report, time.perf_counter() - start))
    return report


def _cmd_run(args: argparse.Namespace) -> int:
    config = ScenarioConfig.load(args.config)
    if args.h is not None or args.ladder is not None:
        config = config.override(h=args.h, ladder=args.ladder)
    out = Path(args.out) if args.out else Path("symm_compare_out") / config.name
    report = _run_one(config, out)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _cmd_batch(args: argparse.Namespace) -> int:
    if args.dir:
        root = Path(args.dir)
        if not root.is_dir():
            print(f"error: {root} is not a directory", file=sys.stderr)
            return EXIT_ERROR
        paths = sorted(p for p in root.iterdir() if p.suffix in (".yaml", ".yml", ".json"))
    else:
        paths = corpus_paths()
    if not paths:
        print("error: no scenario files found", file=sys.stderr)
        return EXIT_ERROR
    out_root = Path(args.out) if args.out else Path("symm_compare_out")
    worst = EXIT_OK
    for path in paths:
        try:
            config = ScenarioConfig.load(path)
            if args.h is not None or args.ladder is not None:
                config = config.override(h=args.h, ladder=args.ladder)
            report = _run_one(config, out_root / config.name)
        except SymmCompareError as exc:
            print(f"ERROR {path.name}: {_describe(exc)}")
            worst = EXIT_ERROR
            continue
        if not report.passed and worst == EXIT_OK:
            worst = EXIT_CHECK_FAILED
    return worst


def _cmd_demo(args: argparse.Namespace) -> int:
    config = talenti_demo_config()
    if args.h is not None:
        config = config.override(h=args.h)
    out = Path(args.out) if args.out else Path("symm_compare_out") / config.name
    report = _run_one(config, out)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _describe(exc: SymmCompareError) -> str:
    stage = f"[{exc.stage}] " if exc.stage else ""
    return f"{stage}{type(exc).__name__}: {exc}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symm-compare",
        description="Verify rearrangement comparison inequalities on meshed domains.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log pipeline progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario file")
    p_run.add_argument("config", help="scenario file (YAML or JSON)")
    p_run.add_argument("--out", help="output directory (default symm_compare_out/<name>)")
    p_run.add_argument("--h", type=float, help="run at this single mesh size instead of the configured list")
    p_run.add_argument("--ladder", type=int, help="number of symmetrization levels")
    p_run.set_defaults(func=_cmd_run)

    p_batch = sub.add_parser("batch", help="run every scenario file in a directory")
    p_batch.add_argument("dir", nargs="?", help="directory of scenario files (default: shipped corpus)")
    p_batch.add_argument("--out", help="output root; one sub-directory per scenario")
    p_batch.add_argument("--h", type=float, help="single mesh size override for every scenario")
    p_batch.add_argument("--ladder", type=int, help="number of symmetrization levels")
    p_batch.set_defaults(func=_cmd_batch)

    p_demo = sub.add_parser("demo", help="built-in demonstrations")
    p_demo.add_argument("which", choices=["talenti"])
    p_demo.add_argument("--out", help="output directory")
    p_demo.add_argument("--h", type=float, help="mesh size")
    p_demo.set_defaults(func=_cmd_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SymmCompareError as exc:
        print(f"error: {_describe(exc)}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
