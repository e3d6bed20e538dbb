"""Command-line runner: ``python -m gordinlab --config run.toml`` or ``python -m gordinlab list``.

Exit codes: 0 when every acceptance check passes, 1 when one fails, 2 for
configuration or runtime errors (one line on standard error).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from gordinlab.cli.artifacts import ArtifactWriter, to_jsonable
from gordinlab.cli.experiments import EXPERIMENTS, RunContext
from gordinlab.core.catalog import ExperimentCatalog
from gordinlab.core.config import load_config
from gordinlab.core.errors import ConfigError, GordinLabError
from gordinlab.core.ledger import LedgerEntry, ResultsLedger

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gordinlab",
        description="Run a martingale-coboundary experiment from a config file, or list the catalog.",
    )
    p.add_argument("command", nargs="?", choices=["list"], help="print the experiment catalog and exit")
    p.add_argument("--config", type=Path, help="experiment config (.toml, or .yaml/.yml)")
    p.add_argument("--seed", type=int, help="override master_seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for repeated seeds (default 1)")
    p.add_argument("--out", type=Path, help="override output_dir")
    p.add_argument("--verbose", action="store_true", help="debug logging")
    return p


def list_experiments(catalog: Optional[ExperimentCatalog] = None) -> str:
    return (catalog or ExperimentCatalog()).render()


def run(
    config_path: Path,
    seed: Optional[int] = None,
    threads: int = 1,
    out: Optional[Path] = None,
    catalog: Optional[ExperimentCatalog] = None,
) -> int:
    """Execute one experiment and append it to the ledger; returns the exit code."""
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    cfg = load_config(config_path, catalog).with_overrides(seed=seed, output_dir=out)
    experiment_id = cfg.experiment_id
    writer = ArtifactWriter(
        cfg.output_dir,
        experiment_id,
        provenance={"experiment": cfg.experiment, "experiment_id": experiment_id, "master_seed": cfg.master_seed},
    )
    started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    logger.info("running %s on %s (id %s, seed %d)", cfg.experiment, cfg.map.label, experiment_id, cfg.master_seed)

    result = EXPERIMENTS[cfg.experiment](RunContext(cfg, writer, threads))
    wall_clock = time.perf_counter() - t0

    verdicts = to_jsonable([c.to_dict() for c in result.checks])
    writer.json(
        "report.json",
        {
            "experiment_id": experiment_id,
            "config": cfg.echo(),
            "passed": result.passed,
            "checks": verdicts,
            "payload": result.payload,
        },
    )
    ResultsLedger(cfg.output_dir).append(
        LedgerEntry(
            experiment_id=experiment_id,
            experiment=cfg.experiment,
            config=cfg.echo(),
            verdicts=verdicts,
            passed=result.passed,
            wall_clock=round(wall_clock, 3),
            started_at=started_at,
            artifacts=writer.relative(),
        )
    )

    for check in result.checks:
        level = logging.INFO if check.passed else logging.ERROR
        logger.log(level, "%s: %s (statistic %.4g, threshold %.4g)", check.test_name, "pass" if check.passed else "FAIL", check.statistic, check.threshold)
    failed = [c.test_name for c in result.checks if not c.passed]
    if failed:
        print(f"[{cfg.experiment}] FAILED: {', '.join(failed)}")
        return EXIT_FAIL
    print(f"[{cfg.experiment}] PASSED ({len(result.checks)} checks, {wall_clock:.1f}s) -> {writer.root}")
    return EXIT_PASS


def dispatch(args: argparse.Namespace) -> int:
    """Act on parsed arguments; every library error becomes exit code 2."""
    try:
        if args.command == "list":
            print(list_experiments())
            return EXIT_PASS
        if args.config is None:
            print("error: --config is required unless the command is 'list'", file=sys.stderr)
            return EXIT_ERROR
        return run(args.config, seed=args.seed, threads=args.threads, out=args.out)
    except (GordinLabError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
