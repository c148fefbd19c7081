"""Command-line entry point: ``rdm-dynamics --config scenario.cfg``."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import TYPE_CHECKING

from ._core import SimulationError
from .config import ConfigError, load_config, parse_config
from .scenarios import run_scenario, scenario_names

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rdm-dynamics",
        description="Nonlinear reduced density matrix dynamics on a periodic 1D grid.",
    )
    p.add_argument("--config", type=Path, help="scenario configuration file")
    p.add_argument("--scenario", choices=scenario_names(), help="overrides [scenario] name")
    p.add_argument("--out-dir", help="overrides [output] out_dir")
    p.add_argument("--seed", type=int, help="overrides [ensemble] seed")
    p.add_argument("--grid-n", type=int, help="overrides [grid] n")
    p.add_argument("--dt", type=float, help="overrides [evolve] dt")
    p.add_argument("--steps", type=int, help="overrides [evolve] steps")
    p.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    return p


def _overrides(args: argparse.Namespace) -> dict[str, dict[str, object]]:
    return {
        "scenario": {"name": args.scenario},
        "output": {"out_dir": args.out_dir},
        "ensemble": {"seed": args.seed},
        "grid": {"n": args.grid_n},
        "evolve": {"dt": args.dt, "steps": args.steps},
    }


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {
        section: values
        for section, values in _overrides(args).items()
        if any(v is not None for v in values.values())
    }

    try:
        if args.config is None:
            config = parse_config("", overrides=overrides)
        else:
            config = load_config(args.config, overrides=overrides)
    except ConfigError as exc:
        for issue in exc.issues:
            logger.error("%s", issue)  # noqa: TRY400
        return EXIT_CONFIG
    except OSError as exc:
        logger.error("cannot read configuration: %s", exc)  # noqa: TRY400
        return EXIT_CONFIG

    try:
        run_scenario(config)
    except (SimulationError, ValueError, OSError) as exc:
        logger.error("%s failed: %s", config.scenario, exc)  # noqa: TRY400
        return EXIT_RUNTIME
    return 0
