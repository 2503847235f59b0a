"""
AGB Simulation CLI
Run a registered or file-based scenario and write its result CSV
"""

import argparse
import logging
import sys
from pathlib import Path

from colorama import Fore, Style, init
from dotenv import load_dotenv
from rich.console import Console

from agb_feedback.exceptions import AgbError, ConfigInvalid
from agb_feedback.harness.config import load_config_file, load_scenario, registry_names
from agb_feedback.harness.results import emit_csv, results_table
from agb_feedback.harness.runner import run_scenario
from agb_feedback.utils.settings_config import get_settings

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agb-sim", description="Monte Carlo evaluation of AGB limited feedback"
    )
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--scenario", help="name of a registered scenario")
    source.add_argument("--config", type=Path, help="path to a JSON scenario file")
    source.add_argument("--list", action="store_true", help="list registered scenarios")
    parser.add_argument("--seed", type=int, help="override the scenario seed")
    parser.add_argument("--trials", type=int, help="override the trials per grid point")
    parser.add_argument("--out", type=Path, help="CSV path (default: <scenario>.csv)")
    parser.add_argument("--threads", type=int, help="worker threads per grid point")
    return parser


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )
    init(autoreset=True)

    if args.list:
        for name in registry_names():
            print(f"{Fore.CYAN}{name}")
        return 0
    if args.scenario is None and args.config is None:
        print(f"{Fore.RED}Give --scenario, --config or --list")
        return 2

    overrides = {"seed": args.seed, "trials": args.trials}
    try:
        if args.config is not None:
            cfg = load_config_file(args.config, **overrides)
        else:
            cfg = load_scenario(args.scenario, **overrides)
        if args.threads is not None and args.threads < 1:
            raise ConfigInvalid(f"threads: must be at least 1, got {args.threads}")

        print(f"{Fore.YELLOW}Running {cfg.name} ({cfg.trials} trials per point)...")
        rows = run_scenario(cfg, threads=args.threads)
        out = emit_csv(rows, args.out or Path(f"{cfg.name}.csv"))
    except ConfigInvalid as e:
        print(f"{Fore.RED}Invalid configuration: {str(e)}")
        return 2
    except (AgbError, OSError) as e:
        logger.error(f"Scenario failed: {str(e)}")
        print(f"{Fore.RED}Scenario failed: {str(e)}")
        return 1

    Console().print(results_table(rows, title=cfg.name))
    print(f"{Fore.GREEN}{Style.BRIGHT}Results written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
