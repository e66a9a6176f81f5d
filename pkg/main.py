import argparse
import logging
import sys
from dotenv import load_dotenv
from pydantic import ValidationError

from hierrb.config import ExperimentConfig
from hierrb.database import Database
from hierrb.exceptions import ConfigError, EnrichmentError, SaturationError, ScmConvergenceError
from hierrb.handlers import offline, online, studies
from hierrb.utils.helpers import get_settings

# Environment
load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_SATURATION = 2
EXIT_SCM = 3
EXIT_CONFIG = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierrb", description="Certified reduced basis experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment INI file (defaults when omitted)")
    common.add_argument("--set", dest="assignments", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("--problem", choices=["thermal_block", "helmholtz"])
    common.add_argument("--sampling", choices=["strong", "weak_std", "weak_hier"])
    common.add_argument("--n-max", type=int)
    common.add_argument("--beta-source", choices=["exact_eig", "scm", "min_theta"])
    common.add_argument("--output", help="run directory")
    common.add_argument("--workers", type=int, help="thread count (defaults to HIERRB_WORKERS)")

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("offline", parents=[common], help="greedy basis, reduced model and Theta tables")
    p.add_argument("--force", action="store_true", help="recompute a complete run")
    p = sub.add_parser("eval", parents=[common], help="online estimator study and plot data")
    p.add_argument("--sample", choices=["test", "train"], default="test")
    sub.add_parser("theta", parents=[common], help="Theta by training ratio and Dinkelbach variants")
    sub.add_parser("scm-study", parents=[common], help="SCM gap history and bounds")
    sub.add_parser("scatter", parents=[common], help="effectivity over online time")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return cfg.apply_overrides(
        args.assignments,
        problem=args.problem,
        sampling=args.sampling,
        n_max=args.n_max,
        beta_source=args.beta_source,
        output=args.output,
    )


def run(args) -> int:
    cfg = load_config(args)
    db = Database(get_settings()["database_url"])
    db.init_db()
    logger.info(f"{args.command}: {cfg.problem.name}, {cfg.greedy.sampling}, config {cfg.config_hash()[:12]}")

    if args.command == "offline":
        manifest = offline.run_offline(cfg, db, force=args.force, workers=args.workers)
        logger.info(f"offline artifacts: {len(manifest.artifacts)}")
    elif args.command == "eval":
        reports = online.run_online_eval(cfg, sample=args.sample, workers=args.workers)
        if args.sample == "test":
            reports.update(studies.emit_figures(cfg))
        logger.info(f"reports: {', '.join(sorted(reports))}")
    elif args.command == "theta":
        studies.run_theta_study(cfg, workers=args.workers)
    elif args.command == "scm-study":
        studies.run_scm_study(cfg, workers=args.workers)
    elif args.command == "scatter":
        studies.run_scatter(cfg)
    return EXIT_OK


def setup_logging():
    settings = get_settings()
    logging.basicConfig(
        level=settings["log_level"],
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stdout),
            logging.FileHandler(settings["log_file"])
        ]
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    try:
        return run(args)
    except (SaturationError, EnrichmentError) as e:
        logger.error(f"Saturation failure: {e}")
        return EXIT_SATURATION
    except ScmConvergenceError as e:
        logger.error(f"SCM did not converge: {e}")
        return EXIT_SCM
    except (ConfigError, ValidationError) as e:
        logger.error(f"Config error: {e}")
        return EXIT_CONFIG
    except KeyboardInterrupt:
        logger.info("Interrupted")
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"Critical error: {e}", exc_info=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
