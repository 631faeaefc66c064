"""Command line entry point: ``cte <stage> --config PATH [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import builtin_config_path, load_config
from .errors import ConfigError, DependencyError, NumericError, TuningError
from .pipeline import STAGES, Run, compare_generators, run_all, run_stage

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_DEPENDENCY, EXIT_NUMERIC = 0, 1, 2, 3, 4

log = logging.getLogger("cte")


def build_parser():
    p = argparse.ArgumentParser(prog="cte", description="Cluster-based tile embedding pipeline.")
    p.add_argument("stage", choices=list(STAGES) + ["all", "compare"],
                   help="pipeline stage to run; 'all' runs every stage in order")
    p.add_argument("--config", help="YAML configuration (default: the bundled desk config)")
    p.add_argument("--seed", type=int, help="override every seed in the configuration")
    p.add_argument("--out", help="output directory (overrides run.out)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        path = args.config if args.config else builtin_config_path("desk")
        cfg = load_config(path, seed=args.seed, out=args.out)
        run = Run(cfg)
        if args.stage == "all":
            for m in run_all(run):
                print(f"{m['stage']}: {m['wall_time_s']:.1f}s")
        elif args.stage == "compare":
            dest, _ = compare_generators(run)
            print(dest)
        else:
            m = run_stage(args.stage, run)
            print(f"{m['stage']}: {m['wall_time_s']:.1f}s -> {run.dir(args.stage)}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (NumericError, TuningError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
