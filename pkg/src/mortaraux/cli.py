"""Command line entry point: ``mortaraux {run,study,verify}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

from threadpoolctl import threadpool_limits

from .errors import (
    ConfigurationError,
    DataError,
    IndefiniteOperatorError,
    MortarError,
    SingularElementError,
    SolverFailure,
)
from .experiment import RunConfig, emit_report, run_instance, run_study

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("mortaraux")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--threads", type=int, default=None, help="limit BLAS/OpenMP threads")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="mortaraux", description=__doc__)
    sub = ap.add_subparsers(dest="verb", required=True)
    sub.add_parser("run", parents=[common], help="solve the single instance (level, first order) of a config")
    sub.add_parser("study", parents=[common], help="refinement or polynomial-order sweep")
    sub.add_parser("verify", parents=[common], help="property checks on a small instance")
    return ap


def _load(args) -> RunConfig:
    if args.config is None:
        if args.verb == "verify":
            return RunConfig(dim=2, cells_per_axis=[8, 8], block_shape=[2, 2], refinements=0)
        raise ConfigurationError(f"'{args.verb}' needs --config")
    return RunConfig.load(args.config)


def _dispatch(args) -> int:
    cfg = _load(args)
    if args.verb == "verify":
        from .verify import run_verification

        results = run_verification(cfg)
        for r in results:
            print(r.line())
        failed = sum(not r.passed for r in results)
        print(f"{len(results) - failed}/{len(results)} checks passed")
        return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / f"{cfg.name}_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    if args.verb == "run":
        rows = [run_instance(cfg, cfg.level, cfg.orders[0], args.out)[0]]
    else:
        rows = run_study(cfg, args.out)
    csv_path, txt_path = emit_report(rows, args.out, cfg.name, cfg.study, cfg.report_wall_time)
    sys.stdout.write(txt_path.read_text())
    log.info("wrote %s and %s", csv_path, txt_path)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    limits = threadpool_limits(limits=args.threads) if args.threads else nullcontext()
    try:
        with limits:
            return _dispatch(args)
    except (ConfigurationError, DataError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularElementError, IndefiniteOperatorError, SolverFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except MortarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
