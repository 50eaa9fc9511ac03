"""Command-line entry point: train, sweep, gradcheck and make-code."""

import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from .coding import make_peg_code, serialize_alist
from .config import get_settings
from .exceptions import SjedError
from .gradcheck import TOLERANCES, run_all
from .hypernet import save_weights
from .metrics import check_metric_consistency, write_csv
from .models import SweepConfig, TrainJob
from .simulation import run_sweep
from .training import train


logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sjed",
        description="Soft-output joint channel estimation and data detection",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("train", help="Train the hyper-network")
    p.add_argument("--config", type=Path, required=True, help="TrainJob JSON file")
    p.add_argument("--out", type=Path, required=True, help="Weight file to write")
    p.add_argument("--seed", type=int, default=None, help="Override the training seed")

    p = commands.add_parser("sweep", help="Monte Carlo BER/PER/BCE sweep over SNR")
    p.add_argument("--config", type=Path, required=True, help="SweepConfig JSON file")
    p.add_argument("--out", type=Path, default=None, help="CSV file to write")
    p.add_argument("--seed", type=int, default=None, help="Override the sweep seed")
    p.add_argument(
        "--repro", action="store_true", help="Worker-count independent results"
    )
    p.add_argument("--workers", type=int, default=None, help="Worker processes")

    p = commands.add_parser("gradcheck", help="Run the finite-difference suites")
    p.add_argument("--seed", type=int, default=0)

    p = commands.add_parser("make-code", help="Write a PEG LDPC code as alist")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, default=480, help="Code length")
    p.add_argument("--m", type=int, default=240, help="Parity checks")
    p.add_argument("--var-degree", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    return parser


def cmd_train(args: argparse.Namespace) -> int:
    job = TrainJob.model_validate_json(args.config.read_text())
    if args.seed is not None:
        job.train.seed = args.seed
    result = train(job.system, job.train)
    save_weights(result.net, job.system, args.out)
    if result.losses:
        print(f"final BCE {result.losses[-1]:.6f} after {len(result.losses)} batches")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = SweepConfig.model_validate_json(args.config.read_text())
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.repro:
        update["reproducible"] = True
    if update:
        cfg = cfg.model_copy(update=update)

    out = args.out or cfg.output_path
    if out is None:
        msg = "sweep needs --out or output_path in the config"
        raise SjedError(msg)
    records = run_sweep(cfg, workers=args.workers)
    write_csv(records, out, cfg.seed)
    check_metric_consistency(records)
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_all(args.seed)
    failed = False
    for name, value in results.items():
        ok = value < TOLERANCES[name]
        failed |= not ok
        status = "ok" if ok else "FAIL"
        print(f"{name:18s} {value:.3e}  (< {TOLERANCES[name]:g})  {status}")
    return 1 if failed else 0


def cmd_make_code(args: argparse.Namespace) -> int:
    code = make_peg_code(args.n, args.m, args.var_degree, args.seed)
    args.out.write_text(serialize_alist(code))
    print(
        f"wrote N={code.num_bits} M={code.num_checks} K={code.num_info} to {args.out}"
    )
    return 0


COMMANDS = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "make-code": cmd_make_code,
}


def main(argv: list[str] | None = None) -> int:
    """Parse arguments, configure logging and run one command."""
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        return COMMANDS[args.command](args)
    except (SjedError, ValidationError, OSError, ValueError) as e:
        logger.error(f"sjed {args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
