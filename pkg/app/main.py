import argparse
import json
import logging
import sys
from pathlib import Path

from app.cli import boost, check_hypotheses, compare, evolve, pipeline, profile, spectrum, track
from app.core import artifacts
from app.core.config import load_run_config, settings
from app.core.errors import KGMError
from app.core.logs import setup_logging
from app.core.workers import shutdown_workers, start_workers
from app.db.session import init_db, record_run
from app.models.run import RunRecordCreate, RunStatus
from app.models.run_config import RunConfig

logger = logging.getLogger(__name__)

COMMANDS = (check_hypotheses, profile, spectrum, boost, evolve, track, compare, pipeline)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="TOML run configuration")
    common.add_argument("--out-dir", type=Path, default=None, help="output directory (default: KGM_OUT_DIR)")
    common.add_argument("--threads", type=int, default=None, help="worker threads for FFTs and fits")
    common.add_argument("--snapshot-stride", type=int, default=None, help="steps between saved snapshots")
    common.add_argument("--divergence-cleaning", action=argparse.BooleanOptionalAction, default=None)
    common.add_argument("--gauss-e-factor", action=argparse.BooleanOptionalAction, default=None)
    common.add_argument("--log-level", default=None)

    parser = argparse.ArgumentParser(prog=settings.PROJECT_NAME, description="Charged soliton laboratory")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers, [common])
    return parser


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates = {
        "snapshot_stride": args.snapshot_stride,
        "divergence_cleaning": args.divergence_cleaning,
        "gauss_e_factor": args.gauss_e_factor,
    }
    updates = {k: v for k, v in updates.items() if v is not None}
    if not updates:
        return config
    return config.model_copy(update={"evolve": config.evolve.model_copy(update=updates)})


def _report_error(exc: KGMError) -> None:
    print(json.dumps(exc.to_body(), sort_keys=True, default=str), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    if args.threads:
        settings.THREADS = args.threads
    out_dir = Path(args.out_dir or settings.OUT_DIR)
    config_hash = ""
    summary: dict = {}
    exit_code = 0
    try:
        config = apply_overrides(load_run_config(args.config), args)
        artifacts.prepare_out_dir(out_dir)
        config_hash = artifacts.freeze_config(config, out_dir)
        start_workers(settings.THREADS)
        summary = args.handler(args, config, out_dir) or {}
        logger.info("%s finished: %s", args.command, summary)
    except KGMError as exc:
        _report_error(exc)
        summary = exc.to_body()
        exit_code = exc.status_code
    finally:
        shutdown_workers()
    _record(args.command, config_hash, out_dir, exit_code, summary)
    return exit_code


def _record(command: str, config_hash: str, out_dir: Path, exit_code: int, summary: dict) -> None:
    try:
        init_db()
        record_run(
            RunRecordCreate(
                command=command,
                config_hash=config_hash,
                out_dir=str(out_dir),
                status=RunStatus.SUCCEEDED if exit_code == 0 else RunStatus.FAILED,
                exit_code=exit_code,
                summary=artifacts.canonical_json(summary),
            )
        )
    except Exception as exc:
        logger.warning("run ledger not updated: %s", exc)


if __name__ == "__main__":
    sys.exit(main())
