import logging
from pathlib import Path

from app.cli import boost, compare, evolve, profile, track
from app.core import artifacts
from app.models.run_config import RunConfig
from app.physics.effective_dynamics import compare as compare_paths

logger = logging.getLogger(__name__)


def stage_name(e: float) -> str:
    return f"e_{e:.6g}"


def _at_coupling(config: RunConfig, e: float) -> RunConfig:
    """Stage config at coupling e; a shared snapshot directory gets one subdirectory per stage and
    each stage compares its own track."""
    update = {
        "profile": config.profile.model_copy(update={"e": e}),
        "compare": config.compare.model_copy(update={"track_path": None}),
    }
    if config.track.snapshot_dir:
        update["track"] = config.track.model_copy(
            update={"snapshot_dir": str(Path(config.track.snapshot_dir) / stage_name(e))}
        )
    return config.model_copy(update=update)


def handle(args, config: RunConfig, out_dir: Path) -> dict:
    e0 = args.e if args.e is not None else config.profile.e
    halvings = args.halvings if args.halvings is not None else config.compare.halvings
    runs = []
    for i in range(halvings + 1):
        e = e0 * 0.5**i
        sub = artifacts.prepare_out_dir(out_dir / stage_name(e))
        cfg = _at_coupling(config, e)
        artifacts.freeze_config(cfg, sub)
        logger.info("pipeline stage e=%.6g -> %s", e, sub)
        profile.handle(args, cfg, sub)
        boost.handle(args, cfg, sub)
        evolve.handle(args, cfg, sub)
        if not cfg.evolve.pipelined:
            track.handle(args, cfg, sub)
        runs.append(compare.effective_for(cfg, sub))
    (base_track, base_path), sweep = runs[0], runs[1:]
    report = compare_paths(base_track, base_path, sweep=sweep or None, box=config.grid.L)
    artifacts.write_json(out_dir / "pipeline.json", report)
    return {
        "couplings": [r[0].e for r in runs],
        "ratios": [row.ratio for row in report.convergence],
    }


def register(subparsers, parents):
    parser = subparsers.add_parser(
        "pipeline", parents=parents, help="profile, boost, evolve, track and compare over an e-halving sweep"
    )
    parser.add_argument("--e", type=float, default=None, help="coupling of the first stage")
    parser.add_argument("--halvings", type=int, default=None, help="number of times e is halved")
    parser.set_defaults(handler=handle)
