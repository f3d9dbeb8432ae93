from pathlib import Path

from app.cli.deps import get_family, get_lam0, save_track, snapshot_dir
from app.core import artifacts
from app.models.run_config import RunConfig
from app.physics.modulation import track


def handle(args, config: RunConfig, out_dir: Path) -> dict:
    family = get_family(config)
    files = artifacts.snapshot_files(snapshot_dir(config, out_dir))
    result = track(files, get_lam0(config), family, **config.track.fit_kwargs())
    save_track(result, out_dir)
    return {
        "samples": len(result.times),
        "max_residual": max(result.residual_norms),
        "flagged": sum(1 for f in result.flags if f),
    }


def register(subparsers, parents):
    parser = subparsers.add_parser("track", parents=parents, help="fit modulation parameters to a snapshot directory")
    parser.set_defaults(handler=handle)
