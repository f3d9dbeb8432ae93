from pathlib import Path

from app.cli.deps import get_external, get_family, get_lam0, load_track
from app.core import artifacts
from app.models.effective import ComparisonReport, EffectivePath
from app.models.modulation import ModulationTrack
from app.models.run_config import RunConfig
from app.physics.effective_dynamics import compare, from_soliton, integrate


def effective_for(config: RunConfig, out_dir: Path) -> tuple[ModulationTrack, EffectivePath]:
    """Fitted track of a run directory and the effective path over the same time span."""
    track_path = Path(config.compare.track_path) if config.compare.track_path else out_dir / "track.json"
    result = load_track(track_path)
    initial = from_soliton(get_family(config), get_lam0(config))
    t_end = result.times[-1] if result.times else 0.0
    path = integrate(initial, get_external(config), t_end, config.compare.dt)
    artifacts.write_csv(out_dir / "effective.csv", path.columns(), path.rows())
    return result, path


def write_report(report: ComparisonReport, out_dir: Path) -> dict:
    artifacts.write_json(out_dir / "comparison.json", report)
    return {"max_xi": report.max_xi, "max_u": report.max_u}


def handle(args, config: RunConfig, out_dir: Path) -> dict:
    result, path = effective_for(config, out_dir)
    return write_report(compare(result, path, box=config.grid.L), out_dir)


def register(subparsers, parents):
    parser = subparsers.add_parser("compare", parents=parents, help="compare a fitted track with the effective dynamics")
    parser.set_defaults(handler=handle)
