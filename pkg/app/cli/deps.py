import logging
from pathlib import Path

from app.core import artifacts
from app.models.external import ExternalFieldSpec, ExternalPreset
from app.models.modulation import ModulationTrack
from app.models.run_config import RunConfig
from app.models.soliton import SolitonParams
from app.physics.soliton_family import SolitonFamily

logger = logging.getLogger(__name__)


def coupling(config: RunConfig) -> float:
    return config.profile.e


def get_family(config: RunConfig) -> SolitonFamily:
    spec = config.potential.spec()
    return SolitonFamily(spec, config.profile.radial_grid(spec.m), coupling(config))


def get_lam0(config: RunConfig) -> SolitonParams:
    return config.evolve.lam0(config.profile.omega)


def get_external(config: RunConfig) -> ExternalFieldSpec | None:
    if config.external.preset == ExternalPreset.VACUUM:
        return None
    return config.external.spec(coupling(config))


def snapshot_dir(config: RunConfig, out_dir: Path) -> Path:
    if config.track.snapshot_dir:
        return Path(config.track.snapshot_dir)
    return Path(out_dir) / "snapshots"


def save_track(result: ModulationTrack, out_dir: Path) -> None:
    artifacts.write_csv(Path(out_dir) / "track.csv", result.columns(), result.rows())
    artifacts.write_json(Path(out_dir) / "track.json", result)


def load_track(path: Path) -> ModulationTrack:
    return ModulationTrack.model_validate(artifacts.read_json(path))


