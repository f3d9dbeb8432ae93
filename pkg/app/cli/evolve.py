import logging
from pathlib import Path

import numpy as np

from app.cli.deps import get_external, get_family, get_lam0, save_track, snapshot_dir
from app.core import artifacts
from app.core.errors import EvolutionAborted
from app.models.evolution import MONITOR_COLUMNS
from app.models.run_config import RunConfig
from app.physics import lattice
from app.physics.effective_dynamics import from_soliton, integrate
from app.physics.evolution import FollowPath, initial_data, run, world_line
from app.physics.modulation import PerturbationMonitor, evolve_and_track

logger = logging.getLogger(__name__)


def _path(config: RunConfig, family, lam0, external):
    """World line for the chi gauge: followed live when pipelined, else the effective path."""
    if config.evolve.pipelined:
        return FollowPath(lam0.xi_array, lam0.u_array)
    if external is None:
        return None
    effective = integrate(from_soliton(family, lam0), external, config.evolve.t_end, config.compare.dt)
    return world_line(lam0, effective=effective)


def handle(args, config: RunConfig, out_dir: Path) -> dict:
    family = get_family(config)
    grid = config.grid.grid()
    lam0 = get_lam0(config)
    external = get_external(config)
    evolve = config.evolve
    path = _path(config, family, lam0, external)
    state, gauge = initial_data(
        family.profile(lam0.omega),
        lam0,
        external,
        grid,
        family.e,
        path=path,
        require_stable=evolve.require_stable,
        box_tail_tol=evolve.box_tail_tol,
    )
    cfg = evolve.config()
    if evolve.pipelined:
        trajectory, result = evolve_and_track(
            state, lam0, family, family.spec, cfg, gauge, path, **config.track.fit_kwargs()
        )
        save_track(result, out_dir)
    else:
        monitor = PerturbationMonitor(lam0, family, gauge, **config.track.fit_kwargs()) if evolve.monitor_w else None
        snaps = snapshot_dir(config, out_dir) if cfg.snapshot_stride else None
        if snaps is not None:
            artifacts.prepare_out_dir(snaps)
        try:
            trajectory = run(state, family.spec, cfg, gauge, monitor, snapshot_dir=snaps, keep_snapshots=False)
        except EvolutionAborted as exc:
            if exc.last_healthy is not None:
                lattice.save_snapshot(exc.last_healthy, out_dir / "last_healthy.kgm")
            raise
    artifacts.write_csv(out_dir / "monitor.csv", MONITOR_COLUMNS, [m.row() for m in trajectory.monitors])
    lattice.save_snapshot(trajectory.final, out_dir / "final.kgm")
    energies = np.array([m.energy for m in trajectory.monitors])
    drift = float(np.max(np.abs(energies - energies[0])) / max(abs(energies[0]), 1e-300))
    return {
        "steps": trajectory.steps,
        "t_final": trajectory.final.t,
        "energy_drift": drift,
        "max_gauss": float(max(m.gauss for m in trajectory.monitors)),
    }


def register(subparsers, parents):
    parser = subparsers.add_parser("evolve", parents=parents, help="RK4 evolution of the coupled field equations")
    parser.set_defaults(handler=handle)
