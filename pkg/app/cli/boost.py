from pathlib import Path

from app.cli.deps import get_family, get_lam0
from app.core import artifacts
from app.models.run_config import RunConfig
from app.physics import lattice
from app.physics.evolution import gauss_residual
from app.physics.soliton_family import check_box, identity_residuals, sample_soliton


def handle(args, config: RunConfig, out_dir: Path) -> dict:
    family = get_family(config)
    grid = config.grid.grid()
    lam = get_lam0(config)
    coupled = family.coupled(lam.omega)
    state = sample_soliton(coupled, lam, grid, config.evolve.box_tail_tol)
    lattice.save_snapshot(state, out_dir / "boost.kgm")
    spec = family.spec
    sidecar = {
        "lambda": lam,
        "grid": grid,
        "tail_ratio": check_box(coupled, grid, config.evolve.box_tail_tol),
        "energy": lattice.energy(state, spec),
        "charge": lattice.total_charge(state),
        "gauss": gauss_residual(state),
        "div_A": lattice.l2_norm(lattice.divergence(state.A, grid), grid),
        "identity_residuals": identity_residuals(family.profile(lam.omega), lam, grid, family.domega(lam.omega)),
    }
    artifacts.write_json(out_dir / "boost.json", sidecar)
    return {"energy": sidecar["energy"], "charge": sidecar["charge"]}


def register(subparsers, parents):
    parser = subparsers.add_parser("boost", parents=parents, help="sample the boosted soliton on the lattice")
    parser.set_defaults(handler=handle)
