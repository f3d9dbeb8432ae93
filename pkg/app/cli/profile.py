from pathlib import Path

import numpy as np

from app.cli.deps import get_family
from app.core import artifacts
from app.models.run_config import RunConfig
from app.physics.radial_profile import decay_rate
from app.physics.spectral_stability import soliton_charge, soliton_mass


def handle(args, config: RunConfig, out_dir: Path) -> dict:
    family = get_family(config)
    omega = config.profile.omega
    profile = family.profile(omega)
    g = family.domega(omega)
    coupled = family.coupled(omega)
    columns = ("r", "f", "g", "f_e", "alpha")
    artifacts.write_csv(
        out_dir / "profile.csv", columns, np.column_stack([profile.r, profile.f, g, coupled.f, coupled.alpha])
    )
    fit = decay_rate(profile)
    dq = family.dq_domega(omega)
    sidecar = {
        "profile": profile.metadata(),
        "coupled": coupled.metadata(),
        "decay": fit,
        "expected_decay": float(np.sqrt(profile.potential.m**2 - omega**2)),
        "dq_domega": dq,
        "stable": dq < 0,
        "mass": soliton_mass(profile),
        "charge": soliton_charge(coupled),
        "coupled_shift": float(np.linalg.norm(coupled.f - profile.f) / np.linalg.norm(profile.f)),
    }
    artifacts.write_json(out_dir / "profile.json", sidecar)
    return {"f0_center": profile.f0_center, "residual_norm": profile.residual_norm, "stable": dq < 0}


def register(subparsers, parents):
    parser = subparsers.add_parser("profile", parents=parents, help="solve the radial ground state (and its coupled partner)")
    parser.set_defaults(handler=handle)
