from pathlib import Path

from app.cli.deps import get_family, get_lam0
from app.core import artifacts
from app.models.run_config import RunConfig
from app.physics.modulation import frequency_phase_block, pos_proxy
from app.physics.spectral_stability import dh_domega_check, spectrum_report, stability_curve


def handle(args, config: RunConfig, out_dir: Path) -> dict:
    family = get_family(config)
    spec = family.spec
    omega = config.profile.omega
    profile = family.profile(omega)
    report = spectrum_report(spec, profile, config.profile.eigenvalues)
    payload = {"spectrum": report, "dh_domega": dh_domega_check(spec, omega, 1e-3, family.grid)}
    if config.profile.omega_list:
        rows = stability_curve(spec, config.profile.omega_list, family.grid)
        artifacts.write_csv(
            out_dir / "stability.csv",
            ("omega", "q", "dq_domega_fd", "dq_domega_g", "relative_gap", "stable"),
            [[r.omega, r.q, r.dq_domega_fd, r.dq_domega_g, r.relative_gap, float(r.stable)] for r in rows],
        )
    if config.track.pos_samples:
        grid = config.grid.grid()
        lam = get_lam0(config)
        payload["positivity"] = pos_proxy(lam, family, grid, samples=config.track.pos_samples)
        payload["frequency_phase_block"] = frequency_phase_block(lam, family, grid)
    artifacts.write_json(out_dir / "spectrum.json", payload)
    return {"s1_holds": report.s1_holds, "ker_holds": report.ker_holds, "stable": report.stable}


def register(subparsers, parents):
    parser = subparsers.add_parser("spectrum", parents=parents, help="linearized spectra, stability sign and positivity proxy")
    parser.set_defaults(handler=handle)
