import numpy as np
import pytest

from app.core.errors import EvolutionAborted, LeftStableSet, PreconditionViolation
from app.models.evolution import EvolveConfig
from app.models.external import ExternalFieldSpec, ExternalPreset
from app.models.field import FieldState, Grid3
from app.models.potential import PotentialFamily, PotentialSpec
from app.models.profile import RadialGrid
from app.models.soliton import SolitonParams
from app.physics import lattice
from app.physics.evolution import (
    FollowPath,
    clean_divergence,
    gauss_residual,
    initial_data,
    rhs,
    run,
    world_line,
)
from app.physics.external_field import PureGauge, StaticPath, TabulatedPath
from app.physics.radial_profile import solve_profile_e0
from app.physics.soliton_family import sample_soliton

W0 = 0.5
BOX_TAIL_TOL = 1e-3


@pytest.fixture(scope="module")
def rest_state(family, grid):
    return sample_soliton(family.profile(W0), SolitonParams(omega=W0), grid, BOX_TAIL_TOL)


def test_rest_soliton_rotates_in_phase(family, quartic):
    fine = Grid3(n=64, L=24.0)
    state = sample_soliton(family.profile(W0), SolitonParams(omega=W0), fine, BOX_TAIL_TOL)
    rate = rhs(state, quartic, dealias=False)
    np.testing.assert_allclose(rate.phi, state.psi)
    scale = lattice.l2_norm(state.phi, fine)
    assert lattice.l2_norm(rate.psi + W0**2 * state.phi, fine) < 1e-3 * scale
    assert not np.any(rate.A) and not np.any(rate.E)


def test_short_run_conserves_energy_and_charge(rest_state, quartic):
    config = EvolveConfig(dt=0.1875, t_end=1.5, monitor_stride=4)
    traj = run(rest_state, quartic, config, keep_snapshots=False)
    first, last = traj.monitors[0], traj.monitors[-1]
    assert traj.steps == 8
    assert last.t == pytest.approx(1.5)
    assert abs(last.energy - first.energy) < 1e-5 * abs(first.energy)
    assert last.charge == pytest.approx(first.charge, rel=1e-5)


def test_clean_divergence_restores_gauss_law(charged_family, grid):
    state = sample_soliton(charged_family.coupled(W0), SolitonParams(omega=W0), grid, BOX_TAIL_TOL)
    rng = np.random.default_rng(5)
    bump = np.exp(-0.05 * np.sum(grid.coords**2, axis=0))
    noisy = state.replace(E=state.E + 1e-2 * bump * rng.standard_normal(state.E.shape))
    assert gauss_residual(noisy) > 1e-2
    cleaned = clean_divergence(noisy)
    assert gauss_residual(cleaned) < 1e-3
    assert lattice.l2_norm(lattice.divergence(cleaned.A, grid), grid) < 1e-10


def test_evolution_is_gauge_covariant(charged_family):
    grid = Grid3(n=32, L=16.0)
    state = sample_soliton(charged_family.coupled(W0), SolitonParams(omega=W0), grid, 1e-2)
    gauge = PureGauge.periodic(grid, e=state.e, rate=0.3)
    config = EvolveConfig(dt=0.1, t_end=4.0, monitor_stride=40, dealias=False)
    plain = run(state, charged_family.spec, config, keep_snapshots=False).final
    moved = run(gauge.transform(state), charged_family.spec, config, background=gauge, keep_snapshots=False).final
    back = np.exp(-1j * state.e * gauge.chi(moved.t, grid))
    scale = lattice.l2_norm(plain.phi, grid)
    assert lattice.l2_norm(back * moved.phi - plain.phi, grid) < 1e-3 * scale
    assert lattice.l2_norm(moved.E - plain.E, grid) < 1e-3 * lattice.l2_norm(plain.E, grid)


# k = (2, 1, 0), small enough that the self-interaction only shifts omega^2 by 1e-12
PLANE_OMEGA = np.sqrt(1.0 + 5.0)


def _plane_wave() -> FieldState:
    grid = Grid3(n=16, L=2.0 * np.pi)
    x, y, _ = grid.coords
    phi = 1e-6 * np.exp(1j * (2.0 * x + y))
    return FieldState.vacuum(grid).replace(phi=phi, psi=-1j * PLANE_OMEGA * phi)


def test_plane_wave_follows_lattice_dispersion(quartic):
    state = _plane_wave()
    config = EvolveConfig(dt=0.05, t_end=2.0, monitor_stride=40)
    final = run(state, quartic, config, keep_snapshots=False).final
    expected = state.phi * np.exp(-1j * PLANE_OMEGA * final.t)
    assert final.t == pytest.approx(2.0)
    assert np.max(np.abs(final.phi - expected)) < 1e-4 * 1e-6


def test_time_stepping_is_fourth_order(quartic):
    state = _plane_wave()

    def error(dt):
        final = run(state, quartic, EvolveConfig(dt=dt, t_end=2.0, monitor_stride=100), keep_snapshots=False).final
        return np.max(np.abs(final.phi - state.phi * np.exp(-1j * PLANE_OMEGA * final.t)))

    assert 13.0 <= error(0.1) / error(0.05) <= 19.0


def test_cfl_condition_is_enforced(rest_state, quartic):
    with pytest.raises(PreconditionViolation):
        run(rest_state, quartic, EvolveConfig(dt=0.5, t_end=1.0))


def test_snapshots_and_monitors(rest_state, quartic, tmp_path):
    config = EvolveConfig(dt=0.1875, t_end=0.75, monitor_stride=2, snapshot_stride=2)
    traj = run(rest_state, quartic, config, monitor=lambda s: {"W": 0.0}, snapshot_dir=tmp_path)
    assert [m.t for m in traj.monitors] == pytest.approx([0.0, 0.375, 0.75])
    assert all(m.W == 0.0 for m in traj.monitors)
    assert [p.name for p in traj.snapshot_paths] == ["snap_000000.kgm", "snap_000002.kgm", "snap_000004.kgm"]
    assert len(traj.snapshots) == 3
    reread = lattice.load_snapshot(traj.snapshot_paths[-1])
    np.testing.assert_array_equal(reread.phi, traj.final.phi)


def test_non_finite_state_aborts_with_last_healthy_state(rest_state, quartic):
    phi = rest_state.phi.copy()
    phi[0, 0, 0] = np.nan
    with pytest.raises(EvolutionAborted) as info:
        run(rest_state.replace(phi=phi), quartic, EvolveConfig(dt=0.1875, t_end=0.75))
    assert info.value.status_code == 2
    assert info.value.last_healthy.t == 0.0


def test_follow_path_stays_continuous():
    path = FollowPath((0.0, 0.0, 0.0), (0.1, 0.0, 0.0), relax=1.0)
    assert path(1.0)[0][0] == pytest.approx(0.1)
    path.update(1.0, (0.3, 0.0, 0.0), (0.1, 0.0, 0.0))
    assert path(1.0)[0][0] == pytest.approx(0.1)
    assert path(1.5)[1][0] == pytest.approx(0.3)
    assert path(2.0)[0][0] == pytest.approx(0.4)
    path.update(0.5, (9.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    assert path(2.0)[0][0] == pytest.approx(0.4)


def test_world_line_defaults_to_static_path():
    lam0 = SolitonParams(omega=W0, xi=(1.0, 2.0, 3.0))
    path = world_line(lam0)
    assert isinstance(path, StaticPath)
    np.testing.assert_array_equal(path(5.0)[0], [1.0, 2.0, 3.0])


def test_initial_data_refuses_unstable_soliton(family, grid):
    with pytest.raises(LeftStableSet):
        initial_data(family.profile(W0), SolitonParams(omega=W0), None, grid, 0.0, box_tail_tol=BOX_TAIL_TOL)


def test_initial_data_background_vanishes_at_centre(family, grid):
    lam0 = SolitonParams(omega=W0, xi=(1.0, 0.0, 0.0))
    external = ExternalFieldSpec(preset=ExternalPreset.UNIFORM_E, amplitude=0.1, e=0.05)
    state, gauge = initial_data(
        family.profile(W0), lam0, external, grid, 0.05, require_stable=False, box_tail_tol=BOX_TAIL_TOL
    )
    assert state.e == 0.05
    assert state.provenance["external"]["preset"] == "uniform-E"
    a0, a = gauge.potentials(0.0, np.array([[1.0], [0.0], [0.0]]))
    assert abs(a0[0]) < 1e-12
    assert np.max(np.abs(a)) < 1e-12


def test_run_drives_the_gauge_clock(family, grid, quartic):
    lam0 = SolitonParams(omega=W0, xi=(0.0, 0.0, 1.0))
    external = ExternalFieldSpec(preset=ExternalPreset.UNIFORM_E, amplitude=0.1, e=0.05)
    state, gauge = initial_data(
        family.profile(W0), lam0, external, grid, 0.05, require_stable=False, box_tail_tol=BOX_TAIL_TOL
    )
    config = EvolveConfig(dt=0.1875, t_end=0.75, monitor_stride=4)
    traj = run(state, quartic, config, background=gauge, keep_snapshots=False)
    assert gauge.t == pytest.approx(traj.final.t)
    assert [t for t, _ in gauge.history] == pytest.approx([0.1875, 0.375, 0.5625, 0.75])
    # a0(xi) = -E . xi is constant along the static path
    assert gauge.integral == pytest.approx(-0.075, rel=1e-9)


@pytest.fixture(scope="module")
def subcritical():
    return PotentialSpec(family=PotentialFamily.PURE_POWER, m=1.0, coefficients=(1.0, 3.2))


@pytest.mark.slow
def test_stable_soliton_persists(subcritical):
    omega = 0.9
    profile = solve_profile_e0(subcritical, omega, RadialGrid.for_omega(1.0, omega, n=2048))
    grid = Grid3(n=64, L=40.0)
    state, _ = initial_data(profile, SolitonParams(omega=omega), None, grid, 0.0, box_tail_tol=1e-4)
    traj = run(state, subcritical, EvolveConfig(dt=0.15, t_end=30.0, monitor_stride=20), keep_snapshots=False)
    first, last = traj.monitors[0], traj.monitors[-1]
    assert abs(last.energy - first.energy) < 1e-4 * abs(first.energy)
    assert last.charge == pytest.approx(first.charge, rel=1e-4)
    assert np.max(np.abs(traj.final.phi)) == pytest.approx(profile.f0_center, rel=2e-2)


@pytest.mark.slow
def test_boosted_soliton_is_transported(subcritical):
    omega = 0.9
    profile = solve_profile_e0(subcritical, omega, RadialGrid.for_omega(1.0, omega, n=2048))
    grid = Grid3(n=64, L=40.0)
    state, _ = initial_data(profile, SolitonParams(omega=omega, u=(0.2, 0.0, 0.0)), None, grid, 0.0, box_tail_tol=1e-4)
    final = run(state, subcritical, EvolveConfig(dt=0.15, t_end=5.1), keep_snapshots=False).final
    rho = lattice.charge_density(final.phi, final.psi)
    centre = np.tensordot(grid.coords, rho, axes=([1, 2, 3], [0, 1, 2])) / np.sum(rho)
    np.testing.assert_allclose(centre, [0.2 * final.t, 0.0, 0.0], atol=2e-2)


def test_tabulated_world_line_from_track():
    class Track:
        times = [0.0, 1.0, 2.0]
        lambdas = [[W0, 0.0, 0.1 * t, 0.0, 0.0, 0.1, 0.0, 0.0] for t in (0.0, 1.0, 2.0)]

    path = world_line(SolitonParams(omega=W0), track=Track())
    assert isinstance(path, TabulatedPath)
    assert path(1.5)[0][0] == pytest.approx(0.15)
