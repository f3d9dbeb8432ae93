import logging

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.errors import ArtifactError
from app.models.field import FieldState, Grid3
from app.physics import lattice


@pytest.fixture(scope="module")
def small() -> Grid3:
    return Grid3(n=16, L=2.0 * np.pi)


@pytest.fixture(scope="module")
def rng() -> np.random.Generator:
    return np.random.default_rng(7)


def test_grid_size_must_be_power_of_two():
    with pytest.raises(ValidationError):
        Grid3(n=24, L=10.0)


def test_gradient_of_plane_wave(small):
    x, y, _ = small.coords
    u = np.sin(2.0 * x) * np.cos(y)
    grad = lattice.gradient(u, small)
    np.testing.assert_allclose(grad[0], 2.0 * np.cos(2.0 * x) * np.cos(y), atol=1e-12)
    np.testing.assert_allclose(grad[1], -np.sin(2.0 * x) * np.sin(y), atol=1e-12)
    np.testing.assert_allclose(lattice.laplacian(u, small), -5.0 * u, atol=1e-11)


def test_vector_calculus_identities(small, rng):
    u = rng.standard_normal((16, 16, 16))
    v = rng.standard_normal((3, 16, 16, 16))
    assert np.max(np.abs(lattice.curl(lattice.gradient(u, small), small))) < 1e-10
    assert np.max(np.abs(lattice.divergence(lattice.curl(v, small), small))) < 1e-10


def test_poisson_solve_inverts_laplacian(small, rng):
    rho = rng.standard_normal((16, 16, 16)) + 0.3
    solved = lattice.poisson_solve(rho, small)
    assert not solved.neutral
    assert solved.mean == pytest.approx(float(np.mean(rho)))
    assert abs(np.mean(solved.u)) < 1e-12
    np.testing.assert_allclose(-lattice.laplacian(solved.u, small), rho - solved.mean, atol=1e-10)
    assert lattice.poisson_solve(rho - np.mean(rho), small).neutral


def test_poisson_solve_with_metric(small, rng):
    rho = rng.standard_normal((16, 16, 16))
    rho -= rho.mean()
    metric = np.diag([0.5, 1.0, 2.0])
    u = lattice.poisson_solve(rho, small, metric=metric).u
    flux = np.tensordot(metric, lattice.gradient(u, small), axes=(1, 0))
    residual = -lattice.divergence(flux, small) - rho
    # modes with no odd wavenumber are invisible to first derivatives
    kw = lattice.wavenumbers(small)
    visible = lattice.ifftn(np.where(kw.k2_odd > 0, lattice.fftn(residual), 0.0), real=True)
    assert np.max(np.abs(visible)) < 1e-10


def test_leray_projection_is_divergence_free_and_idempotent(small, rng):
    v = rng.standard_normal((3, 16, 16, 16))
    p = lattice.leray_project(v, small)
    assert np.max(np.abs(lattice.divergence(p, small))) < 1e-10
    np.testing.assert_allclose(lattice.leray_project(p, small), p, atol=1e-12)


def test_dealias_keeps_low_modes_and_removes_high(small):
    x, _, _ = small.coords
    low = np.cos(2.0 * x)
    high = np.cos(7.0 * x)
    np.testing.assert_allclose(lattice.dealias(low, small), low, atol=1e-12)
    assert np.max(np.abs(lattice.dealias(high, small))) < 1e-12


def test_l2_norm_of_constant(small):
    assert lattice.l2_norm(np.ones((16, 16, 16)), small) == pytest.approx(small.L**1.5)


def test_charge_of_rotating_gaussian(grid):
    r2 = np.sum(grid.coords**2, axis=0)
    f = np.exp(-0.25 * r2)
    state = FieldState.vacuum(grid).replace(phi=f.astype(complex), psi=0.5j * f)
    # <i f, 0.5 i f> = 0.5 f^2 and int exp(-r^2 / 2) = (2 pi)^(3/2)
    assert lattice.total_charge(state) == pytest.approx(0.5 * (2.0 * np.pi) ** 1.5, rel=1e-8)


def test_vacuum_has_zero_energy(grid, quartic):
    state = FieldState.vacuum(grid)
    assert lattice.energy(state, quartic) == 0.0
    assert lattice.energy_norm(state) == 0.0


def test_snapshot_round_trip(tmp_path, rng):
    grid = Grid3(n=8, L=3.0)
    state = FieldState(
        grid=grid,
        t=1.25,
        e=0.05,
        phi=rng.standard_normal((8, 8, 8)) + 1j * rng.standard_normal((8, 8, 8)),
        psi=rng.standard_normal((8, 8, 8)) + 1j * rng.standard_normal((8, 8, 8)),
        A=rng.standard_normal((3, 8, 8, 8)),
        E=rng.standard_normal((3, 8, 8, 8)),
    )
    loaded = lattice.load_snapshot(lattice.save_snapshot(state, tmp_path / "snap_000000.kgm"))
    assert loaded.grid == grid
    assert (loaded.t, loaded.e) == (1.25, 0.05)
    for name in ("phi", "psi", "A", "E"):
        np.testing.assert_array_equal(getattr(loaded, name), getattr(state, name))


def test_snapshot_rejects_foreign_file(tmp_path):
    path = tmp_path / "bad.kgm"
    path.write_bytes(b"\0" * 64)
    with pytest.raises(ArtifactError):
        lattice.load_snapshot(path)


def test_parseval(small, rng):
    u = rng.standard_normal((16, 16, 16)) + 1j * rng.standard_normal((16, 16, 16))
    spectral = float(np.sum(np.abs(lattice.fftn(u)) ** 2)) / small.n**3 * small.cell_volume
    assert lattice.l2_norm(u, small) ** 2 == pytest.approx(spectral, rel=1e-12)


def test_constant_source_is_removed_and_reported(small, caplog):
    logger = logging.getLogger("app.physics.lattice")
    logger.addHandler(caplog.handler)
    try:
        with caplog.at_level(logging.DEBUG, logger="app.physics.lattice"):
            first = lattice.poisson_solve(np.full((16, 16, 16), 2.5), small, source="uniform test charge")
            lattice.poisson_solve(np.full((16, 16, 16), 2.5), small, source="uniform test charge")
    finally:
        logger.removeHandler(caplog.handler)
    assert not first.neutral
    assert first.mean == pytest.approx(2.5)
    assert np.max(np.abs(first.u)) < 1e-14
    reports = list(dict.fromkeys(r for r in caplog.records if "uniform test charge" in r.getMessage()))
    assert [r.levelno for r in reports[:2]] == [logging.WARNING, logging.DEBUG]


def test_truncated_snapshot_is_an_artifact_error(tmp_path):
    path = lattice.save_snapshot(FieldState.vacuum(Grid3(n=8, L=3.0)), tmp_path / "snap_000000.kgm")
    raw = path.read_bytes()
    for size in (len(raw) - 8, 10):
        path.write_bytes(raw[:size])
        with pytest.raises(ArtifactError) as info:
            lattice.load_snapshot(path)
        assert info.value.status_code == 1
    with pytest.raises(ArtifactError):
        lattice.load_snapshot(tmp_path / "absent.kgm")
