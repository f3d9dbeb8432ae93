import numpy as np
import pytest

from app.core.errors import BoxTooSmall, DomainError, PreconditionViolation
from app.models.external import ExternalFieldSpec, ExternalPreset
from app.models.field import Grid3
from app.models.soliton import OMEGA, PerturbationState, SolitonParams
from app.physics import lattice
from app.physics.evolution import gauss_residual
from app.physics.external_field import StaticPath, WorldLineGauge
from app.physics.soliton_family import (
    SolitonFamily,
    boost_matrix,
    check_box,
    dlambda_soliton,
    gamma,
    identity_residuals,
    quadratic_forms,
    sample_soliton,
    sample_with_phase,
    v0,
    wtilde_parts,
)
from app.physics.spectral_stability import q_value

W0 = 0.5
BOX_TAIL_TOL = 1e-3
MOVING = SolitonParams(omega=W0, theta=0.3, xi=(0.4, -0.2, 0.1), u=(0.1, 0.0, 0.05))


def _random_perturbation(grid: Grid3, seed: int = 11) -> PerturbationState:
    rng = np.random.default_rng(seed)
    r2 = np.sum(grid.coords**2, axis=0)
    bump = np.exp(-0.1 * r2)
    shape = (grid.n,) * 3

    def cplx():
        return lattice.dealias(bump * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)), grid)

    return PerturbationState(
        grid=grid,
        v=cplx(),
        w=cplx(),
        A_tilde=lattice.leray_project(bump * rng.standard_normal((3,) + shape), grid),
        E_tilde=lattice.leray_project(bump * rng.standard_normal((3,) + shape), grid),
    )


def test_gamma_and_boost():
    assert gamma((0.6, 0.0, 0.0)) == pytest.approx(1.25)
    np.testing.assert_allclose(boost_matrix((0.6, 0.0, 0.0)), np.diag([1.25, 1.0, 1.0]))
    np.testing.assert_allclose(boost_matrix((0.0, 0.0, 0.0)), np.eye(3))
    with pytest.raises(DomainError):
        gamma((0.8, 0.6, 0.0))


def test_free_flow_generator():
    lam = SolitonParams(omega=0.5, u=(0.6, 0.0, 0.0))
    np.testing.assert_allclose(v0(lam), [0.0, 0.4, 0.6, 0.0, 0.0, 0.0, 0.0, 0.0])


def test_rest_soliton_sample(family, grid):
    profile = family.profile(W0)
    lam = SolitonParams(omega=W0, theta=0.7)
    state = sample_soliton(profile, lam, grid, BOX_TAIL_TOL)
    centre = (grid.n // 2,) * 3
    assert state.phi[centre] == pytest.approx(profile.f0_center * np.exp(0.7j), rel=1e-10)
    np.testing.assert_allclose(state.psi, 1j * W0 * state.phi, atol=1e-12)
    assert not np.any(state.A) and not np.any(state.E)


def test_small_box_is_rejected(family):
    with pytest.raises(BoxTooSmall):
        check_box(family.profile(W0), Grid3(n=32, L=6.0), BOX_TAIL_TOL)


def test_profile_frequency_must_match(family, grid):
    with pytest.raises(PreconditionViolation):
        sample_soliton(family.profile(W0), SolitonParams(omega=0.6), grid, BOX_TAIL_TOL)


@pytest.mark.parametrize("u", [(0.0, 0.0, 0.0), (0.3, 0.0, 0.0)])
def test_lattice_charge_is_lorentz_invariant(family, grid, u):
    profile = family.profile(W0)
    state = sample_soliton(profile, SolitonParams(omega=W0, u=u), grid, BOX_TAIL_TOL)
    assert lattice.total_charge(state) == pytest.approx(q_value(profile), rel=2e-3)


@pytest.mark.parametrize("lam", [SolitonParams(omega=W0), MOVING])
def test_co_moving_identities(family, lam):
    fine = Grid3(n=64, L=24.0)
    assert np.all(identity_residuals(family.profile(W0), lam, fine, family.domega(W0)) < 1e-2)


def test_parameter_derivatives_match_finite_differences(family, grid):
    profile = family.profile(W0)
    basis = dlambda_soliton(profile, MOVING, grid, family.domega(W0))
    _, phase = sample_with_phase(profile, MOVING, grid, BOX_TAIL_TOL)
    strip = np.exp(-1j * phase)
    h = 1e-4
    for index in range(1, 8):
        up = sample_soliton(profile, MOVING.shifted(index, h), grid, BOX_TAIL_TOL)
        down = sample_soliton(profile, MOVING.shifted(index, -h), grid, BOX_TAIL_TOL)
        fd_phi = strip * (up.phi - down.phi) / (2.0 * h)
        fd_psi = strip * (up.psi - down.psi) / (2.0 * h)
        dphi, dpsi = basis[index]
        assert lattice.l2_norm(fd_phi - dphi, grid) < 1e-4 * lattice.l2_norm(dphi, grid)
        assert lattice.l2_norm(fd_psi - dpsi, grid) < 1e-4 * lattice.l2_norm(dpsi, grid)


def test_frequency_derivative_matches_finite_difference(family, grid):
    h = 1e-4
    lam = SolitonParams(omega=W0)
    dphi, _ = dlambda_soliton(family.profile(W0), lam, grid, family.domega(W0))[OMEGA]
    up = sample_soliton(family.profile(W0 + h), lam.shifted(OMEGA, h), grid, BOX_TAIL_TOL)
    down = sample_soliton(family.profile(W0 - h), lam.shifted(OMEGA, -h), grid, BOX_TAIL_TOL)
    fd = (up.phi - down.phi) / (2.0 * h)
    assert lattice.l2_norm(fd - dphi, grid) < 1e-3 * lattice.l2_norm(dphi, grid)


def test_energy_functional_is_quadratic(family, grid):
    profile = family.profile(W0)
    assert quadratic_forms(PerturbationState.zero(grid), MOVING, profile) == (0.0, 0.0, 0.0)
    pert = _random_perturbation(grid)
    W1 = quadratic_forms(pert, MOVING, profile)[0]
    W2 = quadratic_forms(pert.scaled(2.0), MOVING, profile)[0]
    assert W2 == pytest.approx(4.0 * W1, rel=1e-10)


def test_coupled_functional_reduces_to_w_without_coupling(family, grid):
    pert = _random_perturbation(grid)
    parts = wtilde_parts(pert, MOVING, family.profile(W0))
    assert parts["cubic"] == 0.0
    assert parts["quartic"] == 0.0
    assert parts["total"] == pytest.approx(parts["W"], rel=1e-12)


def test_coupled_functional_has_quartic_part(charged_family, grid):
    pert = _random_perturbation(grid)
    parts = wtilde_parts(pert, MOVING, charged_family.profile(W0), coupled=charged_family.coupled(W0))
    assert parts["quartic"] > 0.0
    doubled = wtilde_parts(pert.scaled(2.0), MOVING, charged_family.profile(W0), coupled=charged_family.coupled(W0))
    assert doubled["quartic"] == pytest.approx(16.0 * parts["quartic"], rel=1e-10)
    assert doubled["cubic"] == pytest.approx(8.0 * parts["cubic"], rel=1e-10)


def test_family_caches_profiles(family):
    assert family.profile(W0) is family.profile(W0)
    assert family.coupled(W0) is family.profile(W0)
    assert family.domega(W0) is family.domega(W0)


def test_charged_sample_satisfies_gauss_law(charged_family, grid):
    lam = SolitonParams(omega=W0, u=(0.2, 0.0, 0.0))
    state = sample_soliton(charged_family.coupled(W0), lam, grid, BOX_TAIL_TOL)
    assert state.e == 0.05
    assert gauss_residual(state) < 1e-3
    assert lattice.l2_norm(lattice.divergence(state.A, grid), grid) < 1e-8


def test_sample_is_phase_and_translation_equivariant(charged_family, grid):
    profile = charged_family.coupled(W0)
    lam = SolitonParams(omega=W0, u=(0.0, 0.0, 0.1))
    base = sample_soliton(profile, lam, grid, BOX_TAIL_TOL)
    rotated = sample_soliton(profile, lam.model_copy(update={"theta": 0.4}), grid, BOX_TAIL_TOL)
    np.testing.assert_allclose(rotated.phi, np.exp(0.4j) * base.phi, atol=1e-12)
    np.testing.assert_allclose(rotated.psi, np.exp(0.4j) * base.psi, atol=1e-12)
    np.testing.assert_allclose(rotated.E, base.E, atol=1e-12)
    moved = sample_soliton(profile, lam.model_copy(update={"xi": (3 * grid.h, 0.0, 0.0)}), grid, BOX_TAIL_TOL)
    for name in ("phi", "psi"):
        np.testing.assert_allclose(getattr(moved, name), np.roll(getattr(base, name), 3, axis=0), atol=1e-10)
    for name in ("A", "E"):
        np.testing.assert_allclose(getattr(moved, name), np.roll(getattr(base, name), 3, axis=1), atol=1e-10)


def test_quadratic_form_at_rest_without_scalar_part(family, grid):
    pert = _random_perturbation(grid)
    pert = pert.model_copy(update={"v": np.zeros_like(pert.v)})
    W, K, Xi = quadratic_forms(pert, SolitonParams(omega=W0), family.profile(W0))
    curl_A = lattice.curl(pert.A_tilde, grid)
    assert Xi == pytest.approx(0.5 * lattice.l2_inner(pert.w, pert.w, grid), rel=1e-12)
    expected_K = 0.5 * (lattice.l2_inner(pert.E_tilde, pert.E_tilde, grid) + lattice.l2_inner(curl_A, curl_A, grid))
    assert K == pytest.approx(expected_K, rel=1e-12)
    assert W == pytest.approx(K + Xi)


def test_coupled_functional_departs_from_w_at_first_order(quartic, radial_grid, charged_family, grid):
    external = ExternalFieldSpec(preset=ExternalPreset.UNIFORM_B, amplitude=0.1, delta=1.0)
    background = WorldLineGauge(spec=external, path=StaticPath(MOVING.xi))
    pert = _random_perturbation(grid).scaled(1e-2)

    def departure(family):
        parts = wtilde_parts(pert, MOVING, family.profile(W0), background, family.coupled(W0))
        return abs(parts["total"] - parts["W"])

    ratio = departure(charged_family) / departure(SolitonFamily(quartic, radial_grid, 0.025))
    assert 1.6 <= ratio <= 2.4
