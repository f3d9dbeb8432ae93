import numpy as np
import pytest

from app.core.errors import DomainError, PreconditionViolation, TailUnderflow
from app.models.potential import PotentialFamily, PotentialSpec
from app.models.profile import RadialGrid
from app.physics.radial_profile import (
    BACKWARD_TOL,
    RESIDUAL_TOL,
    RadialStencil,
    backward_error,
    decay_rate,
    fit_tail,
    lplus_bands,
    solve_domega,
    solve_profile_coupled,
    solve_profile_e0,
)
from app.physics.spectral_stability import dq_domega


def test_quartic_profile_residual_and_tail(profile_08):
    assert profile_08.residual_norm < RESIDUAL_TOL
    fit = decay_rate(profile_08)
    assert fit.rate == pytest.approx(0.6, rel=0.02)


def test_ground_state_is_positive_and_decreasing(profile_08):
    f = profile_08.f
    assert np.all(f[:-1] > 0)
    assert np.all(np.diff(f) < 1e-12)
    assert profile_08.f0_center == f[0]


def test_fit_tail_is_exact_for_yukawa_tail():
    r = np.linspace(5.0, 20.0, 200)
    fit = fit_tail(r, 3.0 * np.exp(-0.7 * r) / r)
    assert fit.rate == pytest.approx(0.7, abs=1e-10)
    assert fit.power == pytest.approx(-1.0, abs=1e-8)


def test_fit_tail_refuses_underflowed_values():
    r = np.linspace(1.0, 2.0, 10)
    with pytest.raises(TailUnderflow):
        fit_tail(r, np.full_like(r, 1e-300))


def test_outer_radius_must_cover_twelve_decay_lengths(quartic):
    with pytest.raises(PreconditionViolation):
        solve_profile_e0(quartic, 0.8, RadialGrid(n=512, r_max=5.0))


def test_frequency_outside_gap_is_rejected(quartic):
    with pytest.raises(DomainError):
        RadialGrid.for_omega(1.0, 1.2)
    with pytest.raises(PreconditionViolation):
        solve_profile_e0(quartic, 1.2, RadialGrid(n=512, r_max=40.0))


def test_continuation_from_nearby_frequency(quartic, profile_08):
    near = solve_profile_e0(quartic, 0.79, profile_08.grid)
    continued = solve_profile_e0(quartic, 0.8, profile_08.grid, guess=near)
    assert continued.f0_center == pytest.approx(profile_08.f0_center, rel=1e-9)


def test_domega_matches_finite_difference(quartic, profile_08):
    h = 1e-4
    g = solve_domega(quartic, profile_08).g
    up = solve_profile_e0(quartic, 0.8 + h, profile_08.grid, guess=profile_08).f
    down = solve_profile_e0(quartic, 0.8 - h, profile_08.grid, guess=profile_08).f
    fd = (up - down) / (2.0 * h)
    assert np.max(np.abs(fd - g)) < 1e-4 * np.max(np.abs(g))


def test_domega_needs_uncoupled_profile(quartic, profile_08):
    coupled = solve_profile_coupled(quartic, 0.8, 0.05, profile_08.grid, base=profile_08)
    with pytest.raises(PreconditionViolation):
        solve_domega(quartic, coupled)


def test_coupled_profile_shift_is_second_order(quartic, profile_08):
    stencil = RadialStencil.on(profile_08.grid)

    def shift(e):
        coupled = solve_profile_coupled(quartic, 0.8, e, profile_08.grid, base=profile_08)
        assert coupled.alpha_residual_norm < RESIDUAL_TOL
        return np.sqrt(stencil.quad((coupled.f - profile_08.f) ** 2))

    ratio = shift(0.05) / shift(0.025)
    assert 3.2 <= ratio <= 4.8


def test_coupled_profile_at_zero_coupling_is_the_base(quartic, profile_08):
    assert solve_profile_coupled(quartic, 0.8, 0.0, profile_08.grid, base=profile_08) is profile_08


def test_domega_on_stable_branch_has_roundoff_backward_error():
    spec = PotentialSpec(family=PotentialFamily.PURE_POWER, m=1.0, coefficients=(1.0, 3.2))
    profile = solve_profile_e0(spec, 0.9, RadialGrid.for_omega(1.0, 0.9, n=2048))
    solution = solve_domega(spec, profile)
    assert solution.residual_norm < BACKWARD_TOL
    assert np.all(np.isfinite(solution.g))
    assert dq_domega(profile, solution.g) < 0.0


def test_backward_error_is_zero_for_an_exact_product(profile_08):
    stencil, diag, off = lplus_bands(profile_08)
    x = profile_08.f
    assert backward_error(stencil, diag, off, x, stencil.apply(diag, off, x)) == 0.0
    assert backward_error(stencil, diag, off, x, np.zeros_like(x)) > 0.1


def test_coupled_potential_stays_between_zero_and_frequency_over_coupling(quartic, profile_08):
    e = 0.05
    coupled = solve_profile_coupled(quartic, 0.8, e, profile_08.grid, base=profile_08)
    assert np.min(coupled.alpha) >= 0.0
    assert np.max(coupled.alpha) <= 0.8 / e


def test_coupling_barely_moves_the_decay_rate(quartic, profile_08):
    coupled = solve_profile_coupled(quartic, 0.8, 0.05, profile_08.grid, base=profile_08)
    assert decay_rate(coupled).rate == pytest.approx(decay_rate(profile_08).rate, rel=0.05)


def test_central_amplitude_converges_at_second_order(quartic, profile_08):
    r_max = profile_08.grid.r_max
    f0 = [solve_profile_e0(quartic, 0.8, RadialGrid(n=n, r_max=r_max)).f0_center for n in (513, 1025, 2049)]
    ratio = (f0[0] - f0[1]) / (f0[1] - f0[2])
    assert 3.0 <= ratio <= 5.0
