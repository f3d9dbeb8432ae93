import numpy as np
import pytest
from pydantic import ValidationError

from app.core.errors import PathNotMonotone
from app.models.external import ExternalFieldSpec, ExternalPreset
from app.models.field import FieldState, Grid3
from app.physics.external_field import (
    LinearPath,
    PureGauge,
    StaticPath,
    WorldLineGauge,
    fields,
    maxwell_residual,
    minimum_image,
    scaled_potentials,
    scaling_report,
)


@pytest.fixture
def pulse() -> ExternalFieldSpec:
    return ExternalFieldSpec(
        preset=ExternalPreset.GAUSSIAN_PULSE,
        amplitude=0.5,
        direction=(0.0, 0.0, 1.0),
        propagation=(1.0, 0.0, 0.0),
        width=2.0,
        carrier=1.0,
        delta=0.3,
    )


@pytest.fixture
def points() -> np.ndarray:
    return np.random.default_rng(3).uniform(-3.0, 3.0, size=(3, 6))


def _fd_fields(potentials, t, x, h=1e-5):
    """E = d_t a - grad a0 and B = curl a by centred differences."""
    a0, a = potentials(t, x)
    dt_a = (potentials(t + h, x)[1] - potentials(t - h, x)[1]) / (2 * h)
    grad_a0 = np.zeros_like(x)
    grad_a = np.zeros((3,) + x.shape)
    for i in range(3):
        step = np.zeros((3, 1))
        step[i] = h
        p0, pa = potentials(t, x + step)
        m0, ma = potentials(t, x - step)
        grad_a0[i] = (p0 - m0) / (2 * h)
        grad_a[i] = (pa - ma) / (2 * h)
    curl = np.stack(
        [grad_a[1, 2] - grad_a[2, 1], grad_a[2, 0] - grad_a[0, 2], grad_a[0, 1] - grad_a[1, 0]]
    )
    return dt_a - grad_a0, curl


def test_uniform_electric_field(points):
    spec = ExternalFieldSpec(preset=ExternalPreset.UNIFORM_E, amplitude=1.0, direction=(0.0, 0.0, 2.0), delta=0.4)
    E, B = fields(spec, 0.7, points)
    np.testing.assert_allclose(E, np.array([[0.0], [0.0], [1.0]]) * np.ones(points.shape[1]))
    assert not np.any(B)


@pytest.mark.parametrize("preset", [ExternalPreset.UNIFORM_E, ExternalPreset.UNIFORM_B, ExternalPreset.GAUSSIAN_PULSE])
def test_fields_derive_from_potentials(pulse, points, preset):
    spec = pulse.model_copy(update={"preset": preset})
    E, B = fields(spec, 1.3, points)
    E_fd, B_fd = _fd_fields(lambda t, x: scaled_potentials(spec, t, x), 1.3, points)
    np.testing.assert_allclose(E_fd, E, atol=1e-7)
    np.testing.assert_allclose(B_fd, B, atol=1e-7)


@pytest.mark.parametrize("preset", [ExternalPreset.UNIFORM_B, ExternalPreset.GAUSSIAN_PULSE])
def test_presets_solve_vacuum_maxwell(pulse, points, preset):
    spec = pulse.model_copy(update={"preset": preset})
    gauss, ampere = maxwell_residual(spec, 0.4, points, e=0.1)
    assert gauss == 0.0
    assert ampere < 1e-4


def test_delta_derived_from_coupling():
    spec = ExternalFieldSpec(preset=ExternalPreset.UNIFORM_E, amplitude=1.0, e=0.08)
    assert spec.delta == pytest.approx(0.08**0.75)
    with pytest.raises(ValidationError):
        ExternalFieldSpec(preset=ExternalPreset.UNIFORM_E, amplitude=1.0, e=0.08, k_exponent=0.6)


def test_pulse_polarization_must_be_transverse():
    with pytest.raises(ValidationError):
        ExternalFieldSpec(preset=ExternalPreset.GAUSSIAN_PULSE, direction=(1.0, 0.0, 0.0), propagation=(1.0, 1.0, 0.0))


def test_uniform_potentials_are_scale_invariant(points):
    spec = ExternalFieldSpec(preset=ExternalPreset.UNIFORM_E, amplitude=1.0)
    rows = scaling_report(spec, [1.0, 0.5, 0.25], points)
    assert rows[0]["sup_a"] == pytest.approx(rows[2]["sup_a"])


def test_pulse_gradient_bound_does_not_grow_as_delta_shrinks(pulse, points):
    rows = scaling_report(pulse, [0.4, 0.2, 0.1], points)
    bound = 0.5 * (1.0 + 1.0 / pulse.width)
    assert all(row["sup_grad_a"] <= bound for row in rows)


def test_world_line_gauge_vanishes_on_moving_path(pulse):
    path = LinearPath((0.5, 0.0, 0.0), (0.2, 0.1, 0.0))
    gauge = WorldLineGauge(spec=pulse, path=path)
    for t in np.linspace(0.0, 4.0, 9):
        gauge.advance(t)
        xi, _ = path(t)
        a0, a = gauge.potentials(t, xi.reshape(3, 1))
        assert abs(a0[0]) < 1e-8
        assert np.max(np.abs(a)) < 1e-8


def test_world_line_gauge_preserves_fields(pulse, points):
    gauge = WorldLineGauge(spec=pulse, path=LinearPath((0.5, 0.0, 0.0), (0.2, 0.1, 0.0)))
    E, B = fields(pulse, 1.1, points)
    E_fd, B_fd = _fd_fields(gauge.potentials, 1.1, points)
    np.testing.assert_allclose(E_fd, E, atol=1e-7)
    np.testing.assert_allclose(B_fd, B, atol=1e-7)


def test_world_line_gauge_clock_is_monotone(pulse):
    gauge = WorldLineGauge(spec=pulse, path=StaticPath((0.0, 0.0, 0.0)))
    gauge.advance(1.0)
    with pytest.raises(PathNotMonotone):
        gauge.advance(0.5)


def test_uniform_e_chi_integral_on_static_path():
    spec = ExternalFieldSpec(preset=ExternalPreset.UNIFORM_E, amplitude=1.0, delta=1.0)
    gauge = WorldLineGauge(spec=spec, path=StaticPath((1.0, 0.0, 2.0)))
    # a0(xi) = -E . xi = -2 is constant along the path
    assert gauge.advance(3.0) == pytest.approx(-6.0)


def test_periodic_pure_gauge_keeps_modulus():
    grid = Grid3(n=8, L=4.0)
    gauge = PureGauge.periodic(grid, e=0.1, rate=0.3)
    assert 0.1 * gauge.slope[0] * grid.L == pytest.approx(2.0 * np.pi)
    state = FieldState.vacuum(grid, e=0.1).replace(phi=np.full((8, 8, 8), 0.5 + 0.5j))
    moved = gauge.transform(state)
    np.testing.assert_allclose(np.abs(moved.phi), np.abs(state.phi))


def test_minimum_image_wraps_to_nearest_copy():
    x = np.array([[13.0, 11.0], [0.0, 0.0], [0.0, 0.0]])
    disp = minimum_image(x, np.zeros(3), 24.0)
    np.testing.assert_allclose(disp[0], [-11.0, 11.0])
