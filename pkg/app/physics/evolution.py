import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from app.core.errors import EvolutionAborted, LeftStableSet
from app.models.evolution import EvolveConfig, MonitorRecord, Trajectory
from app.models.external import ExternalFieldSpec, ExternalPreset
from app.models.field import FieldState, Grid3
from app.models.potential import PotentialSpec
from app.models.profile import RadialProfile
from app.models.soliton import SolitonParams
from app.physics import lattice
from app.physics.external_field import Background, StaticPath, TabulatedPath, WorldLineGauge
from app.physics.radial_profile import solve_profile_coupled
from app.physics.soliton_family import BOX_TAIL_TOL, sample_soliton
from app.physics.spectral_stability import is_stable

logger = logging.getLogger(__name__)

Monitor = Callable[[FieldState], dict]


@dataclass(frozen=True)
class A0Solution:
    A0: np.ndarray
    mean: float
    neutral: bool
    residual: float


def _background_fields(background: Background | None, t: float, grid: Grid3) -> tuple[np.ndarray, np.ndarray]:
    shape = (grid.n,) * 3
    if background is None:
        return np.zeros(shape), np.zeros((3,) + shape)
    return background.lattice_potentials(t, grid)


def _background_charge(background: Background | None, t: float, grid: Grid3) -> np.ndarray | float:
    density = getattr(background, "charge_density", None)
    return 0.0 if density is None else density(t, grid)


def gauss_source(state: FieldState, background: Background | None = None, gauss_e_factor: bool = True):
    """<i e phi, psi> + c rho_B with c = e (or 1 with the factor switched off)."""
    c = state.e if gauss_e_factor else 1.0
    return state.e * lattice.charge_density(state.phi, state.psi) + c * _background_charge(background, state.t, state.grid)


def solve_A0(state: FieldState, background: Background | None = None, gauss_e_factor: bool = True) -> A0Solution:
    """Zero-mean A0 with -Lap A0 = <i e phi, psi> + e rho_B."""
    grid = state.grid
    source = gauss_source(state, background, gauss_e_factor)
    if np.ndim(source) == 0:
        source = np.full((grid.n,) * 3, float(source))
    solved = lattice.poisson_solve(source, grid, source="A0")
    scale = lattice.l2_norm(source, grid)
    residual = 0.0
    if scale > 0:
        residual = lattice.l2_norm(-lattice.laplacian(solved.u, grid) - (source - solved.mean), grid) / scale
    return A0Solution(A0=solved.u, mean=solved.mean, neutral=solved.neutral, residual=residual)


def _zero_rates(state: FieldState) -> FieldState:
    return FieldState.vacuum(state.grid, e=state.e, t=state.t)


def rhs(
    state: FieldState,
    spec: PotentialSpec,
    background: Background | None = None,
    gauss_e_factor: bool = True,
    dealias: bool = True,
) -> FieldState:
    """Time derivative of (phi, psi, A, E) in Coulomb gauge, with A0 re-solved from the Gauss law.

    The background enters every covariant derivative as A + a and the scalar potential as A0 + a0.
    """
    grid = state.grid
    e = state.e
    phi, psi = state.phi, state.psi

    def clip(u):
        return lattice.dealias(u, grid) if dealias else u

    a0_b, a_b = _background_fields(background, state.t, grid)
    A0 = solve_A0(state, background, gauss_e_factor).A0
    scalar = A0 + a0_b
    vector = state.A + a_b
    grad_phi = lattice.gradient(phi, grid)
    dphi = psi + 1j * e * clip(scalar * phi)
    cov_lap = lattice.laplacian(phi, grid)
    if e != 0.0:
        cov_lap = cov_lap - clip(2j * e * np.sum(vector * grad_phi, axis=0) + e**2 * np.sum(vector**2, axis=0) * phi)
    self_interaction = clip(spec.beta(np.abs(phi)) * phi)
    dpsi = cov_lap - spec.m**2 * phi + self_interaction + 1j * e * clip(scalar * psi)
    dA = lattice.leray_project(state.E + lattice.gradient(A0, grid), grid)
    dE = lattice.laplacian(state.A, grid)
    if e != 0.0:
        cov = grad_phi - 1j * e * vector * phi[None]
        dE = dE + e * clip(np.imag(np.conj(phi)[None] * cov))
    return FieldState(grid=grid, t=state.t, e=e, phi=dphi, psi=dpsi, A=dA, E=dE)


def _advance(state: FieldState, rate: FieldState, h: float) -> FieldState:
    return state.replace(
        t=state.t + h,
        phi=state.phi + h * rate.phi,
        psi=state.psi + h * rate.psi,
        A=state.A + h * rate.A,
        E=state.E + h * rate.E,
    )


def clean_divergence(state: FieldState, background: Background | None = None, gauss_e_factor: bool = True) -> FieldState:
    """Replace the longitudinal part of E by -grad A0 and re-project A."""
    grid = state.grid
    A0 = solve_A0(state, background, gauss_e_factor).A0
    E = lattice.leray_project(state.E, grid) - lattice.gradient(A0, grid)
    return state.replace(A=lattice.leray_project(state.A, grid), E=E)


def step(
    state: FieldState, spec: PotentialSpec, config: EvolveConfig, background: Background | None = None
) -> FieldState:
    """One classical RK4 step."""
    dt = config.dt

    def f(s):
        return rhs(s, spec, background, config.gauss_e_factor, config.dealias)

    k1 = f(state)
    k2 = f(_advance(state, k1, 0.5 * dt))
    k3 = f(_advance(state, k2, 0.5 * dt))
    k4 = f(_advance(state, k3, dt))
    new = state.replace(
        t=state.t + dt,
        phi=state.phi + dt / 6.0 * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi),
        psi=state.psi + dt / 6.0 * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi),
        A=state.A + dt / 6.0 * (k1.A + 2.0 * k2.A + 2.0 * k3.A + k4.A),
        E=state.E + dt / 6.0 * (k1.E + 2.0 * k2.E + 2.0 * k3.E + k4.E),
    )
    if config.divergence_cleaning:
        new = clean_divergence(new, background, config.gauss_e_factor)
    return new


def gauss_residual(state: FieldState, background: Background | None = None, gauss_e_factor: bool = True) -> float:
    """||div E - <i e phi, psi> - e rho_B|| (zero-mean parts) over the H^1 proxy of E."""
    grid = state.grid
    source = gauss_source(state, background, gauss_e_factor)
    source = source - np.mean(source)
    res = lattice.l2_norm(lattice.divergence(state.E, grid) - source, grid)
    scale = np.sqrt(
        lattice.l2_inner(state.E, state.E, grid)
        + lattice.l2_inner(lattice.gradient(state.E, grid), lattice.gradient(state.E, grid), grid)
    )
    scale = max(float(scale), lattice.l2_norm(source, grid))
    return res / scale if scale > 0 else res


def measure(
    state: FieldState,
    spec: PotentialSpec,
    background: Background | None = None,
    gauss_e_factor: bool = True,
    extra: Optional[Monitor] = None,
) -> MonitorRecord:
    grid = state.grid
    bg = None if background is None else background.lattice_potentials(state.t, grid)
    values = {
        "t": state.t,
        "energy": lattice.energy(state, spec, bg),
        "gauss": gauss_residual(state, background, gauss_e_factor),
        "charge": lattice.total_charge(state),
        "div_A": lattice.l2_norm(lattice.divergence(state.A, grid), grid),
        "norm": lattice.energy_norm(state),
    }
    if extra is not None:
        values.update(extra(state))
    return MonitorRecord(**values)


def advance_clock(background: Background | None, t: float) -> None:
    """Move the gauge accumulator of the background (if it keeps one) forward to t."""
    advance = getattr(background, "advance", None)
    if advance is not None:
        advance(t)


def run(
    initial: FieldState,
    spec: PotentialSpec,
    config: EvolveConfig,
    background: Background | None = None,
    monitor: Optional[Monitor] = None,
    snapshot_dir: Path | None = None,
    keep_snapshots: bool = True,
) -> Trajectory:
    """Integrate to t_end, sampling monitors every `monitor_stride` steps.

    A non-finite state aborts the run; the exception carries the last finite state.
    """
    grid = initial.grid
    config.check_cfl(grid)
    steps = config.steps
    state = initial.copy()
    monitors = [measure(state, spec, background, config.gauss_e_factor, monitor)]
    snapshots: list[FieldState] = []
    paths: list[Path] = []

    def keep(s: FieldState, index: int):
        if keep_snapshots:
            snapshots.append(s.copy())
        if snapshot_dir is not None:
            paths.append(lattice.save_snapshot(s, Path(snapshot_dir) / f"snap_{index:06d}.kgm"))

    if config.snapshot_stride:
        keep(state, 0)
    logger.info("evolving %d steps of dt=%.4g on n=%d, L=%.4g", steps, config.dt, grid.n, grid.L)
    for k in range(1, steps + 1):
        new = step(state, spec, config, background)
        if not new.is_finite():
            raise EvolutionAborted(detail={"step": k, "t": new.t, "reason": "non-finite field"}, last_healthy=state)
        state = new
        advance_clock(background, state.t)
        if k % config.monitor_stride == 0 or k == steps:
            record = measure(state, spec, background, config.gauss_e_factor, monitor)
            monitors.append(record)
            logger.debug("t=%.4f energy=%.12g gauss=%.2e", record.t, record.energy, record.gauss)
        if config.snapshot_stride and k % config.snapshot_stride == 0:
            keep(state, k)
    logger.info("reached t=%.4f; energy %.10g -> %.10g", state.t, monitors[0].energy, monitors[-1].energy)
    return Trajectory(monitors=monitors, snapshots=snapshots, snapshot_paths=paths, final=state, steps=steps)


class FollowPath:
    """World line fed by fitted parameters as they arrive.

    Between updates the path extrapolates linearly; an update at t_k starts a new segment from
    the current extrapolated point so the path stays continuous, relaxing to the fitted position
    over `relax` time units.
    """

    def __init__(self, xi0, u0, relax: float = 1.0):
        self.knots: list[tuple[float, np.ndarray, np.ndarray, np.ndarray]] = [
            (0.0, np.asarray(xi0, dtype=float), np.asarray(u0, dtype=float), np.zeros(3))
        ]
        self.relax = relax

    def __call__(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        t0, x0, u0, jump = self.knots[0]
        for knot in self.knots:
            if knot[0] <= t:
                t0, x0, u0, jump = knot
        s = t - t0
        ramp = min(1.0, s / self.relax) if self.relax > 0 else 1.0
        velocity = u0 + (jump / self.relax if self.relax > 0 and s < self.relax else 0.0)
        return x0 + u0 * s + ramp * jump, velocity

    def update(self, t: float, xi, u) -> None:
        if t < self.knots[-1][0]:
            return
        here, _ = self(t)
        self.knots.append((t, here, np.asarray(u, dtype=float), np.asarray(xi, dtype=float) - here))


def world_line(lam0: SolitonParams, track=None, effective=None):
    """Path for the chi gauge: the fitted track if given, else the effective path, else static."""
    if track is not None and len(track.times) >= 2:
        lambdas = np.asarray(track.lambdas)
        return TabulatedPath(track.times, lambdas[:, 2:5], lambdas[:, 5:8])
    if effective is not None:
        return TabulatedPath(effective.times, effective.xi, effective.u)
    return StaticPath(lam0.xi_array)


def initial_data(
    profile: RadialProfile,
    lam0: SolitonParams,
    external: ExternalFieldSpec | None,
    grid: Grid3,
    e: float,
    path=None,
    require_stable: bool = True,
    box_tail_tol: float = BOX_TAIL_TOL,
) -> tuple[FieldState, WorldLineGauge | None]:
    """Soliton sample with v = w = A~ = E~ = 0, plus the background in the chi gauge.

    The background is returned separately; at t = 0 its potentials vanish at xi(0).
    """
    if require_stable and not is_stable(profile):
        raise LeftStableSet(detail=f"omega={lam0.omega} is outside the stable set")
    if profile.e != e:
        base = profile if profile.e == 0.0 else None
        profile = solve_profile_coupled(profile.potential, profile.omega, e, profile.grid, base=base)
    state = sample_soliton(profile, lam0, grid, box_tail_tol)
    if external is None or external.preset == ExternalPreset.VACUUM:
        return state, None
    gauge = WorldLineGauge(spec=external, path=path if path is not None else StaticPath(lam0.xi_array))
    gauge.advance(0.0)
    state.provenance["external"] = external.model_dump(mode="json")
    return state, gauge
