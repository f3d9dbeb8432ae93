import logging
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from app.core import workers
from app.core.errors import DomainError, EvolutionAborted, KGMError, LeftStableSet, NoConvergence
from app.models.evolution import EvolveConfig, Trajectory
from app.models.field import FieldState, Grid3
from app.models.modulation import FitResult, ModulationTrack, PositivityReport
from app.models.potential import PotentialSpec
from app.models.soliton import OMEGA, THETA, PerturbationState, SolitonParams
from app.physics import lattice
from app.physics.evolution import FollowPath, advance_clock, measure, step
from app.physics.external_field import Background, minimum_image
from app.physics.soliton_family import (
    SolitonFamily,
    alpha_function,
    boost_frame,
    dlambda_soliton,
    profile_function,
    quadratic_forms,
    sample_with_phase,
    v0,
    wtilde_parts,
)

logger = logging.getLogger(__name__)

FIT_TOL = 1e-9
FIT_MAX_ITER = 25
FIT_FD_STEP = 1e-6
BASIN_RADIUS = 0.3
MASS_FD_STEP = 1e-4
_MAX_HALVINGS = 8


@dataclass(frozen=True)
class SolitonSample:
    """Charged soliton on the lattice with its phase and the radial data evaluated at |Z|."""

    state: FieldState
    strip: np.ndarray
    f_e: np.ndarray
    alpha: np.ndarray
    gamma: float


def soliton_sample(lam: SolitonParams, family: SolitonFamily, grid: Grid3) -> SolitonSample:
    coupled = family.coupled(lam.omega)
    state, phase = sample_with_phase(coupled, lam, grid, box_tail_tol=1.0)
    frame = boost_frame(lam, grid)
    f_e = profile_function(coupled)(frame.rho)
    alpha = alpha_function(coupled)(frame.rho) if coupled.e != 0.0 else np.zeros_like(f_e)
    return SolitonSample(state=state, strip=np.exp(-1j * phase), f_e=f_e, alpha=alpha, gamma=frame.gamma)


def _as_state(pert: PerturbationState) -> FieldState:
    return FieldState(grid=pert.grid, phi=pert.v, psi=pert.w, A=pert.A_tilde, E=pert.E_tilde)


def pert_norm(pert: PerturbationState) -> float:
    """||(v, w, A~, E~)|| in the energy norm."""
    return lattice.energy_norm(_as_state(pert))


def decompose(
    state: FieldState, lam: SolitonParams, family: SolitonFamily, sample: SolitonSample | None = None
) -> PerturbationState:
    """Split a lattice state into the charged soliton at lam and the phase-stripped remainder."""
    grid = state.grid
    sample = sample or soliton_sample(lam, family, grid)
    sol = sample.state
    A_rest = state.A - sol.A
    A_tilde = lattice.leray_project(A_rest, grid)
    removed = lattice.l2_norm(A_rest - A_tilde, grid)
    if removed > 1e-8 * max(1.0, lattice.l2_norm(A_rest, grid)):
        logger.debug("decompose: removed longitudinal part %.2e from A~", removed)
    return PerturbationState(
        grid=grid,
        v=sample.strip * (state.phi - sol.phi),
        w=sample.strip * (state.psi - sol.psi),
        A_tilde=A_tilde,
        E_tilde=state.E - sol.E,
    )


def recompose(pert: PerturbationState, lam: SolitonParams, family: SolitonFamily, t: float = 0.0) -> FieldState:
    sample = soliton_sample(lam, family, pert.grid)
    sol = sample.state
    rot = np.conj(sample.strip)
    return sol.replace(
        t=t,
        phi=sol.phi + rot * pert.v,
        psi=sol.psi + rot * pert.w,
        A=sol.A + pert.A_tilde,
        E=sol.E + pert.E_tilde,
    )


def _basis(lam: SolitonParams, family: SolitonFamily, grid: Grid3):
    return dlambda_soliton(family.profile(lam.omega), lam, grid, family.domega(lam.omega))


def _residual_from(pert: PerturbationState, basis) -> np.ndarray:
    grid = pert.grid
    return np.array(
        [lattice.l2_inner(pert.v, dpsi, grid) - lattice.l2_inner(pert.w, dphi, grid) for dphi, dpsi in basis]
    )


def constraint_residual(state: FieldState, lam: SolitonParams, family: SolitonFamily) -> np.ndarray:
    """r_A = <v, d~_A psi_S0> - <w, d~_A phi_S0> for the eight parameter directions."""
    pert = decompose(state, lam, family)
    return _residual_from(pert, _basis(lam, family, state.grid))


def constraint_jacobian(
    state: FieldState, lam: SolitonParams, family: SolitonFamily, step: float = FIT_FD_STEP
) -> np.ndarray:
    """Central-difference d r_A / d lambda_B."""
    jac = np.zeros((8, 8))
    for b in range(8):
        plus = constraint_residual(state, lam.shifted(b, step), family)
        minus = constraint_residual(state, lam.shifted(b, -step), family)
        jac[:, b] = (plus - minus) / (2.0 * step)
    return jac


def gram_matrix(lam: SolitonParams, family: SolitonFamily, grid: Grid3) -> np.ndarray:
    """M(0)_AB = <d~_A psi, d~_B phi> - <d~_A phi, d~_B psi> on the e=0 basis."""
    basis = _basis(lam, family, grid)
    M = np.zeros((8, 8))
    for a, (phi_a, psi_a) in enumerate(basis):
        for b, (phi_b, psi_b) in enumerate(basis):
            M[a, b] = lattice.l2_inner(psi_a, phi_b, grid) - lattice.l2_inner(phi_a, psi_b, grid)
    return M


def mass_matrix(
    lam: SolitonParams, family: SolitonFamily, grid: Grid3, step: float = MASS_FD_STEP
) -> tuple[np.ndarray, np.ndarray]:
    """(M(e), M(0)).

    M(e)_AB = <d~_A psi_S0, e^{-i Theta_C} d_B psi_SC>-type products with the charged soliton
    differentiated by central differences in lambda.
    """
    basis = _basis(lam, family, grid)
    strip = soliton_sample(lam, family, grid).strip
    M_e = np.zeros((8, 8))
    for b in range(8):
        plus = soliton_sample(lam.shifted(b, step), family, grid).state
        minus = soliton_sample(lam.shifted(b, -step), family, grid).state
        dphi = strip * (plus.phi - minus.phi) / (2.0 * step)
        dpsi = strip * (plus.psi - minus.psi) / (2.0 * step)
        for a, (phi_a, psi_a) in enumerate(basis):
            M_e[a, b] = lattice.l2_inner(psi_a, dphi, grid) - lattice.l2_inner(phi_a, dpsi, grid)
    return M_e, gram_matrix(lam, family, grid)


def frequency_phase_block(lam: SolitonParams, family: SolitonFamily, grid: Grid3) -> dict[str, float]:
    """The (omega, theta) entries of M(0) next to d/d omega (omega ||f||^2) from the radial solve."""
    M = gram_matrix(lam, family, grid)
    return {
        "omega_theta": float(M[OMEGA, THETA]),
        "theta_omega": float(M[THETA, OMEGA]),
        "dq_domega": family.dq_domega(lam.omega),
    }


def _background(background: Background | None, t: float, grid: Grid3) -> tuple[np.ndarray, np.ndarray]:
    shape = (grid.n,) * 3
    if background is None:
        return np.zeros(shape), np.zeros((3,) + shape)
    return background.lattice_potentials(t, grid)


def _u_grad(u: np.ndarray, v: np.ndarray, grid: Grid3) -> np.ndarray:
    return np.tensordot(u, lattice.gradient(v, grid), axes=(0, 0))


def _r_op(v, a_chi, lam: SolitonParams, sample: SolitonSample, e: float, grid: Grid3) -> np.ndarray:
    """R v = 2i a.(i gamma (omega - e alpha) u - grad) v - e |a|^2 v."""
    u = lam.u_array
    carrier = sample.gamma * (lam.omega - e * sample.alpha)
    a_dot_u = np.tensordot(u, a_chi, axes=(0, 0))
    a_dot_grad = np.sum(a_chi * lattice.gradient(v, grid), axis=0)
    return 2j * (1j * carrier * a_dot_u * v - a_dot_grad) - e * np.sum(a_chi**2, axis=0) * v


def _s_op(v, lam: SolitonParams, sample: SolitonSample, e: float, grid: Grid3) -> np.ndarray:
    u = lam.u_array
    g = sample.gamma
    alpha = sample.alpha
    u2 = float(u @ u)
    return (
        2j * e * alpha * g * _u_grad(u, v, grid)
        + 1j * e * g * _u_grad(u, alpha, grid) * v
        + 2.0 * e * g**2 * u2 * lam.omega * alpha * v
        - e**2 * (g * alpha) ** 2 * u2 * v
    )


def lorentz_force_term(
    lam: SolitonParams, family: SolitonFamily, grid: Grid3, background: Background | None = None, t: float = 0.0
) -> np.ndarray:
    """F^L_A = <d~_A psi, i e a0 f_e> - <d~_A phi, i e a0 (i gamma (omega - e alpha) - u.grad) f_e + e R f_e>."""
    e = family.e
    a0, a = _background(background, t, grid)
    if e == 0.0 or (not np.any(a0) and not np.any(a)):
        return np.zeros(8)
    sample = soliton_sample(lam, family, grid)
    f_e = sample.f_e
    transported = 1j * sample.gamma * (lam.omega - e * sample.alpha) * f_e - _u_grad(lam.u_array, f_e, grid)
    first = 1j * e * a0 * f_e
    second = 1j * e * a0 * transported + e * _r_op(f_e, a, lam, sample, e, grid)
    basis = _basis(lam, family, grid)
    return np.array(
        [lattice.l2_inner(dpsi, first, grid) - lattice.l2_inner(dphi, second, grid) for dphi, dpsi in basis]
    )


def tilde_a0(pert: PerturbationState, lam: SolitonParams, family: SolitonFamily, sample: SolitonSample | None = None) -> np.ndarray:
    """Zero-mean solution of -Lap A~0 = e <i f_e, w> + e <i v, psi~_SC + w>."""
    grid = pert.grid
    e = family.e
    if e == 0.0:
        return np.zeros((grid.n,) * 3)
    sample = sample or soliton_sample(lam, family, grid)
    psi_sc = sample.strip * sample.state.psi
    source = e * lattice.charge_density(sample.f_e, pert.w) + e * lattice.charge_density(pert.v, psi_sc + pert.w)
    return lattice.poisson_solve(source, grid, source="perturbation A0").u


def force_p(
    state: FieldState, lam: SolitonParams, family: SolitonFamily, background: Background | None = None
) -> np.ndarray:
    """Perturbation-driven force F^p_A from A~0, the R and S operators and the A~ coupling."""
    grid = state.grid
    e = family.e
    if e == 0.0:
        return np.zeros(8)
    sample = soliton_sample(lam, family, grid)
    pert = decompose(state, lam, family, sample)
    v, w = pert.v, pert.w
    a0, a = _background(background, state.t, grid)
    At0 = tilde_a0(pert, lam, family, sample)
    A_sc = sample.state.A
    scalar = sample.gamma * sample.alpha + a0 + At0
    psi_sc = sample.strip * sample.state.psi
    vector = A_sc + a
    At = pert.A_tilde
    big_phi = state.phi
    j2_iv = sample.strip * (
        -2j * e * np.sum(At * lattice.gradient(big_phi, grid), axis=0)
        - e**2 * (2.0 * np.sum(vector * At, axis=0) + np.sum(At**2, axis=0)) * big_phi
    )
    first = 1j * e * At0 * sample.f_e + 1j * e * scalar * v
    second = (
        e * _r_op(v, a, lam, sample, e, grid)
        + _s_op(v, lam, sample, e, grid)
        + j2_iv
        + 1j * e * At0 * psi_sc
        + 1j * e * scalar * w
    )
    basis = _basis(lam, family, grid)
    return np.array(
        [lattice.l2_inner(dpsi, first, grid) - lattice.l2_inner(dphi, second, grid) for dphi, dpsi in basis]
    )


def _admissible(lam_vec: np.ndarray, family: SolitonFamily) -> SolitonParams | None:
    if not 0.0 < lam_vec[OMEGA] ** 2 < family.spec.m**2:
        return None
    try:
        return SolitonParams.from_vector(lam_vec)
    except DomainError:
        return None


def fit_lambda(
    state: FieldState,
    lam_guess: SolitonParams,
    family: SolitonFamily,
    tol: float = FIT_TOL,
    max_iter: int = FIT_MAX_ITER,
    fd_step: float = FIT_FD_STEP,
    basin: float = BASIN_RADIUS,
    stable_guard: bool = True,
) -> FitResult:
    """Newton iteration on the eight constraint residuals, with a finite-difference Jacobian.

    The guess must lie within `basin` of the data, measured as ||perturbation|| / ||soliton||.
    """
    grid = state.grid
    sample = soliton_sample(lam_guess, family, grid)
    scale = lattice.energy_norm(sample.state)
    start = pert_norm(decompose(state, lam_guess, family, sample))
    if start > basin * scale:
        raise NoConvergence(
            detail={"reason": "guess outside basin", "relative_perturbation": start / scale, "basin": basin}
        )
    lam = lam_guess
    res = constraint_residual(state, lam, family)
    norm = float(np.linalg.norm(res))
    iterations = 0
    while norm >= tol:
        if iterations >= max_iter:
            raise NoConvergence(detail={"iterations": iterations, "residual": norm})
        iterations += 1
        jac = constraint_jacobian(state, lam, family, fd_step)
        try:
            delta = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            raise NoConvergence(detail={"iterations": iterations, "reason": "singular constraint Jacobian"})
        base = lam.as_vector()
        step_size = 1.0
        for _ in range(_MAX_HALVINGS):
            trial = _admissible(base + step_size * delta, family)
            if trial is not None:
                trial_res = constraint_residual(state, trial, family)
                trial_norm = float(np.linalg.norm(trial_res))
                if trial_norm < norm or step_size < 2.0**-(_MAX_HALVINGS - 2):
                    break
            step_size *= 0.5
        else:
            raise NoConvergence(detail={"iterations": iterations, "reason": "no admissible Newton step"})
        lam, res, norm = trial, trial_res, trial_norm
        logger.debug("fit iteration %d: |r|=%.3e step=%.3g", iterations, norm, step_size)
    stable = family.is_stable(lam.omega)
    if stable_guard and not stable:
        raise LeftStableSet(detail={"omega": lam.omega, "iterations": iterations})
    final = pert_norm(decompose(state, lam, family))
    logger.debug("fitted lambda after %d iteration(s), |r|=%.2e", iterations, norm)
    return FitResult(lam=lam, residual_norm=norm, iterations=iterations, pert_norm=final, stable=stable)


def flow_guess(lam: SolitonParams, dt: float) -> SolitonParams:
    """lam carried along the free soliton flow V0 for time dt."""
    return SolitonParams.from_vector(lam.as_vector() + dt * v0(lam))


def centroid_guess(state: FieldState, prior: SolitonParams, xi=None, u=None) -> SolitonParams:
    """Initial guess from the charge centroid near the prior position and the phase found there."""
    grid = state.grid
    xi0 = prior.xi_array if xi is None else np.asarray(xi, dtype=float)
    weight = np.abs(state.phi) ** 2
    disp = minimum_image(grid.coords, xi0, grid.L)
    xi_new = xi0 + np.sum(disp * weight, axis=(1, 2, 3)) / max(float(np.sum(weight)), 1e-300)
    index = tuple(int(np.rint((x + 0.5 * grid.L) / grid.h)) % grid.n for x in xi_new)
    theta = float(np.angle(state.phi[index]))
    xi_new = (xi_new + 0.5 * grid.L) % grid.L - 0.5 * grid.L
    u_new = prior.u if u is None else tuple(float(c) for c in u)
    return SolitonParams(omega=prior.omega, theta=theta, xi=tuple(xi_new), u=u_new)


def _flag(fit: FitResult, e: float) -> str:
    if not fit.stable:
        return "left_stable_set"
    if e > 0.0 and fit.pert_norm**2 > e:
        return "stability_budget"
    return ""


def _fit_sample(state: FieldState, guess: SolitonParams, family: SolitonFamily, fit_kwargs: dict):
    fit = fit_lambda(state, guess, family, stable_guard=False, **fit_kwargs)
    pert = decompose(state, fit.lam, family)
    W = quadratic_forms(pert, fit.lam, family.profile(fit.lam.omega))[0]
    return fit, W


def _indexed(exc: KGMError, index: int, t: float) -> KGMError:
    raised = exc.__class__(detail={"index": index, "t": t, "cause": exc.detail})
    raised.__cause__ = exc
    return raised


def _load(item) -> FieldState:
    return item if isinstance(item, FieldState) else lattice.load_snapshot(Path(item))


def track(
    snapshots: Iterable[FieldState | Path | str],
    lam0: SolitonParams,
    family: SolitonFamily,
    **fit_kwargs,
) -> ModulationTrack:
    """Fit lambda at every snapshot, warm-starting each fit from the previous one moved along V0."""
    result = ModulationTrack(e=family.e)
    lam = lam0
    t_prev = None
    for index, item in enumerate(snapshots):
        state = _load(item)
        guess = lam if t_prev is None else flow_guess(lam, state.t - t_prev)
        try:
            fit, W = _fit_sample(state, guess, family, fit_kwargs)
        except KGMError as exc:
            raise _indexed(exc, index, state.t)
        flag = _flag(fit, family.e)
        if flag:
            logger.warning("t=%.4f flagged %s (pert norm %.3e)", state.t, flag, fit.pert_norm)
        result.append(state.t, fit, W, flag)
        lam, t_prev = fit.lam, state.t
    logger.info("tracked %d snapshot(s); max residual %.2e", len(result.times), max(result.residual_norms, default=0.0))
    return result


def modulation_equation_residual(
    result: ModulationTrack,
    states: list[FieldState],
    family: SolitonFamily,
    background: Background | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """M(0)(lam' - V0) - (F^L + F^p) at interior samples, with lam' by central differences.

    Returns (times, residuals) with residuals of shape (k, 8).
    """
    lambdas = result.array.copy()
    lambdas[:, THETA] = result.theta_unwrapped()
    times = np.asarray(result.times)
    rows = []
    for i in range(1, len(times) - 1):
        lam = result.params(i)
        grid = states[i].grid
        rate = (lambdas[i + 1] - lambdas[i - 1]) / (times[i + 1] - times[i - 1])
        force = lorentz_force_term(lam, family, grid, background, times[i]) + force_p(states[i], lam, family, background)
        rows.append(gram_matrix(lam, family, grid) @ (rate - v0(lam)) - force)
    return times[1:-1], np.asarray(rows).reshape(-1, 8)


def _smooth_random(rng: np.random.Generator, grid: Grid3, k_cut: float) -> np.ndarray:
    shape = (grid.n,) * 3
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    kw = lattice.wavenumbers(grid)
    filtered = lattice.fftn(noise) * np.exp(-0.5 * kw.k2 / k_cut**2)
    return lattice.ifftn(filtered, real=False)


def project_constraints(
    pert: PerturbationState, lam: SolitonParams, family: SolitonFamily, basis=None, M0: np.ndarray | None = None
) -> PerturbationState:
    """Add tangent directions so that all eight constraint residuals vanish."""
    basis = basis if basis is not None else _basis(lam, family, pert.grid)
    M0 = M0 if M0 is not None else gram_matrix(lam, family, pert.grid)
    coeffs = np.linalg.solve(M0, -_residual_from(pert, basis))
    v = pert.v + sum(c * dphi for c, (dphi, _) in zip(coeffs, basis))
    w = pert.w + sum(c * dpsi for c, (_, dpsi) in zip(coeffs, basis))
    return pert.model_copy(update={"v": v, "w": w})


def pos_proxy(
    lam: SolitonParams,
    family: SolitonFamily,
    grid: Grid3,
    samples: int = 100,
    seed: int = 0,
    k_cut: float = 1.0,
) -> PositivityReport:
    """Sampled lower bound of Xi / ||(v, w)||^2 over random smooth perturbations on the constraint set.

    Also records C with ||(v, w, A~, E~)||^2 <= C W over the same samples.
    """
    rng = np.random.default_rng(seed)
    profile = family.profile(lam.omega)
    basis = _basis(lam, family, grid)
    M0 = gram_matrix(lam, family, grid)
    envelope = profile_function(profile)(boost_frame(lam, grid).rho) / profile.f0_center
    ratios = []
    equivalence = []
    for _ in range(samples):
        pert = PerturbationState(
            grid=grid,
            v=envelope * _smooth_random(rng, grid, k_cut),
            w=envelope * _smooth_random(rng, grid, k_cut),
            A_tilde=lattice.leray_project(np.real(np.stack([_smooth_random(rng, grid, k_cut) for _ in range(3)])), grid)
            * envelope,
            E_tilde=np.real(np.stack([_smooth_random(rng, grid, k_cut) for _ in range(3)])) * envelope,
        )
        pert = project_constraints(pert, lam, family, basis, M0)
        pert = pert.model_copy(update={"A_tilde": lattice.leray_project(pert.A_tilde, grid)})
        W, _, Xi = quadratic_forms(pert, lam, profile)
        vw = (
            lattice.l2_inner(pert.v, pert.v, grid)
            + lattice.l2_inner(lattice.gradient(pert.v, grid), lattice.gradient(pert.v, grid), grid)
            + lattice.l2_inner(pert.w, pert.w, grid)
        )
        ratios.append(Xi / vw)
        if W > 0:
            equivalence.append(pert_norm(pert) ** 2 / W)
    tau = float(min(ratios))
    c_eq = float(max(equivalence)) if len(equivalence) == samples else None
    logger.info("omega=%.4f: tau=%.4g over %d sample(s)", lam.omega, tau, samples)
    return PositivityReport(omega=lam.omega, samples=samples, tau=tau, c_equivalence=c_eq)


class PerturbationMonitor:
    """Monitor hook for evolution.run: refits lambda at each call and reports W and W~."""

    def __init__(self, lam0: SolitonParams, family: SolitonFamily, background: Background | None = None, **fit_kwargs):
        self.lam = lam0
        self.t = 0.0
        self.family = family
        self.background = background
        self.fit_kwargs = fit_kwargs

    def __call__(self, state: FieldState) -> dict:
        try:
            fit = fit_lambda(state, flow_guess(self.lam, state.t - self.t), self.family, stable_guard=False, **self.fit_kwargs)
        except KGMError as exc:
            logger.warning("t=%.4f: monitor fit failed (%s)", state.t, exc.__class__.__name__)
            return {}
        self.lam, self.t = fit.lam, state.t
        pert = decompose(state, fit.lam, self.family)
        parts = wtilde_parts(
            pert,
            fit.lam,
            self.family.profile(fit.lam.omega),
            self.background,
            self.family.coupled(fit.lam.omega),
            state.t,
        )
        return {"W": parts["W"], "W_tilde": parts["total"]}


def _evolving(
    initial: FieldState,
    spec: PotentialSpec,
    config: EvolveConfig,
    background: Background | None,
    monitors: list,
):
    state = initial.copy()
    stride = config.snapshot_stride or config.monitor_stride
    steps = config.steps
    monitors.append(measure(state, spec, background, config.gauss_e_factor))
    yield state
    for k in range(1, steps + 1):
        new = step(state, spec, config, background)
        if not new.is_finite():
            raise EvolutionAborted(detail={"step": k, "t": new.t, "reason": "non-finite field"}, last_healthy=state)
        state = new
        advance_clock(background, state.t)
        if k % stride == 0 or k == steps:
            monitors.append(measure(state, spec, background, config.gauss_e_factor))
            yield state


def _call(task):
    return task()


def evolve_and_track(
    initial: FieldState,
    lam0: SolitonParams,
    family: SolitonFamily,
    spec: PotentialSpec,
    config: EvolveConfig,
    background: Background | None = None,
    path: Optional[FollowPath] = None,
    **fit_kwargs,
) -> tuple[Trajectory, ModulationTrack]:
    """Pipelined evolve + fit: snapshot k is fitted on a worker while the evolution produces k+1.

    Each stage is a fork-join of the two tasks, and the fitted position and velocity are fed
    back into `path` (which the chi gauge may be following) only after the join. Both tasks of
    stage k therefore read the path as left by fits 0..k-1, whatever the number of threads.
    """
    config.check_cfl(initial.grid)
    path = path or FollowPath(lam0.xi_array, lam0.u_array)
    omega = lam0.omega
    monitors: list = []
    result = ModulationTrack(e=family.e)

    def fit_one(state: FieldState, omega: float):
        xi, u = path(state.t)
        prior = SolitonParams(omega=omega, xi=tuple(xi), u=tuple(u))
        guess = centroid_guess(state, prior, xi, u)
        try:
            return _fit_sample(state, guess, family, fit_kwargs)
        except KGMError as exc:
            return exc

    stages = _evolving(initial, spec, config, background, monitors)
    state = next(stages)
    final = initial
    index = 0
    while state is not None:
        fitted, upcoming = workers.parallel_map(
            _call, [partial(fit_one, state, omega), partial(next, stages, None)]
        )
        if isinstance(fitted, KGMError):
            raise _indexed(fitted, index, state.t)
        fit, W = fitted
        flag = _flag(fit, family.e)
        if flag:
            logger.warning("t=%.4f flagged %s", state.t, flag)
        result.append(state.t, fit, W, flag)
        path.update(state.t, fit.lam.xi_array, fit.lam.u_array)
        omega = fit.lam.omega
        final, state, index = state, upcoming, index + 1
    logger.info("pipelined run reached t=%.4f with %d fitted sample(s)", final.t, len(result.times))
    trajectory = Trajectory(monitors=monitors, final=final, steps=config.steps)
    return trajectory, result
