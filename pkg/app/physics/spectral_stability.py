import logging

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from app.core.errors import NoConvergence, PreconditionViolation
from app.models.potential import PotentialSpec
from app.models.profile import RadialGrid, RadialProfile
from app.models.spectrum import (
    DhDomegaReport,
    Eigenpair,
    OperatorKind,
    RadialOperator,
    SpectrumReport,
    StabilityRow,
)
from app.physics.radial_profile import (
    RadialStencil,
    lminus_bands,
    lplus_bands,
    solve_domega,
    solve_profile_e0,
)

logger = logging.getLogger(__name__)

EIG_RESIDUAL_TOL = 1e-8


def build_operator(spec: PotentialSpec, profile: RadialProfile, kind: OperatorKind, ell: int = 0) -> RadialOperator:
    if profile.e != 0.0:
        raise PreconditionViolation(detail="L+/- are defined at the e=0 profile")
    bands = lplus_bands if kind == OperatorKind.L_PLUS else lminus_bands
    stencil, diag, off = bands(profile, ell)
    w = stencil.w[1:] if ell > 0 else stencil.w
    r = stencil.r[1:] if ell > 0 else stencil.r
    return RadialOperator(kind=kind, ell=ell, omega=profile.omega, diag=diag, off=off, weights=w, r=r)


def lowest_eigenvalues(op: RadialOperator, k: int = 4) -> list[Eigenpair]:
    """k smallest eigenpairs of L by shift-invert Lanczos on w^{-1/2} K w^{-1/2}."""
    if k > 8:
        raise PreconditionViolation(detail="at most 8 eigenvalues are computed")
    s = 1.0 / np.sqrt(op.weights)
    d = op.diag * s**2
    o = op.off * s[:-1] * s[1:]
    sym = sparse.diags([o, d, o], [-1, 0, 1], format="csc")
    radius = np.abs(np.concatenate([o, [0.0]])) + np.abs(np.concatenate([[0.0], o]))
    sigma = float(np.min(d - radius)) - 1.0
    try:
        vals, vecs = sparse_linalg.eigsh(sym, k=k, sigma=sigma, which="LM", tol=1e-13)
    except sparse_linalg.ArpackNoConvergence as exc:
        raise NoConvergence(detail=f"eigen-solver did not converge: {exc}")
    order = np.argsort(vals)
    pairs = []
    for i in order:
        v = vecs[:, i]
        res = float(np.linalg.norm(sym @ v - vals[i] * v))
        if res > EIG_RESIDUAL_TOL * max(1.0, abs(vals[i])):
            raise NoConvergence(detail=f"eigenpair residual {res:.2e} above tolerance")
        pairs.append(Eigenpair(value=float(vals[i]), vector=v * s, residual=res))
    logger.debug("%s l=%d lowest: %s", op.kind.value, op.ell, [round(p.value, 8) for p in pairs])
    return pairs


def _norm2(profile: RadialProfile) -> float:
    return RadialStencil.on(profile.grid).quad(profile.f**2)


def q_value(profile: RadialProfile) -> float:
    return profile.omega * _norm2(profile)


def dq_domega(profile: RadialProfile, g: np.ndarray) -> float:
    """d/d omega (omega ||f||^2) = ||f||^2 + 2 omega <f, g>."""
    stencil = RadialStencil.on(profile.grid)
    return stencil.quad(profile.f**2) + 2.0 * profile.omega * stencil.quad(profile.f * g)


def stability_curve(
    spec: PotentialSpec, omega_list: list[float], grid: RadialGrid, h_step: float = 1e-3
) -> list[StabilityRow]:
    rows = []
    for omega in omega_list:
        profile = solve_profile_e0(spec, omega, grid)
        g = solve_domega(spec, profile).g
        q_plus = q_value(solve_profile_e0(spec, omega + h_step, grid, guess=profile))
        q_minus = q_value(solve_profile_e0(spec, omega - h_step, grid, guess=profile))
        fd = (q_plus - q_minus) / (2.0 * h_step)
        by_g = dq_domega(profile, g)
        gap = abs(fd - by_g) / max(abs(by_g), 1e-300)
        rows.append(
            StabilityRow(
                omega=omega,
                q=q_value(profile),
                dq_domega_fd=fd,
                dq_domega_g=by_g,
                relative_gap=gap,
                stable=by_g < 0,
            )
        )
        logger.info("omega=%.4f: dq/domega=%.6g (%s)", omega, by_g, "stable" if by_g < 0 else "unstable")
    return rows


def is_stable(profile: RadialProfile) -> bool:
    base = profile
    if profile.e != 0.0:
        base = solve_profile_e0(profile.potential, profile.omega, profile.grid)
    return dq_domega(base, solve_domega(base.potential, base).g) < 0


def gradient_energy(profile: RadialProfile) -> float:
    """||grad f||^2 as 4 pi sum_i r_{i+1/2}^2 (f_{i+1} - f_i)^2 / h."""
    stencil = RadialStencil.on(profile.grid)
    df = np.diff(profile.f)
    return float(4.0 * np.pi * np.sum(stencil.faces * df**2) / stencil.h)


def soliton_mass(profile: RadialProfile) -> float:
    """M_S = ||grad f||^2 / 3 + omega^2 ||f||^2."""
    return gradient_energy(profile) / 3.0 + profile.omega**2 * _norm2(profile)


def soliton_charge(profile: RadialProfile) -> float:
    """Q_S = int (omega - e alpha) f^2."""
    if profile.e == 0.0:
        return q_value(profile)
    stencil = RadialStencil.on(profile.grid)
    return stencil.quad((profile.omega - profile.e * profile.alpha) * profile.f**2)


def _h_tilde(profile: RadialProfile) -> tuple[float, float]:
    spec = profile.potential
    stencil = RadialStencil.on(profile.grid)
    f = profile.f
    norm2 = stencil.quad(f**2)
    h = 0.5 * (gradient_energy(profile) + profile.omega**2 * norm2) + stencil.quad(spec.V(f))
    q = profile.omega * norm2
    return h - profile.omega * q, q


def dh_domega_check(
    spec: PotentialSpec, omega: float, h_step: float, grid: RadialGrid | None = None
) -> DhDomegaReport:
    """Centred difference of h~ = h - omega q against -q."""
    kappa = np.sqrt(spec.m**2 - (omega + h_step) ** 2)
    required = 12.0 / kappa
    if grid is None:
        grid = RadialGrid.for_omega(spec.m, omega + h_step)
    profile = solve_profile_e0(spec, omega, grid)
    _, q = _h_tilde(profile)
    up, _ = _h_tilde(solve_profile_e0(spec, omega + h_step, grid, guess=profile))
    down, _ = _h_tilde(solve_profile_e0(spec, omega - h_step, grid, guess=profile))
    derivative = (up - down) / (2.0 * h_step)
    return DhDomegaReport(
        omega=omega,
        h_step=h_step,
        dh_domega=derivative,
        minus_q=-q,
        relative_error=abs(derivative + q) / abs(q),
        wide_tail=bool(kappa < 0.2 * spec.m),
        required_r_max=float(required),
    )


def spectrum_report(spec: PotentialSpec, profile: RadialProfile, k: int = 4) -> SpectrumReport:
    """Negative-eigenvalue counts and the l=0 kernel gap of L+, plus the stability sign."""
    plus0 = [p.value for p in lowest_eigenvalues(build_operator(spec, profile, OperatorKind.L_PLUS, 0), k)]
    plus1 = [p.value for p in lowest_eigenvalues(build_operator(spec, profile, OperatorKind.L_PLUS, 1), k)]
    minus0 = [p.value for p in lowest_eigenvalues(build_operator(spec, profile, OperatorKind.L_MINUS, 0), k)]
    # the l=1 translation modes sit at zero up to O(h^2); count only clearly negative values
    neg1 = sum(1 for v in plus1 if v < -1e-3)
    neg0 = sum(1 for v in plus0 if v < 0)
    gap = min(abs(v) for v in plus0)
    dq = dq_domega(profile, solve_domega(spec, profile).g)
    return SpectrumReport(
        omega=profile.omega,
        lplus_l0=plus0,
        lplus_l1=plus1,
        lminus_l0=minus0,
        negative_count_l0=neg0,
        negative_count_l1=neg1,
        kernel_gap=gap,
        s1_holds=neg0 == 1 and neg1 == 0,
        ker_holds=gap > 1e-3,
        dq_domega=dq,
        stable=dq < 0,
        mass=soliton_mass(profile),
        charge=soliton_charge(profile),
    )
