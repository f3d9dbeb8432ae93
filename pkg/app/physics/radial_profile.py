import logging
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from app.core.errors import (
    NoConvergence,
    NoGroundState,
    PreconditionViolation,
    SingularOperator,
    TailUnderflow,
)
from app.models.potential import PotentialSpec
from app.models.profile import DecayFit, DomegaSolution, RadialGrid, RadialProfile
from app.physics.potential import F_MAX_FACTOR, check_existence_hypotheses

logger = logging.getLogger(__name__)

BISECTION_RTOL = 1e-12
RESIDUAL_TOL = 1e-8
BACKWARD_TOL = 1e-10
COND_MAX = 1e12
NEWTON_TARGET = 1e-11
COUPLED_MAX_ITER = 100
COUPLED_STEP_TOL = 1e-10
TAIL_FLOOR = 1e-280


@dataclass(frozen=True)
class RadialStencil:
    """Conservative second-order discretization of -Laplacian on r_i = i h.

    Cell i is the shell [r_i - h/2, r_i + h/2] (a half shell at both ends) with volume
    weight w_i = int r^2 dr. The stiffness part S is symmetric, so L = S / w is symmetric
    in the weighted inner product sum_i w_i a_i b_i. At r=0 the cell balance reproduces the
    ghost-node formula -6 (f_1 - f_0) / h^2 of the regularity condition f(-h) = f(h).
    """

    r: np.ndarray
    h: float
    w: np.ndarray
    faces: np.ndarray

    @classmethod
    def on(cls, grid: RadialGrid) -> "RadialStencil":
        r = grid.nodes
        h = grid.h
        lo = np.clip(r - h / 2, 0.0, None)
        hi = np.minimum(r + h / 2, r[-1])
        w = (hi**3 - lo**3) / 3.0
        faces = (r[:-1] + h / 2) ** 2
        return cls(r=r, h=h, w=w, faces=faces)

    def stiffness_bands(self, robin: float, drop_origin: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """(diagonal, off-diagonal) of S with the outer condition r^2 f' = -robin * f at r_max.

        `robin` is r_max^2 (kappa + 1/r_max) for the Yukawa tail and r_max for a monopole tail.
        With `drop_origin` the node r=0 is removed (Dirichlet, angular channels l >= 1).
        """
        a = self.faces / self.h
        diag = np.zeros_like(self.r)
        diag[:-1] += a
        diag[1:] += a
        diag[-1] += robin
        off = -a
        if drop_origin:
            return diag[1:], off[1:]
        return diag, off

    def apply(self, diag: np.ndarray, off: np.ndarray, f: np.ndarray) -> np.ndarray:
        out = diag * f
        out[:-1] += off * f[1:]
        out[1:] += off * f[:-1]
        return out

    def yukawa_robin(self, kappa: float) -> float:
        rm = self.r[-1]
        return rm**2 * (kappa + 1.0 / rm)

    def monopole_robin(self) -> float:
        return float(self.r[-1])

    def laplacian(self, f: np.ndarray, robin: float) -> np.ndarray:
        """Discrete -Laplacian of f (outer condition given by `robin`)."""
        diag, off = self.stiffness_bands(robin)
        return self.apply(diag, off, f) / self.w

    def quad(self, values: np.ndarray) -> float:
        """4 pi int values r^2 dr."""
        return float(4.0 * np.pi * np.dot(self.w, values))


def _banded(diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return ab


def solve_weighted(diag: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        x = linalg.solve_banded((1, 1), _banded(diag, off), rhs)
    except linalg.LinAlgError as exc:
        raise SingularOperator(detail=f"radial operator singular: {exc}")
    if not np.all(np.isfinite(x)):
        raise SingularOperator(detail="radial solve produced non-finite values")
    return x


def _profile_residual(
    spec: PotentialSpec, stencil: RadialStencil, f: np.ndarray, shift: np.ndarray, robin: float
) -> np.ndarray:
    """-Lap f + (m^2 - shift^2) f - beta(f) f with shift = omega - e alpha."""
    return stencil.laplacian(f, robin) + (spec.m**2 - shift**2) * f - spec.beta(f) * f


def _newton_profile(
    spec: PotentialSpec,
    stencil: RadialStencil,
    guess: np.ndarray,
    shift: np.ndarray,
    kappa: float,
    max_iter: int = 40,
) -> tuple[np.ndarray, float, int]:
    robin = stencil.yukawa_robin(kappa)
    diag0, off = stencil.stiffness_bands(robin)
    f = guess.copy()
    scale = max(abs(f[0]), 1e-300)
    res = np.max(np.abs(_profile_residual(spec, stencil, f, shift, robin))) / scale
    for it in range(1, max_iter + 1):
        F = _profile_residual(spec, stencil, f, shift, robin)
        pot = spec.m**2 - shift**2 - spec.beta(f) - spec.beta_prime(f) * f
        delta = solve_weighted(diag0 + stencil.w * pot, off, -stencil.w * F)
        f = f + delta
        scale = max(abs(f[0]), 1e-300)
        res = np.max(np.abs(_profile_residual(spec, stencil, f, shift, robin))) / scale
        logger.debug("newton %d: residual %.3e, step %.3e", it, res, np.max(np.abs(delta)) / scale)
        if res < NEWTON_TARGET or np.max(np.abs(delta)) < 1e-15 * scale:
            return f, res, it
    return f, res, max_iter


class _Shooter:
    """Classifies shooting parameters f(0) as undershoot (f turns up) or overshoot (f crosses 0)."""

    def __init__(self, spec: PotentialSpec, omega: float, r_end: float):
        self.spec = spec
        self.kappa2 = spec.m**2 - omega**2
        self.r_end = r_end
        self.r0 = 1e-6 * r_end

    def _rhs(self, r, y):
        f, fp = y
        return [fp, -2.0 * fp / r + (self.kappa2 - float(self.spec.beta(f))) * f]

    def integrate(self, f0: float, dense: bool = False):
        curv = (self.kappa2 - float(self.spec.beta(f0))) * f0 / 3.0
        y0 = [f0 + 0.5 * curv * self.r0**2, curv * self.r0]
        if y0[1] > 0:
            return "under", None, self.r0

        def crosses_zero(r, y):
            return y[0]

        def turns_up(r, y):
            return y[1]

        crosses_zero.terminal = True
        crosses_zero.direction = -1
        turns_up.terminal = True
        turns_up.direction = 1
        sol = integrate.solve_ivp(
            self._rhs,
            (self.r0, self.r_end),
            y0,
            method="DOP853",
            rtol=1e-11,
            atol=1e-14 * max(f0, 1.0),
            events=(crosses_zero, turns_up),
            dense_output=dense,
        )
        if sol.t_events[0].size:
            return "over", sol, float(sol.t_events[0][0])
        if sol.t_events[1].size:
            return "under", sol, float(sol.t_events[1][0])
        return ("under" if sol.y[0, -1] > 0 else "over"), sol, self.r_end


def _shooting_guess(spec: PotentialSpec, omega: float, grid: RadialGrid) -> tuple[np.ndarray, float]:
    report = check_existence_hypotheses(spec, omega)
    if not report.existence_ok:
        raise NoGroundState(detail=f"existence condition fails at omega={omega}: {report.checks['exist3'].detail}")
    f_cap = F_MAX_FACTOR * report.zeta
    shooter = _Shooter(spec, omega, grid.r_max)

    lo = 0.5 * report.l1 if report.l1 else 1e-3 * report.zeta
    while shooter.integrate(lo)[0] != "under":
        lo *= 0.5
        if lo < 1e-12:
            raise NoGroundState(detail="no undershooting f(0) found")
    hi = 2.0 * lo
    while shooter.integrate(hi)[0] != "over":
        lo = hi
        hi *= 2.0
        if hi > f_cap:
            raise NoGroundState(detail=f"no overshooting f(0) below F_MAX={f_cap:.4g}")

    steps = 0
    while hi - lo > BISECTION_RTOL * hi:
        mid = 0.5 * (lo + hi)
        if shooter.integrate(mid)[0] == "under":
            lo = mid
        else:
            hi = mid
        steps += 1
    logger.info("bisection on f(0) converged to %.12g in %d steps", lo, steps)

    _, sol_lo, r_lo = shooter.integrate(lo, dense=True)
    _, _, r_hi = shooter.integrate(hi)
    r = grid.nodes
    r_c = 0.8 * min(r_lo, r_hi, grid.r_max)
    kappa = np.sqrt(spec.m**2 - omega**2)
    f = np.empty_like(r)
    inner = r <= r_c
    f[0] = lo
    f[1:][inner[1:]] = sol_lo.sol(np.maximum(r[1:][inner[1:]], shooter.r0))[0]
    f_c = float(sol_lo.sol(r_c)[0])
    outer = ~inner
    f[outer] = f_c * (r_c / r[outer]) * np.exp(-kappa * (r[outer] - r_c))
    return f, lo


def _check_domain(spec: PotentialSpec, omega: float, grid: RadialGrid) -> float:
    if omega**2 >= spec.m**2:
        raise PreconditionViolation(detail=f"omega^2={omega**2} must be below m^2={spec.m**2}")
    kappa = np.sqrt(spec.m**2 - omega**2)
    if grid.r_max < 12.0 / kappa:
        raise PreconditionViolation(detail=f"r_max={grid.r_max} below 12/kappa={12.0 / kappa:.4g}")
    return kappa


def _validate_ground_state(f: np.ndarray, omega: float) -> None:
    if np.any(f[:-1] <= 0):
        raise NoGroundState(detail=f"profile at omega={omega} is not positive on the interior")


def solve_profile_e0(
    spec: PotentialSpec, omega: float, grid: RadialGrid, guess: RadialProfile | None = None
) -> RadialProfile:
    """Ground state of (-Lap + m^2 - omega^2) f = beta(f) f.

    Shooting with bisection on f(0) gives the initial guess, Newton on the discrete
    boundary value problem brings the residual to round-off. A `guess` profile from a
    nearby frequency skips the shooting stage.
    """
    kappa = _check_domain(spec, omega, grid)
    stencil = RadialStencil.on(grid)
    if guess is not None and guess.grid == grid:
        start, f0 = guess.f, float(guess.f[0])
    else:
        start, f0 = _shooting_guess(spec, omega, grid)
    shift = np.full(grid.n, float(omega))
    f, res, iters = _newton_profile(spec, stencil, start, shift, kappa)
    if res > RESIDUAL_TOL:
        raise NoConvergence(detail=f"profile residual {res:.3e} above {RESIDUAL_TOL}")
    _validate_ground_state(f, omega)
    logger.info("omega=%.6g: f(0)=%.10g, residual %.2e after %d Newton steps", omega, f[0], res, iters)
    return RadialProfile(
        potential=spec,
        grid=grid,
        omega=omega,
        e=0.0,
        f=f,
        alpha=np.zeros(grid.n),
        f0_center=float(f[0]),
        residual_norm=res,
        iterations=iters,
    )


def solve_alpha(stencil: RadialStencil, f: np.ndarray, omega: float, e: float) -> tuple[np.ndarray, float]:
    """-Lap alpha + e^2 f^2 alpha = omega e f^2 with the monopole tail alpha' = -alpha / r."""
    diag, off = stencil.stiffness_bands(stencil.monopole_robin())
    rhs = stencil.w * omega * e * f**2
    alpha = solve_weighted(diag + stencil.w * e**2 * f**2, off, rhs)
    return alpha, alpha_residual(stencil, f, alpha, omega, e)


def alpha_residual(stencil: RadialStencil, f: np.ndarray, alpha: np.ndarray, omega: float, e: float) -> float:
    res = stencil.laplacian(alpha, stencil.monopole_robin()) + e**2 * f**2 * alpha - omega * e * f**2
    scale = max(abs(omega * e) * float(np.max(f**2)), 1e-300)
    return float(np.max(np.abs(res)) / scale)


def solve_profile_coupled(
    spec: PotentialSpec,
    omega: float,
    e: float,
    grid: RadialGrid,
    max_iter: int = COUPLED_MAX_ITER,
    base: RadialProfile | None = None,
) -> RadialProfile:
    """Soliton of the coupled system by alternating the alpha solve and the f solve."""
    if e == 0.0:
        return base if base is not None else solve_profile_e0(spec, omega, grid)
    kappa = _check_domain(spec, omega, grid)
    stencil = RadialStencil.on(grid)
    if base is None or base.grid != grid:
        base = solve_profile_e0(spec, omega, grid)
    f = base.f.copy()
    history: list[float] = []
    for it in range(1, max_iter + 1):
        alpha, _ = solve_alpha(stencil, f, omega, e)
        shift = omega - e * alpha
        kappa = float(np.sqrt(spec.m**2 - shift[-1] ** 2))
        robin = stencil.yukawa_robin(kappa)
        history.append(float(np.max(np.abs(_profile_residual(spec, stencil, f, shift, robin))) / f[0]))
        f_new, res, _ = _newton_profile(spec, stencil, f, shift, kappa)
        step = float(np.max(np.abs(f_new - f)))
        f = f_new
        logger.debug("coupled iteration %d: step %.3e, residual %.3e", it, step, res)
        if step < COUPLED_STEP_TOL:
            break
    else:
        raise NoConvergence(detail=f"coupled profile did not converge in {max_iter} iterations")
    alpha, a_res = solve_alpha(stencil, f, omega, e)
    shift = omega - e * alpha
    kappa = float(np.sqrt(spec.m**2 - shift[-1] ** 2))
    f_res = float(np.max(np.abs(_profile_residual(spec, stencil, f, shift, stencil.yukawa_robin(kappa)))) / f[0])
    if max(f_res, a_res) > RESIDUAL_TOL:
        raise NoConvergence(detail=f"coupled residuals f={f_res:.3e}, alpha={a_res:.3e}")
    _validate_ground_state(f, omega)
    logger.info("omega=%.6g e=%.4g: coupled profile in %d iterations, f(0)=%.10g", omega, e, it, f[0])
    return RadialProfile(
        potential=spec,
        grid=grid,
        omega=omega,
        e=e,
        f=f,
        alpha=alpha,
        f0_center=float(f[0]),
        residual_norm=f_res,
        alpha_residual_norm=a_res,
        iterations=it,
        residual_history=history,
    )


def lplus_bands(profile: RadialProfile, ell: int = 0) -> tuple[RadialStencil, np.ndarray, np.ndarray]:
    """Weighted bands of L_+ in channel ell (node r=0 dropped for ell >= 1)."""
    return _linearized_bands(profile, ell, plus=True)


def lminus_bands(profile: RadialProfile, ell: int = 0) -> tuple[RadialStencil, np.ndarray, np.ndarray]:
    return _linearized_bands(profile, ell, plus=False)


def _linearized_bands(profile: RadialProfile, ell: int, plus: bool):
    spec = profile.potential
    stencil = RadialStencil.on(profile.grid)
    f = profile.f
    pot = spec.m**2 - profile.omega**2 - spec.beta(f)
    if plus:
        pot = pot - spec.beta_prime(f) * f
    diag, off = stencil.stiffness_bands(stencil.yukawa_robin(profile.tail_kappa), drop_origin=ell > 0)
    if ell > 0:
        r = stencil.r[1:]
        w = stencil.w[1:]
        diag = diag + w * (pot[1:] + ell * (ell + 1) / r**2)
    else:
        diag = diag + stencil.w * pot
    return stencil, diag, off


def backward_error(stencil: RadialStencil, diag: np.ndarray, off: np.ndarray, x: np.ndarray, b: np.ndarray) -> float:
    """Normwise backward error |S x - b| / (|S| |x| + |b|) of a weighted solve, all in the max norm."""
    row = np.abs(diag).copy()
    row[:-1] += np.abs(off)
    row[1:] += np.abs(off)
    res = stencil.apply(diag, off, x) - b
    scale = float(np.max(row)) * float(np.max(np.abs(x))) + float(np.max(np.abs(b)))
    return float(np.max(np.abs(res)) / max(scale, 1e-300))


def solve_domega(spec: PotentialSpec, profile: RadialProfile) -> DomegaSolution:
    """g = d f_omega / d omega, from L_+(omega) g = 2 omega f_omega.

    Accepted when the backward error is at round-off; a solution whose size implies a
    condition number beyond COND_MAX is reported as a singular operator.
    """
    if profile.e != 0.0:
        raise PreconditionViolation(detail="solve_domega needs the e=0 profile")
    stencil, diag, off = lplus_bands(profile)
    b = stencil.w * 2.0 * profile.omega * profile.f
    g = solve_weighted(diag, off, b)
    residual = backward_error(stencil, diag, off, g, b)
    if residual > BACKWARD_TOL:
        raise SingularOperator(detail=f"L_+ solve backward error {residual:.3e}")
    growth = float(np.max(np.abs(diag)) * np.max(np.abs(g)) / max(float(np.max(np.abs(b))), 1e-300))
    if growth > COND_MAX:
        raise SingularOperator(detail=f"L_+ solve amplifies the source by {growth:.3e}; operator numerically singular")
    return DomegaSolution(omega=profile.omega, g=g, residual_norm=residual)


def fit_tail(r: np.ndarray, f: np.ndarray) -> DecayFit:
    """Least squares of log f = c - k r + p log r; exact for e^{-kr} (p=0) and e^{-kr}/r (p=-1)."""
    if np.any(f <= TAIL_FLOOR):
        raise TailUnderflow(detail=f"tail values below {TAIL_FLOOR:g} inside the fit window")
    design = np.column_stack([np.ones_like(r), -r, np.log(r)])
    coef, *_ = np.linalg.lstsq(design, np.log(f), rcond=None)
    resid = float(np.sqrt(np.mean((design @ coef - np.log(f)) ** 2)))
    return DecayFit(rate=float(coef[1]), power=float(coef[2]), residual=resid, window=(float(r[0]), float(r[-1])))


def decay_rate(profile: RadialProfile, window: tuple[float, float] | None = None) -> DecayFit:
    r, f = profile.r, profile.f
    if window is None:
        small = np.nonzero(f < 1e-3 * f[0])[0]
        start = r[small[0]] if small.size else 0.5 * r[-1]
        window = (min(start, 0.6 * r[-1]), 0.9 * r[-1])
    mask = (r >= window[0]) & (r <= window[1]) & (r > 0)
    return fit_tail(r[mask], f[mask])
