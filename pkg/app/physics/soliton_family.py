import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy import interpolate

from app.core.errors import BoxTooSmall, DomainError, PreconditionViolation
from app.models.field import FieldState, Grid3
from app.models.potential import PotentialSpec
from app.models.profile import RadialGrid, RadialProfile
from app.models.soliton import OMEGA, THETA, PerturbationState, SolitonParams
from app.physics import lattice
from app.physics.external_field import Background, minimum_image
from app.physics.radial_profile import solve_domega, solve_profile_coupled, solve_profile_e0
from app.physics.spectral_stability import dq_domega

logger = logging.getLogger(__name__)

BOX_TAIL_TOL = 1e-10
FAMILY_CACHE_SIZE = 64
_SMALL_RHO = 1e-8


def gamma(u) -> float:
    speed = float(np.linalg.norm(u))
    if speed >= 1.0:
        raise DomainError(detail=f"|u| = {speed:.6g} is not below 1")
    return float(1.0 / np.sqrt(1.0 - speed**2))


def projectors(u) -> tuple[np.ndarray, np.ndarray]:
    """(P_u, Q_u); at u = 0 the pair is (0, I)."""
    u = np.asarray(u, dtype=float)
    s2 = float(u @ u)
    if s2 == 0.0:
        return np.zeros((3, 3)), np.eye(3)
    P = np.outer(u, u) / s2
    return P, np.eye(3) - P


def boost_matrix(u) -> np.ndarray:
    """gamma P_u + Q_u, so that Z = Gamma (x - xi)."""
    P, Q = projectors(u)
    return gamma(u) * P + Q


def lorentz_coords(x, lam: SolitonParams, L: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(Z, Theta) at points x of shape (3, ...); with L the displacement x - xi is the minimum image."""
    y = minimum_image(np.asarray(x, dtype=float), lam.xi_array, L)
    Z = np.tensordot(boost_matrix(lam.u), y, axes=(1, 0))
    theta = lam.theta - lam.omega * np.tensordot(lam.u_array, Z, axes=(0, 0))
    return Z, theta


def v0(lam: SolitonParams) -> np.ndarray:
    """Generator of the free soliton flow, (omega', theta', xi', u') = (0, omega / gamma, u, 0)."""
    out = np.zeros(8)
    out[THETA] = lam.omega / gamma(lam.u)
    out[2:5] = lam.u_array
    return out


def v0_jacobian(lam: SolitonParams) -> np.ndarray:
    """d V0_B / d lambda_A as an 8x8 array indexed [B, A]."""
    g = gamma(lam.u)
    u = lam.u_array
    jac = np.zeros((8, 8))
    jac[THETA, OMEGA] = 1.0 / g
    jac[THETA, 5:8] = -lam.omega * g * u
    jac[2:5, 5:8] = np.eye(3)
    return jac


class RadialFunction:
    """Cubic spline of a radial function, continued past r_max by its analytic tail.

    tail="yukawa": c exp(-kappa r) / r; tail="monopole": c / r. The outer slope of the
    spline is clamped to the tail's, and f'(0) = 0.
    """

    def __init__(self, r: np.ndarray, values: np.ndarray, tail: str = "yukawa", kappa: float = 0.0):
        self.r_max = float(r[-1])
        self.end = float(values[-1])
        self.kappa = kappa
        self.tail = tail
        if tail == "yukawa":
            slope = -(kappa + 1.0 / self.r_max) * self.end
        else:
            slope = -self.end / self.r_max
        self._spline = interpolate.CubicSpline(r, values, bc_type=((1, 0.0), (1, slope)))

    def _tail(self, rho: np.ndarray, nu: int) -> np.ndarray:
        if self.tail == "yukawa":
            k = self.kappa
            value = self.end * (self.r_max / rho) * np.exp(-k * (rho - self.r_max))
            if nu == 0:
                return value
            if nu == 1:
                return -(k + 1.0 / rho) * value
            return ((k + 1.0 / rho) ** 2 + 1.0 / rho**2) * value
        c = self.end * self.r_max
        return (c / rho, -c / rho**2, 2.0 * c / rho**3)[nu]

    def __call__(self, rho, nu: int = 0) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        flat = rho.ravel()
        out = np.empty_like(flat)
        inside = flat <= self.r_max
        out[inside] = self._spline(flat[inside], nu)
        if not np.all(inside):
            out[~inside] = self._tail(flat[~inside], nu)
        return out.reshape(rho.shape)


def profile_function(profile: RadialProfile) -> RadialFunction:
    return RadialFunction(profile.r, profile.f, "yukawa", profile.tail_kappa)


def alpha_function(profile: RadialProfile) -> RadialFunction:
    return RadialFunction(profile.r, profile.alpha, "monopole")


@dataclass(frozen=True)
class BoostFrame:
    """Lattice geometry of one soliton: Z, |Z|, Z/|Z| (zero at the centre) and Theta."""

    lam: SolitonParams
    gamma: float
    Gamma: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    rho: np.ndarray
    nhat: np.ndarray
    theta: np.ndarray


def boost_frame(lam: SolitonParams, grid: Grid3) -> BoostFrame:
    y = minimum_image(grid.coords, lam.xi_array, grid.L)
    Gamma = boost_matrix(lam.u)
    Z = np.tensordot(Gamma, y, axes=(1, 0))
    rho = np.sqrt(np.sum(Z**2, axis=0))
    safe = np.where(rho > _SMALL_RHO, rho, 1.0)
    nhat = np.where(rho > _SMALL_RHO, Z / safe, 0.0)
    theta = lam.theta - lam.omega * np.tensordot(lam.u_array, Z, axes=(0, 0))
    return BoostFrame(lam=lam, gamma=gamma(lam.u), Gamma=Gamma, y=y, Z=Z, rho=rho, nhat=nhat, theta=theta)


def _check_frequency(profile: RadialProfile, lam: SolitonParams) -> None:
    if abs(profile.omega - lam.omega) > 1e-12 * max(1.0, abs(lam.omega)):
        raise PreconditionViolation(detail=f"profile omega={profile.omega} but lambda omega={lam.omega}")


def check_box(profile: RadialProfile, grid: Grid3, tol: float = BOX_TAIL_TOL) -> float:
    """Ratio f(L/2) / f(0); BoxTooSmall above `tol`."""
    edge = float(profile_function(profile)(np.array([0.5 * grid.L]))[0])
    ratio = edge / profile.f0_center
    if ratio > tol:
        raise BoxTooSmall(detail={"L": grid.L, "tail_ratio": ratio, "tol": tol})
    return ratio


@dataclass(frozen=True)
class CoulombFields:
    """Coulomb-gauge electromagnetic part of a moving charged soliton on the periodic box."""

    alpha_radial: np.ndarray
    alpha: np.ndarray
    zeta: np.ndarray
    A: np.ndarray
    E: np.ndarray
    A0: np.ndarray
    mean_source: float


def coulomb_fields(profile: RadialProfile, frame: BoostFrame, grid: Grid3) -> CoulombFields:
    """alpha(Z(x)) solved periodically, then E, A = -gamma u alpha + grad zeta and A0.

    -div(Gamma^-2 grad alpha) = e (omega - e alpha_r) f^2 evaluated at Z, so div E equals the
    lattice charge density up to the neutralizing mean; -Lap zeta = -gamma u . grad alpha.
    """
    e = profile.e
    u = frame.lam.u_array
    g = frame.gamma
    f = profile_function(profile)(frame.rho)
    alpha_r = alpha_function(profile)(frame.rho)
    source = e * (profile.omega - e * alpha_r) * f**2
    inv = np.linalg.inv(frame.Gamma)
    solved = lattice.poisson_solve(source, grid, metric=inv @ inv, source="coulomb")
    alpha = solved.u
    grad_alpha = lattice.gradient(alpha, grid)
    P, Q = projectors(u)
    E = -np.tensordot(P / g + g * Q, grad_alpha, axes=(1, 0))
    zeta = lattice.poisson_solve(-g * np.tensordot(u, grad_alpha, axes=(0, 0)), grid, metric=np.eye(3)).u
    grad_zeta = lattice.gradient(zeta, grid)
    A = -g * u.reshape(3, 1, 1, 1) * alpha + grad_zeta
    A0 = g * alpha - np.tensordot(u, grad_zeta, axes=(0, 0))
    return CoulombFields(
        alpha_radial=alpha_r, alpha=alpha, zeta=zeta, A=A, E=E, A0=A0, mean_source=float(solved.mean)
    )


def sample_soliton(
    profile: RadialProfile, lam: SolitonParams, grid: Grid3, box_tail_tol: float = BOX_TAIL_TOL
) -> FieldState:
    """Boosted, translated and phase-rotated soliton on the lattice.

    For e != 0 the fields are put in Coulomb gauge and the phase becomes Theta + e zeta.
    """
    return sample_with_phase(profile, lam, grid, box_tail_tol)[0]


def sample_with_phase(
    profile: RadialProfile, lam: SolitonParams, grid: Grid3, box_tail_tol: float = BOX_TAIL_TOL
) -> tuple[FieldState, np.ndarray]:
    """sample_soliton plus the lattice phase Theta_C it was built with."""
    _check_frequency(profile, lam)
    check_box(profile, grid, box_tail_tol)
    frame = boost_frame(lam, grid)
    fn = profile_function(profile)
    f = fn(frame.rho)
    u_grad_f = fn(frame.rho, 1) * np.tensordot(lam.u_array, frame.nhat, axes=(0, 0))
    g = frame.gamma
    if profile.e == 0.0:
        phase = frame.theta
        psi_t = 1j * g * lam.omega * f - g * u_grad_f
        A = np.zeros((3,) + f.shape)
        E = np.zeros((3,) + f.shape)
    else:
        cf = coulomb_fields(profile, frame, grid)
        phase = frame.theta + profile.e * cf.zeta
        psi_t = 1j * g * (lam.omega - profile.e * cf.alpha_radial) * f - g * u_grad_f
        A, E = cf.A, cf.E
    rot = np.exp(1j * phase)
    state = FieldState(
        grid=grid,
        t=0.0,
        e=profile.e,
        phi=rot * f,
        psi=rot * psi_t,
        A=A,
        E=E,
        provenance={"lambda": lam.model_dump(mode="json"), "e": profile.e, "omega_profile": profile.omega},
    )
    return state, phase


def soliton_a0(profile: RadialProfile, lam: SolitonParams, grid: Grid3) -> np.ndarray:
    """(A_SC)_0 = gamma alpha - u . grad zeta (zero for e = 0)."""
    if profile.e == 0.0:
        return np.zeros((grid.n,) * 3)
    return coulomb_fields(profile, boost_frame(lam, grid), grid).A0


def dlambda_soliton(
    profile: RadialProfile, lam: SolitonParams, grid: Grid3, g: np.ndarray | None = None
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Phase-stripped parameter derivatives e^{-i Theta} d_A (phi_S0, psi_S0), A in (omega, theta, xi, u).

    Closed forms from the chain rule through Z and Theta; the Hessian of f(|Z|) is written as
    (f'/|Z|)(I - n n^T) + f'' n n^T so the centre needs no special case.
    """
    if profile.e != 0.0:
        raise PreconditionViolation(detail="dlambda_soliton needs the e=0 profile")
    _check_frequency(profile, lam)
    if g is None:
        g = solve_domega(profile.potential, profile).g
    frame = boost_frame(lam, grid)
    fn = profile_function(profile)
    gn = RadialFunction(profile.r, g, "yukawa", profile.tail_kappa)
    rho, nhat = frame.rho, frame.nhat
    f, f1, f2 = fn(rho), fn(rho, 1), fn(rho, 2)
    gv, g1 = gn(rho), gn(rho, 1)
    q1 = np.where(rho > _SMALL_RHO, f1 / np.where(rho > _SMALL_RHO, rho, 1.0), f2)

    omega = lam.omega
    u = lam.u_array
    gam = frame.gamma
    grad_f = f1 * nhat
    u_grad_f = np.tensordot(u, grad_f, axes=(0, 0))
    psi_t = 1j * gam * omega * f - gam * u_grad_f
    ubc = u.reshape(3, 1, 1, 1)

    def hess(dZ):
        return q1 * dZ + (f2 - q1) * nhat * np.sum(nhat * dZ, axis=0)

    def along(dZ):
        return np.sum(grad_f * dZ, axis=0)

    def pair(d_theta, dZ, d_gamma=0.0, du=None):
        df = along(dZ)
        dpsi = (
            1j * omega * d_gamma * f
            + 1j * gam * omega * df
            - d_gamma * u_grad_f
            - gam * np.sum(ubc * hess(dZ), axis=0)
        )
        if du is not None:
            dpsi = dpsi - gam * np.tensordot(du, grad_f, axes=(0, 0))
        return 1j * d_theta * f + df, 1j * d_theta * psi_t + dpsi

    basis = []
    u_dot_n = np.tensordot(u, nhat, axes=(0, 0))
    u_dot_Z = np.tensordot(u, frame.Z, axes=(0, 0))
    d_theta = -u_dot_Z
    basis.append(
        (
            1j * d_theta * f + gv,
            1j * d_theta * psi_t + 1j * gam * f + 1j * gam * omega * gv - gam * g1 * u_dot_n,
        )
    )
    basis.append((1j * f, 1j * psi_t))
    for j in range(3):
        dZ = -frame.Gamma[:, j].reshape(3, 1, 1, 1) * np.ones_like(f)
        basis.append(pair(omega * gam * u[j], dZ))
    c = gam**2 / (1.0 + gam)
    dc = (gam**2 + 2.0 * gam) / (1.0 + gam) ** 2
    u_dot_y = np.tensordot(u, frame.y, axes=(0, 0))
    for j in range(3):
        e_j = np.zeros(3)
        e_j[j] = 1.0
        dZ = (
            dc * gam**3 * u[j] * u_dot_y * ubc
            + c * frame.y[j] * ubc
            + c * u_dot_y * e_j.reshape(3, 1, 1, 1)
        )
        d_theta_u = -omega * (frame.Z[j] + np.tensordot(u, dZ, axes=(0, 0)))
        basis.append(pair(d_theta_u, dZ, d_gamma=gam**3 * u[j], du=e_j))
    return basis


def identity_basis(profile: RadialProfile, grid: Grid3, g: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Rest-frame closed forms b_A (phi part) and a_A (minus the psi part) for frequency, phase, translation."""
    lam = SolitonParams(omega=profile.omega)
    basis = dlambda_soliton(profile, lam, grid, g)
    out = {"b_-1": basis[0][0], "a_-1": -basis[0][1], "b_0": basis[1][0], "a_0": -basis[1][1]}
    for j in range(3):
        out[f"b_{j + 1}"] = basis[2 + j][0]
        out[f"a_{j + 1}"] = -basis[2 + j][1]
    return out


def apply_m_lambda(v: np.ndarray, lam: SolitonParams, f: np.ndarray, spec: PotentialSpec, grid: Grid3) -> np.ndarray:
    """M_lambda v with the e=0 profile values f(|Z|) on the lattice."""
    u = lam.u_array
    g = gamma(u)
    w = lam.omega
    u_grad_v = np.tensordot(u, lattice.gradient(v, grid), axes=(0, 0))
    return (
        -lattice.laplacian(v, grid)
        + (spec.m**2 + g**2 * w**2 * float(u @ u)) * v
        + 2j * w * g * u_grad_v
        - spec.beta(f) * v
        - f * spec.beta_prime(f) * np.real(v)
    )


def identity_residuals(
    profile: RadialProfile, lam: SolitonParams, grid: Grid3, g: np.ndarray | None = None
) -> np.ndarray:
    """Relative residuals of the co-moving identities for each parameter direction.

    (i gamma omega - u.grad) d_A phi - d_A psi = -sum_B d_B phi dV0_B/dlambda_A and
    (i gamma omega - u.grad) d_A psi + M_lambda d_A phi = -sum_B d_B psi dV0_B/dlambda_A.
    """
    basis = dlambda_soliton(profile, lam, grid, g)
    f = profile_function(profile)(boost_frame(lam, grid).rho)
    jac = v0_jacobian(lam)
    u = lam.u_array
    gw = gamma(u) * lam.omega

    def transport(v):
        return 1j * gw * v - np.tensordot(u, lattice.gradient(v, grid), axes=(0, 0))

    out = np.zeros(8)
    for a, (dphi, dpsi) in enumerate(basis):
        rhs1 = -sum(basis[b][0] * jac[b, a] for b in range(8) if jac[b, a] != 0.0)
        rhs2 = -sum(basis[b][1] * jac[b, a] for b in range(8) if jac[b, a] != 0.0)
        t_phi, t_psi = transport(dphi), transport(dpsi)
        m_phi = apply_m_lambda(dphi, lam, f, profile.potential, grid)
        r1 = lattice.l2_norm(t_phi - dpsi - rhs1, grid)
        r2 = lattice.l2_norm(t_psi + m_phi - rhs2, grid)
        scale = sum(lattice.l2_norm(x, grid) for x in (t_phi, dpsi, t_psi, m_phi))
        out[a] = (r1 + r2) / max(scale, 1e-300)
    logger.debug("identity residuals: %s", np.array2string(out, precision=2))
    return out


def _u_grad_vector(u: np.ndarray, A: np.ndarray, grid: Grid3) -> np.ndarray:
    """(u . grad) A componentwise."""
    return np.tensordot(u, lattice.gradient(A, grid), axes=(0, 0))


def quadratic_forms(
    pert: PerturbationState, lam: SolitonParams, profile: RadialProfile
) -> tuple[float, float, float]:
    """(W, K, Xi) with M_lambda built on the e=0 profile."""
    grid = pert.grid
    u = lam.u_array
    gw = gamma(u) * lam.omega
    K = 0.5 * (
        lattice.l2_inner(pert.E_tilde, pert.E_tilde, grid)
        + lattice.l2_inner(lattice.curl(pert.A_tilde, grid), lattice.curl(pert.A_tilde, grid), grid)
        + 2.0 * lattice.l2_inner(pert.E_tilde, _u_grad_vector(u, pert.A_tilde, grid), grid)
    )
    f = profile_function(profile)(boost_frame(lam, grid).rho)
    v, w = pert.v, pert.w
    m_v = apply_m_lambda(v, lam, f, profile.potential, grid)
    u_grad_v = np.tensordot(u, lattice.gradient(v, grid), axes=(0, 0))
    Xi = 0.5 * (
        lattice.l2_inner(w - 1j * gw * v, w - 1j * gw * v, grid)
        + lattice.l2_inner(v, m_v - gw**2 * v, grid)
        + 2.0 * lattice.l2_inner(w, u_grad_v, grid)
    )
    return K + Xi, K, Xi


def _dot3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise <a, b> = Re sum_j conj(a_j) b_j."""
    return np.real(np.sum(np.conj(a) * b, axis=0))


def wtilde_parts(
    pert: PerturbationState,
    lam: SolitonParams,
    profile: RadialProfile,
    external: Background | None = None,
    coupled: RadialProfile | None = None,
    t: float = 0.0,
) -> dict[str, float]:
    """W~ split by homogeneity in (v, A~).

    W~ = W + [H2(e, a) - H2(0, 0)] + H3 + H4, where the bracket holds the coupling-dependent part
    of the quadratic Hamiltonian around the charged soliton in the background a^{delta,chi}.
    """
    W, K, Xi = quadratic_forms(pert, lam, profile)
    coupled = coupled if coupled is not None else profile
    e = coupled.e
    grid = pert.grid
    frame = boost_frame(lam, grid)
    shape = frame.rho.shape
    fe = profile_function(coupled)(frame.rho)
    alpha = alpha_function(coupled)(frame.rho) if e != 0.0 else np.zeros(shape)
    a_chi = np.zeros((3,) + shape) if external is None else external.lattice_potentials(t, grid)[1]
    ubc = lam.u_array.reshape(3, 1, 1, 1)
    gam = frame.gamma
    b_e = gam * (lam.omega - e * alpha) * ubc + e * a_chi
    b_0 = gam * lam.omega * ubc * np.ones(shape)
    v = pert.v
    At = pert.A_tilde
    grad_v = lattice.gradient(v, grid)
    dv_e = grad_v - 1j * b_e * v
    dv_0 = grad_v - 1j * b_0 * v
    df_e = lattice.gradient(fe, grid) - 1j * b_e * fe
    A2 = np.sum(At**2, axis=0)
    dens2 = (
        e**2 * fe**2 * A2
        + np.sum(np.abs(dv_e) ** 2, axis=0)
        - np.sum(np.abs(dv_0) ** 2, axis=0)
        - 2.0 * _dot3(1j * e * At * fe, dv_e)
        - 2.0 * _dot3(1j * e * At * v, df_e)
    )
    vol = grid.cell_volume
    delta2 = 0.5 * float(np.sum(dens2)) * vol
    cubic = float(np.sum(_dot3(dv_e, -1j * e * At * v) + e**2 * A2 * fe * np.real(v))) * vol
    quartic = 0.5 * e**2 * float(np.sum(A2 * np.abs(v) ** 2)) * vol
    return {
        "W": W,
        "K": K,
        "Xi": Xi,
        "quadratic": W + delta2,
        "cubic": cubic,
        "quartic": quartic,
        "total": W + delta2 + cubic + quartic,
    }


def wtilde(
    pert: PerturbationState,
    lam: SolitonParams,
    profile: RadialProfile,
    external: Background | None = None,
    coupled: RadialProfile | None = None,
    t: float = 0.0,
) -> float:
    return wtilde_parts(pert, lam, profile, external, coupled, t)["total"]


class SolitonFamily:
    """Radial data across frequencies on one radial grid.

    Ground states are solved on demand, cached by frequency and continued from the
    nearest cached frequency. Cache access is serialized so fits may run on worker threads.
    """

    def __init__(self, spec: PotentialSpec, grid: RadialGrid, e: float = 0.0):
        self.spec = spec
        self.grid = grid
        self.e = e
        self._profiles: OrderedDict[float, RadialProfile] = OrderedDict()
        self._coupled: OrderedDict[float, RadialProfile] = OrderedDict()
        self._g: OrderedDict[float, np.ndarray] = OrderedDict()
        self._lock = threading.RLock()

    @staticmethod
    def _put(cache: OrderedDict, key: float, value):
        cache[key] = value
        while len(cache) > FAMILY_CACHE_SIZE:
            cache.popitem(last=False)
        return value

    def _nearest(self, omega: float) -> RadialProfile | None:
        if not self._profiles:
            return None
        return min(self._profiles.items(), key=lambda kv: abs(kv[0] - omega))[1]

    def profile(self, omega: float) -> RadialProfile:
        key = float(omega)
        with self._lock:
            if key in self._profiles:
                return self._profiles[key]
            solved = solve_profile_e0(self.spec, key, self.grid, guess=self._nearest(key))
            return self._put(self._profiles, key, solved)

    def coupled(self, omega: float) -> RadialProfile:
        key = float(omega)
        if self.e == 0.0:
            return self.profile(key)
        with self._lock:
            if key in self._coupled:
                return self._coupled[key]
            profile = solve_profile_coupled(self.spec, key, self.e, self.grid, base=self.profile(key))
            return self._put(self._coupled, key, profile)

    def domega(self, omega: float) -> np.ndarray:
        key = float(omega)
        with self._lock:
            if key not in self._g:
                self._put(self._g, key, solve_domega(self.spec, self.profile(key)).g)
            return self._g[key]

    def dq_domega(self, omega: float) -> float:
        return dq_domega(self.profile(omega), self.domega(omega))

    def is_stable(self, omega: float) -> bool:
        return self.dq_domega(omega) < 0.0
