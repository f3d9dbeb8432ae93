import logging

import numpy as np
from scipy import integrate, optimize

from app.core.errors import PreconditionViolation
from app.models.potential import (
    HypothesisCheck,
    HypothesisReport,
    HypothesisStatus,
    PotentialSpec,
)

logger = logging.getLogger(__name__)

F_MAX_FACTOR = 50.0


def eval_potential(spec: PotentialSpec, phi: complex) -> float:
    return float(spec.V(phi))


def u_by_quadrature(spec: PotentialSpec, f: float) -> float:
    """Independent oracle for U(f): adaptive quadrature of t*beta(t) on [0, f]."""
    value, _ = integrate.quad(lambda t: t * float(spec.beta(t)), 0.0, abs(f), epsabs=0.0, epsrel=1e-13, limit=200)
    return value


def lipschitz_sample(
    spec: PotentialSpec, n_pairs: int = 10_000, radius: float = 3.0, seed: int = 0
) -> float:
    """Largest observed ratio lhs/rhs of the V' Lipschitz bound; <= 1 means the bound held."""
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.random((2, n_pairs)))
    angle = 2.0 * np.pi * rng.random((2, n_pairs))
    a, b = r * np.exp(1j * angle)
    lhs = np.abs(spec.V_prime(a) - spec.V_prime(b))
    q = 4.0 - spec.kappa
    rhs = spec.lipschitz_constant(radius) * np.abs(a - b) * (1.0 + np.abs(a) ** q + np.abs(b) ** q)
    return float(np.max(lhs / rhs))


def _check_exist1(spec: PotentialSpec, f_max: float) -> HypothesisCheck:
    # U'(f) from finite differences of the even extension U(|f|) must be odd and match the closed form
    f = np.linspace(-f_max, f_max, 4001)
    h = f[1] - f[0]
    du = (spec.U(f + h) - spec.U(f - h)) / (2.0 * h)
    odd_err = np.max(np.abs(du + du[::-1])) / max(np.max(np.abs(du)), 1e-300)
    closed = np.sign(f) * spec.U_prime(np.abs(f))
    smooth_err = np.max(np.abs(du - closed)) / max(np.max(np.abs(closed)), 1e-300)
    if odd_err < 1e-10 and smooth_err < 1e-3:
        return HypothesisCheck(status=HypothesisStatus.PASS, detail="U' odd and C^1 on the sample", value=smooth_err)
    return HypothesisCheck(
        status=HypothesisStatus.FAIL,
        detail=f"oddness error {odd_err:.2e}, derivative mismatch {smooth_err:.2e}",
        value=smooth_err,
    )


def _check_exist2(spec: PotentialSpec) -> HypothesisCheck:
    if abs(float(spec.U_prime(0.0))) > 0 or abs(float(spec.U_second(0.0))) > 0:
        return HypothesisCheck(status=HypothesisStatus.FAIL, detail="U'(0) or U''(0) nonzero")
    f = np.logspace(-12, -4, 9)
    third = np.abs(spec.U_third(f))
    if np.all(third == 0.0):
        return HypothesisCheck(status=HypothesisStatus.PASS, detail="U''' vanishes near 0", value=0.0)
    for s in np.linspace(0.05, 0.95, 19):
        vals = f**s * third
        if np.all(np.diff(vals) > 0) and vals[0] < 0.5 * vals[-1]:
            return HypothesisCheck(
                status=HypothesisStatus.PASS, detail=f"f^s U'''(f) -> 0 with s={s:.2f}", value=float(s)
            )
    return HypothesisCheck(status=HypothesisStatus.INDETERMINATE, detail="no s in (0,1) certified on the sample")


def _search_zeta(spec: PotentialSpec, omega: float, search_max: float = 1e3) -> float | None:
    f = np.linspace(0.0, search_max, 200_001)[1:]
    gap = spec.U(f) - 0.5 * (spec.m**2 - omega**2) * f**2
    hits = np.nonzero(gap > 0)[0]
    return float(f[hits[0]]) if hits.size else None


def _check_exist4(spec: PotentialSpec) -> HypothesisCheck:
    f = np.logspace(3, 6, 31)
    ratio = spec.U_prime(f) / f**5
    if np.all(ratio <= 0.0):
        return HypothesisCheck(
            status=HypothesisStatus.PASS,
            detail="U'(f)/f^5 <= 0 for large f (subcritical growth)",
            value=float(ratio[-1]),
        )
    slope = np.polyfit(np.log(f), np.log(np.abs(ratio)), 1)[0]
    if np.all(ratio > 0) and np.all(np.diff(ratio) < 0) and slope < -1e-3:
        return HypothesisCheck(status=HypothesisStatus.PASS, detail=f"U'(f)/f^5 ~ f^{slope:.3f} -> 0", value=float(ratio[-1]))
    if slope >= 0 and np.all(ratio > 0):
        return HypothesisCheck(status=HypothesisStatus.FAIL, detail="U'(f)/f^5 does not decay", value=float(ratio[-1]))
    return HypothesisCheck(status=HypothesisStatus.INDETERMINATE, detail="limit not certified on the sample")


def _check_u1(spec: PotentialSpec, omega: float, f_max: float) -> tuple[HypothesisCheck, float | None]:
    kappa2 = spec.m**2 - omega**2
    f = np.linspace(0.0, f_max, 100_001)[1:]
    gap = spec.U_prime(f) - kappa2 * f
    sign = np.sign(gap)
    changes = np.nonzero(sign[1:] != sign[:-1])[0]
    if sign[0] >= 0:
        return HypothesisCheck(status=HypothesisStatus.FAIL, detail="U'(f) >= (m^2-w^2) f near f=0"), None
    if changes.size == 0:
        return HypothesisCheck(status=HypothesisStatus.FAIL, detail="no sign change on (0, f_max]"), None
    i = changes[0]
    l1 = optimize.brentq(lambda x: float(spec.U_prime(x)) - kappa2 * x, f[i], f[i + 1], xtol=1e-14)
    if changes.size > 1:
        return (
            HypothesisCheck(
                status=HypothesisStatus.FAIL,
                detail=f"{changes.size} sign changes on (0, f_max]; uniqueness not covered",
                value=l1,
            ),
            l1,
        )
    slope = float(spec.U_second(l1)) - kappa2
    if slope <= 0:
        return HypothesisCheck(status=HypothesisStatus.FAIL, detail="U''(l1) - (m^2-w^2) <= 0", value=l1), l1
    return HypothesisCheck(status=HypothesisStatus.PASS, detail=f"single crossing at l1={l1:.6g}", value=l1), l1


def check_existence_hypotheses(spec: PotentialSpec, omega: float) -> HypothesisReport:
    if omega**2 >= spec.m**2:
        raise PreconditionViolation(detail=f"omega^2={omega**2} must be below m^2={spec.m**2}")

    zeta = _search_zeta(spec, omega)
    if zeta is None:
        exist3 = HypothesisCheck(status=HypothesisStatus.FAIL, detail="no zeta with U(zeta) > (m^2-w^2) zeta^2/2")
        f_max = 10.0
    else:
        exist3 = HypothesisCheck(status=HypothesisStatus.PASS, detail=f"zeta={zeta:.6g}", value=zeta)
        f_max = F_MAX_FACTOR * zeta

    u1, l1 = _check_u1(spec, omega, f_max)
    checks = {
        "exist1": _check_exist1(spec, min(f_max, 20.0)),
        "exist2": _check_exist2(spec),
        "exist3": exist3,
        "exist4": _check_exist4(spec),
        "u1": u1,
        "u2": HypothesisCheck(status=HypothesisStatus.ASSUMED, detail="not machine-checked"),
    }
    for name, check in checks.items():
        logger.debug("%s: %s (%s)", name, check.status.value, check.detail)
    return HypothesisReport(omega=omega, potential=spec, checks=checks, zeta=zeta, l1=l1, f_max=f_max)
