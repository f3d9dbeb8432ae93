from enum import Enum
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, model_validator


class PotentialFamily(str, Enum):
    PURE_POWER = "pure_power"
    CUBIC_QUINTIC = "cubic_quintic"


class PotentialSpec(BaseModel):
    """Self-interaction V(phi) = m^2|phi|^2/2 - U(|phi|) with U(f) = int_0^f t beta(t) dt.

    pure_power:    coefficients (b, p), beta(f) = b f^(p-2), 3 < p < 6
    cubic_quintic: coefficients (b1, b2), beta(f) = b1 f^2 - b2 f^4
    """

    model_config = ConfigDict(frozen=True)

    family: PotentialFamily
    m: float = Field(gt=0)
    coefficients: tuple[float, ...]

    @model_validator(mode="after")
    def check_coefficients(self) -> "PotentialSpec":
        if len(self.coefficients) != 2:
            raise ValueError(f"{self.family.value} takes exactly two coefficients")
        if self.family == PotentialFamily.PURE_POWER:
            b, p = self.coefficients
            if b <= 0:
                raise ValueError("pure_power needs b > 0")
            if not 3.0 < p < 6.0:
                raise ValueError(f"pure_power exponent p={p} outside (3, 6)")
        else:
            b1, b2 = self.coefficients
            if b1 <= 0 or b2 < 0:
                raise ValueError("cubic_quintic needs b1 > 0 and b2 >= 0")
        return self

    @property
    def kappa(self) -> float:
        """Exponent of the Lipschitz bound |V'(a)-V'(b)| <= C|a-b|(1+|a|^(4-kappa)+|b|^(4-kappa))."""
        if self.family == PotentialFamily.PURE_POWER:
            return float(np.clip(6.0 - self.coefficients[1], 1e-6, 4.0 - 1e-6))
        return 1.0

    def beta(self, f: ArrayLike) -> np.ndarray:
        f = np.abs(np.asarray(f, dtype=float))
        if self.family == PotentialFamily.PURE_POWER:
            b, p = self.coefficients
            return b * f ** (p - 2.0)
        b1, b2 = self.coefficients
        return b1 * f**2 - b2 * f**4

    def beta_prime(self, f: ArrayLike) -> np.ndarray:
        f = np.abs(np.asarray(f, dtype=float))
        if self.family == PotentialFamily.PURE_POWER:
            b, p = self.coefficients
            return b * (p - 2.0) * f ** (p - 3.0)
        b1, b2 = self.coefficients
        return 2.0 * b1 * f - 4.0 * b2 * f**3

    def beta_second(self, f: ArrayLike) -> np.ndarray:
        f = np.abs(np.asarray(f, dtype=float))
        if self.family == PotentialFamily.PURE_POWER:
            b, p = self.coefficients
            with np.errstate(divide="ignore"):
                return b * (p - 2.0) * (p - 3.0) * f ** (p - 4.0)
        b1, b2 = self.coefficients
        return 2.0 * b1 - 12.0 * b2 * f**2

    def U(self, f: ArrayLike) -> np.ndarray:
        f = np.abs(np.asarray(f, dtype=float))
        if self.family == PotentialFamily.PURE_POWER:
            b, p = self.coefficients
            return b * f**p / p
        b1, b2 = self.coefficients
        return b1 * f**4 / 4.0 - b2 * f**6 / 6.0

    def U_prime(self, f: ArrayLike) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return f * self.beta(f)

    def U_second(self, f: ArrayLike) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return self.beta(f) + np.abs(f) * self.beta_prime(f)

    def U_third(self, f: ArrayLike) -> np.ndarray:
        f = np.abs(np.asarray(f, dtype=float))
        return 2.0 * self.beta_prime(f) + f * self.beta_second(f)

    def V(self, phi: ArrayLike) -> np.ndarray:
        mod = np.abs(np.asarray(phi))
        return 0.5 * self.m**2 * mod**2 - self.U(mod)

    def V_prime(self, phi: ArrayLike) -> np.ndarray:
        """Gradient of V with respect to (Re phi, Im phi), as a complex number."""
        phi = np.asarray(phi, dtype=complex)
        return self.m**2 * phi - self.beta(np.abs(phi)) * phi

    def lipschitz_constant(self, radius: float) -> float:
        """C of the Lipschitz bound, valid for |phi|, |psi| <= radius."""
        if self.family == PotentialFamily.PURE_POWER:
            b, p = self.coefficients
            return self.m**2 + b * (p - 1.0)
        b1, b2 = self.coefficients
        return self.m**2 + 3.0 * b1 + 5.0 * b2 * max(radius, 1.0)


class HypothesisStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INDETERMINATE = "indeterminate"
    ASSUMED = "assumed"


class HypothesisCheck(BaseModel):
    status: HypothesisStatus
    detail: str
    value: Optional[float] = None


class HypothesisReport(BaseModel):
    omega: float
    potential: PotentialSpec
    checks: dict[str, HypothesisCheck]
    zeta: Optional[float] = None
    l1: Optional[float] = None
    f_max: Optional[float] = None

    @property
    def existence_ok(self) -> bool:
        return self.checks["exist3"].status == HypothesisStatus.PASS
