from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict


class OperatorKind(str, Enum):
    L_PLUS = "L+"
    L_MINUS = "L-"


class RadialOperator(BaseModel):
    """Weighted tridiagonal form: (K v)_i = diag_i v_i + off_i v_{i+1} + off_{i-1} v_{i-1}, L = K / w."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: OperatorKind
    ell: int
    omega: float
    diag: np.ndarray
    off: np.ndarray
    weights: np.ndarray
    r: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.off * v[1:]
        out[1:] += self.off * v[:-1]
        return out / self.weights

    def restrict(self, v: np.ndarray) -> np.ndarray:
        """Values of a full-grid function on this operator's nodes (origin dropped for ell >= 1)."""
        return v[-self.diag.size:]

    def norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(4.0 * np.pi * np.dot(self.weights, v**2)))


class Eigenpair(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    value: float
    vector: np.ndarray
    residual: float


class StabilityRow(BaseModel):
    omega: float
    q: float
    dq_domega_fd: float
    dq_domega_g: float
    relative_gap: float
    stable: bool


class DhDomegaReport(BaseModel):
    omega: float
    h_step: float
    dh_domega: float
    minus_q: float
    relative_error: float
    wide_tail: bool
    required_r_max: float


class SpectrumReport(BaseModel):
    omega: float
    lplus_l0: list[float]
    lplus_l1: list[float]
    lminus_l0: list[float]
    negative_count_l0: int
    negative_count_l1: int
    kernel_gap: float
    s1_holds: bool
    ker_holds: bool
    dq_domega: float
    stable: bool
    mass: float
    charge: float
    notes: Optional[str] = None
