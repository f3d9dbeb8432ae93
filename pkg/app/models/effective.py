from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class EffectiveState(BaseModel):
    """Point-particle state (xi, u) with the soliton mass and charge frozen at t = 0."""

    model_config = ConfigDict(frozen=True)

    xi: tuple[float, float, float] = (0.0, 0.0, 0.0)
    u: tuple[float, float, float] = (0.0, 0.0, 0.0)
    M_S: float = Field(gt=0)
    Q_S: float
    e: float = Field(default=0.0, ge=0)

    @field_validator("u")
    @classmethod
    def subluminal(cls, u):
        if float(np.linalg.norm(u)) >= 1.0:
            raise ValueError(f"|u| = {np.linalg.norm(u):.6g} is not below 1")
        return u

    @property
    def momentum(self) -> np.ndarray:
        u = np.asarray(self.u, dtype=float)
        return self.M_S * u / np.sqrt(1.0 - float(u @ u))


class EffectivePath(BaseModel):
    times: list[float]
    xi: list[list[float]]
    u: list[list[float]]
    M_S: float
    Q_S: float
    e: float = 0.0

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    @property
    def xi_array(self) -> np.ndarray:
        return np.asarray(self.xi, dtype=float).reshape(-1, 3)

    @property
    def u_array(self) -> np.ndarray:
        return np.asarray(self.u, dtype=float).reshape(-1, 3)

    def rows(self) -> np.ndarray:
        return np.column_stack([self.t, self.xi_array, self.u_array])

    @staticmethod
    def columns() -> tuple[str, ...]:
        return ("t", "xi1", "xi2", "xi3", "u1", "u2", "u3")


class ConvergenceRow(BaseModel):
    e: float
    max_xi: float
    ratio: float
    ratio_to_previous: Optional[float] = None


class ComparisonReport(BaseModel):
    """Deviation of a fitted track from the effective path over their common samples."""

    e: float
    samples: int
    t_start: float
    t_end: float
    max_xi: float
    rms_xi: float
    max_u: float
    rms_u: float
    convergence: list[ConvergenceRow] = Field(default_factory=list)
