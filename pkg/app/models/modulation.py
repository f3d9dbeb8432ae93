from typing import Optional

import numpy as np
from pydantic import BaseModel, Field

from app.models.soliton import PARAM_NAMES, SolitonParams


class FitResult(BaseModel):
    lam: SolitonParams
    residual_norm: float
    iterations: int
    pert_norm: float
    stable: bool = True


class ModulationTrack(BaseModel):
    """Fitted lambda(t) with per-sample diagnostics."""

    times: list[float] = Field(default_factory=list)
    lambdas: list[list[float]] = Field(default_factory=list)
    residual_norms: list[float] = Field(default_factory=list)
    pert_norms: list[float] = Field(default_factory=list)
    W: list[float] = Field(default_factory=list)
    iterations: list[int] = Field(default_factory=list)
    flags: list[str] = Field(default_factory=list)
    e: float = 0.0

    def append(self, t: float, fit: FitResult, W: float, flag: str = "") -> None:
        self.times.append(t)
        self.lambdas.append(fit.lam.as_vector().tolist())
        self.residual_norms.append(fit.residual_norm)
        self.pert_norms.append(fit.pert_norm)
        self.W.append(W)
        self.iterations.append(fit.iterations)
        self.flags.append(flag)

    def params(self, index: int) -> SolitonParams:
        return SolitonParams.from_vector(self.lambdas[index])

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.lambdas, dtype=float).reshape(-1, 8)

    @property
    def xi(self) -> np.ndarray:
        return self.array[:, 2:5]

    @property
    def u(self) -> np.ndarray:
        return self.array[:, 5:8]

    def theta_unwrapped(self) -> np.ndarray:
        return np.unwrap(self.array[:, 1])

    def rows(self) -> np.ndarray:
        return np.column_stack(
            [self.times, self.array, self.residual_norms, self.pert_norms, self.W]
        )

    @staticmethod
    def columns() -> tuple[str, ...]:
        return ("t",) + PARAM_NAMES + ("residual", "pert_norm", "W")


class PositivityReport(BaseModel):
    """Sampled lower bound of Xi on the constraint set and the W / energy-norm equivalence constant."""

    omega: float
    samples: int
    tau: float
    c_equivalence: Optional[float] = None
