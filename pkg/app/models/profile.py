from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field

from app.core.errors import DomainError
from app.models.potential import PotentialSpec


class RadialGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=256)
    r_max: float = Field(gt=0)

    @computed_field
    @property
    def h(self) -> float:
        return self.r_max / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    @classmethod
    def for_omega(cls, m: float, omega: float, n: int = 1024, tail_lengths: float = 14.0) -> "RadialGrid":
        """Grid whose outer radius spans `tail_lengths` decay lengths 1/sqrt(m^2 - omega^2)."""
        if omega**2 >= m**2:
            raise DomainError(detail=f"omega^2={omega**2} must be below m^2={m**2}")
        return cls(n=n, r_max=tail_lengths / np.sqrt(m**2 - omega**2))

    def refined(self) -> "RadialGrid":
        """Same r_max, spacing halved."""
        return RadialGrid(n=2 * self.n - 1, r_max=self.r_max)


class DecayFit(BaseModel):
    rate: float
    power: float
    residual: float
    window: tuple[float, float]


class RadialProfile(BaseModel):
    """Ground state f (and potential alpha when e != 0) on a radial grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    potential: PotentialSpec
    grid: RadialGrid
    omega: float
    e: float = 0.0
    f: np.ndarray
    alpha: np.ndarray
    f0_center: float
    residual_norm: float
    alpha_residual_norm: float = 0.0
    iterations: int = 0
    residual_history: list[float] = Field(default_factory=list)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def tail_kappa(self) -> float:
        """Decay rate sqrt(m^2 - (omega - e alpha(r_max))^2) used in the outer boundary condition."""
        shifted = self.omega - self.e * float(self.alpha[-1])
        return float(np.sqrt(self.potential.m**2 - shifted**2))

    @property
    def center_slope(self) -> float:
        """Ghost-node centred derivative at r=0; zero by the regularity condition f(-h) = f(h)."""
        return 0.0

    def metadata(self) -> dict:
        return {
            "potential": self.potential.model_dump(mode="json"),
            "grid": self.grid.model_dump(mode="json"),
            "omega": self.omega,
            "e": self.e,
            "f0_center": self.f0_center,
            "residual_norm": self.residual_norm,
            "alpha_residual_norm": self.alpha_residual_norm,
            "iterations": self.iterations,
        }


class DomegaSolution(BaseModel):
    """g = d f_omega / d omega from L_+ g = 2 omega f."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    omega: float
    g: np.ndarray
    residual_norm: float
