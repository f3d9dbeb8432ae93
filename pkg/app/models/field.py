from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator


class Grid3(BaseModel):
    """Periodic cube [-L/2, L/2)^3 with n points per axis."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=8)
    L: float = Field(gt=0)

    @field_validator("n")
    @classmethod
    def power_of_two(cls, n: int) -> int:
        if n & (n - 1):
            raise ValueError(f"n={n} is not a power of two")
        return n

    @computed_field
    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def axis(self) -> np.ndarray:
        return -0.5 * self.L + self.h * np.arange(self.n)

    @property
    def coords(self) -> np.ndarray:
        """Lattice points as an array of shape (3, n, n, n)."""
        return np.stack(np.meshgrid(self.axis, self.axis, self.axis, indexing="ij"))

    @property
    def cell_volume(self) -> float:
        return self.h**3


class FieldState(BaseModel):
    """(phi, psi, A, E) on the lattice at time t.

    A and E are the finite-energy parts; a prescribed background a^{delta,chi} is carried
    separately and enters through covariant derivatives.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: Grid3
    t: float = 0.0
    e: float = 0.0
    phi: np.ndarray
    psi: np.ndarray
    A: np.ndarray
    E: np.ndarray
    provenance: dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def vacuum(cls, grid: Grid3, e: float = 0.0, t: float = 0.0) -> "FieldState":
        shape = (grid.n,) * 3
        return cls(
            grid=grid,
            t=t,
            e=e,
            phi=np.zeros(shape, dtype=complex),
            psi=np.zeros(shape, dtype=complex),
            A=np.zeros((3,) + shape),
            E=np.zeros((3,) + shape),
        )

    def copy(self) -> "FieldState":
        return self.model_copy(
            update={
                "phi": self.phi.copy(),
                "psi": self.psi.copy(),
                "A": self.A.copy(),
                "E": self.E.copy(),
                "provenance": dict(self.provenance),
            }
        )

    def replace(self, **fields) -> "FieldState":
        return self.model_copy(update=fields)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.phi))
            and np.all(np.isfinite(self.psi))
            and np.all(np.isfinite(self.A))
            and np.all(np.isfinite(self.E))
        )
