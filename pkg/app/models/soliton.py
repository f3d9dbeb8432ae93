import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from app.core.errors import DomainError
from app.models.field import Grid3

# Index of each modulation parameter in the packed 8-vector.
OMEGA, THETA = 0, 1
XI = slice(2, 5)
U = slice(5, 8)
PARAM_NAMES = ("omega", "theta", "xi1", "xi2", "xi3", "u1", "u2", "u3")


class SolitonParams(BaseModel):
    """lambda = (omega, theta, xi, u), packed in that order."""

    model_config = ConfigDict(frozen=True)

    omega: float
    theta: float = 0.0
    xi: tuple[float, float, float] = (0.0, 0.0, 0.0)
    u: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @field_validator("u")
    @classmethod
    def subluminal(cls, u):
        if float(np.linalg.norm(u)) >= 1.0:
            raise ValueError(f"|u| = {np.linalg.norm(u):.6g} is not below 1")
        return u

    @property
    def xi_array(self) -> np.ndarray:
        return np.asarray(self.xi, dtype=float)

    @property
    def u_array(self) -> np.ndarray:
        return np.asarray(self.u, dtype=float)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.omega, self.theta], self.xi_array, self.u_array])

    @classmethod
    def from_vector(cls, vec) -> "SolitonParams":
        vec = np.asarray(vec, dtype=float)
        try:
            return cls(
                omega=float(vec[OMEGA]),
                theta=float(vec[THETA]),
                xi=tuple(float(x) for x in vec[XI]),
                u=tuple(float(x) for x in vec[U]),
            )
        except ValidationError as exc:
            raise DomainError(detail=f"parameter vector outside the admissible set: {exc.errors()[0]['msg']}")

    def shifted(self, index: int, step: float) -> "SolitonParams":
        vec = self.as_vector()
        vec[index] += step
        return SolitonParams.from_vector(vec)


class PerturbationState(BaseModel):
    """(v, w, A~, E~) around a soliton; v and w are phase stripped."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: Grid3
    v: np.ndarray
    w: np.ndarray
    A_tilde: np.ndarray
    E_tilde: np.ndarray

    @classmethod
    def zero(cls, grid: Grid3) -> "PerturbationState":
        shape = (grid.n,) * 3
        return cls(
            grid=grid,
            v=np.zeros(shape, dtype=complex),
            w=np.zeros(shape, dtype=complex),
            A_tilde=np.zeros((3,) + shape),
            E_tilde=np.zeros((3,) + shape),
        )

    def scaled(self, c: float) -> "PerturbationState":
        return PerturbationState(grid=self.grid, v=c * self.v, w=c * self.w, A_tilde=c * self.A_tilde, E_tilde=c * self.E_tilde)
