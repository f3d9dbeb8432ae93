from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ExternalPreset(str, Enum):
    VACUUM = "vacuum"
    UNIFORM_E = "uniform-E"
    UNIFORM_B = "uniform-B"
    GAUSSIAN_PULSE = "gaussian-pulse"


class ExternalFieldSpec(BaseModel):
    """Closed-form background a_mu and its scaling a^delta(t, x) = a(delta t, delta x) / delta.

    `direction` is the field direction of the uniform presets and the polarization of the
    pulse; `propagation` is the pulse direction (orthogonal to the polarization).
    """

    model_config = ConfigDict(frozen=True)

    preset: ExternalPreset = ExternalPreset.VACUUM
    amplitude: float = 0.0
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    propagation: tuple[float, float, float] = (1.0, 0.0, 0.0)
    width: float = Field(default=2.0, gt=0)
    carrier: float = 1.0
    offset: float = 0.0
    delta: Optional[float] = Field(default=None, gt=0)
    e: Optional[float] = Field(default=None, gt=0)
    k_exponent: Optional[float] = None

    @model_validator(mode="after")
    def check_scaling(self) -> "ExternalFieldSpec":
        if self.delta is None and self.e is None:
            object.__setattr__(self, "delta", 1.0)
        elif self.delta is None:
            k = self.k_exponent if self.k_exponent is not None else 0.25
            if not 0.0 < k < 0.5:
                raise ValueError(f"k_exponent={k} outside (0, 1/2)")
            object.__setattr__(self, "delta", float(self.e ** (1.0 - k)))
        d = np.asarray(self.direction, dtype=float)
        if np.linalg.norm(d) == 0:
            raise ValueError("direction must be nonzero")
        if self.preset == ExternalPreset.GAUSSIAN_PULSE:
            p = np.asarray(self.propagation, dtype=float)
            if abs(np.dot(d, p)) > 1e-12 * np.linalg.norm(d) * np.linalg.norm(p):
                raise ValueError("pulse polarization must be orthogonal to its propagation direction")
        return self

    @property
    def unit_direction(self) -> np.ndarray:
        d = np.asarray(self.direction, dtype=float)
        return d / np.linalg.norm(d)

    @property
    def unit_propagation(self) -> np.ndarray:
        p = np.asarray(self.propagation, dtype=float)
        return p / np.linalg.norm(p)
