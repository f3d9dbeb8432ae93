from pathlib import Path
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import PreconditionViolation
from app.models.field import FieldState, Grid3


class EvolveConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dt: float = Field(gt=0)
    t_end: float = Field(ge=0)
    cfl_max: float = Field(default=0.5, gt=0)
    monitor_stride: int = Field(default=10, ge=1)
    snapshot_stride: int = Field(default=0, ge=0)
    divergence_cleaning: bool = False
    gauss_e_factor: bool = True
    dealias: bool = True

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def check_cfl(self, grid: Grid3) -> None:
        if self.dt > self.cfl_max * grid.h * (1.0 + 1e-12):
            raise PreconditionViolation(
                detail=f"dt={self.dt} exceeds cfl_max*h={self.cfl_max * grid.h:.6g}"
            )


class MonitorRecord(BaseModel):
    t: float
    energy: float
    gauss: float
    charge: float
    div_A: float
    norm: float
    W: Optional[float] = None
    W_tilde: Optional[float] = None

    def row(self) -> list[float]:
        nan = float("nan")
        return [
            self.t,
            self.energy,
            self.gauss,
            self.charge,
            self.div_A,
            self.norm,
            nan if self.W is None else self.W,
            nan if self.W_tilde is None else self.W_tilde,
        ]


MONITOR_COLUMNS = ("t", "energy", "gauss", "charge", "divA", "norm", "W", "W_tilde")


class Trajectory(BaseModel):
    """Monitors and the retained snapshots of one run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    monitors: list[MonitorRecord] = Field(default_factory=list)
    snapshots: list[FieldState] = Field(default_factory=list)
    snapshot_paths: list[Path] = Field(default_factory=list)
    final: FieldState
    steps: int = 0
