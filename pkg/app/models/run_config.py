from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.models.evolution import EvolveConfig
from app.models.external import ExternalFieldSpec, ExternalPreset
from app.models.field import Grid3
from app.models.potential import PotentialFamily, PotentialSpec
from app.models.profile import RadialGrid
from app.models.soliton import SolitonParams

SCHEMA_VERSION = 1


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PotentialSection(Section):
    family: PotentialFamily = PotentialFamily.PURE_POWER
    m: float = Field(default=1.0, gt=0)
    coefficients: tuple[float, float] = (1.0, 4.0)

    def spec(self) -> PotentialSpec:
        return PotentialSpec(family=self.family, m=self.m, coefficients=self.coefficients)


class ProfileSection(Section):
    omega: float = Field(gt=0)
    e: float = Field(default=0.0, ge=0)
    n: int = Field(default=1024, ge=256)
    r_max: Optional[float] = Field(default=None, gt=0)
    tail_lengths: float = Field(default=14.0, gt=0)
    omega_list: list[float] = Field(default_factory=list)
    eigenvalues: int = Field(default=4, ge=2)

    def radial_grid(self, m: float) -> RadialGrid:
        if self.r_max is not None:
            return RadialGrid(n=self.n, r_max=self.r_max)
        return RadialGrid.for_omega(m, self.omega, n=self.n, tail_lengths=self.tail_lengths)


class ExternalSection(Section):
    preset: ExternalPreset = ExternalPreset.VACUUM
    amplitude: float = 0.0
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    propagation: tuple[float, float, float] = (1.0, 0.0, 0.0)
    width: float = Field(default=2.0, gt=0)
    carrier: float = 1.0
    offset: float = 0.0
    delta: Optional[float] = Field(default=None, gt=0)
    k_exponent: float = 0.25

    def spec(self, e: float) -> ExternalFieldSpec:
        """Background for coupling e; without an explicit delta it is derived as e^(1-k)."""
        values = self.model_dump()
        if self.delta is None and e > 0:
            values["e"] = e
        return ExternalFieldSpec(**values)


class GridSection(Section):
    n: int = Field(default=64, ge=8)
    L: float = Field(default=32.0, gt=0)

    def grid(self) -> Grid3:
        return Grid3(n=self.n, L=self.L)


class EvolveSection(Section):
    dt: float = Field(default=0.25, gt=0)
    t_end: float = Field(default=5.0, ge=0)
    cfl_max: float = Field(default=0.5, gt=0)
    monitor_stride: int = Field(default=10, ge=1)
    snapshot_stride: int = Field(default=10, ge=0)
    divergence_cleaning: bool = False
    gauss_e_factor: bool = True
    dealias: bool = True
    theta: float = 0.0
    xi: tuple[float, float, float] = (0.0, 0.0, 0.0)
    u: tuple[float, float, float] = (0.0, 0.0, 0.0)
    require_stable: bool = True
    box_tail_tol: float = Field(default=1e-10, gt=0)
    monitor_w: bool = False
    pipelined: bool = False

    def config(self) -> EvolveConfig:
        return EvolveConfig(
            dt=self.dt,
            t_end=self.t_end,
            cfl_max=self.cfl_max,
            monitor_stride=self.monitor_stride,
            snapshot_stride=self.snapshot_stride,
            divergence_cleaning=self.divergence_cleaning,
            gauss_e_factor=self.gauss_e_factor,
            dealias=self.dealias,
        )

    def lam0(self, omega: float) -> SolitonParams:
        return SolitonParams(omega=omega, theta=self.theta, xi=self.xi, u=self.u)


class TrackSection(Section):
    tol: float = Field(default=1e-9, gt=0)
    max_iter: int = Field(default=25, ge=1)
    fd_step: float = Field(default=1e-6, gt=0)
    basin: float = Field(default=0.3, gt=0)
    snapshot_dir: Optional[str] = None
    pos_samples: int = Field(default=0, ge=0)

    def fit_kwargs(self) -> dict:
        return {"tol": self.tol, "max_iter": self.max_iter, "fd_step": self.fd_step, "basin": self.basin}


class CompareSection(Section):
    dt: float = Field(default=0.01, gt=0)
    track_path: Optional[str] = None
    halvings: int = Field(default=0, ge=0)


class RunConfig(Section):
    """Validated run configuration; every section rejects unknown keys."""

    schema_version: Literal[1] = SCHEMA_VERSION
    potential: PotentialSection = Field(default_factory=PotentialSection)
    profile: ProfileSection
    external: ExternalSection = Field(default_factory=ExternalSection)
    grid: GridSection = Field(default_factory=GridSection)
    evolve: EvolveSection = Field(default_factory=EvolveSection)
    track: TrackSection = Field(default_factory=TrackSection)
    compare: CompareSection = Field(default_factory=CompareSection)
