import os

os.environ.setdefault("KGM_LEDGER_URL", "sqlite://")
os.environ.setdefault("KGM_LOG_LEVEL", "WARNING")

import pytest

from app.models.field import Grid3
from app.models.potential import PotentialFamily, PotentialSpec
from app.models.profile import RadialGrid
from app.physics.radial_profile import solve_profile_e0
from app.physics.soliton_family import SolitonFamily

# Test soliton: pure power p=4 at omega=0.5 on a 32^3 box of side 24.
OMEGA = 0.5
BOX_TAIL_TOL = 1e-3


@pytest.fixture(scope="session")
def quartic() -> PotentialSpec:
    return PotentialSpec(family=PotentialFamily.PURE_POWER, m=1.0, coefficients=(1.0, 4.0))


@pytest.fixture(scope="session")
def profile_08(quartic):
    return solve_profile_e0(quartic, 0.8, RadialGrid.for_omega(1.0, 0.8, n=1024))


@pytest.fixture(scope="session")
def radial_grid() -> RadialGrid:
    return RadialGrid.for_omega(1.0, OMEGA, n=1024)


@pytest.fixture(scope="session")
def family(quartic, radial_grid) -> SolitonFamily:
    return SolitonFamily(quartic, radial_grid, 0.0)


@pytest.fixture(scope="session")
def charged_family(quartic, radial_grid) -> SolitonFamily:
    return SolitonFamily(quartic, radial_grid, 0.05)


@pytest.fixture(scope="session")
def grid() -> Grid3:
    return Grid3(n=32, L=24.0)
