import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import fft

from app.core.config import settings
from app.core.errors import ArtifactError
from app.models.field import FieldState, Grid3
from app.models.potential import PotentialSpec

logger = logging.getLogger(__name__)

_AXES = (-3, -2, -1)
NEUTRALITY_TOL = 1e-8
_reported: set[str] = set()

SNAPSHOT_MAGIC = b"KGM1"
SNAPSHOT_HEADER = np.dtype(
    [("magic", "S4"), ("n", "<i8"), ("L", "<f8"), ("t", "<f8"), ("e", "<f8"), ("fields", "<i8")]
)
SNAPSHOT_FIELDS = 10


@dataclass(frozen=True)
class Wavenumbers:
    """Fourier multipliers on a Grid3.

    `k` keeps the Nyquist wavenumber and feeds the Laplacian; `k_odd` zeroes it and feeds
    first derivatives, so gradients of real fields stay real and div, grad, curl compose exactly.
    """

    k: np.ndarray
    k_odd: np.ndarray
    k2: np.ndarray
    k2_odd: np.ndarray
    mask: np.ndarray


@lru_cache(maxsize=8)
def wavenumbers(grid: Grid3) -> Wavenumbers:
    n = grid.n
    k1 = 2.0 * np.pi * fft.fftfreq(n, d=grid.h)
    k1[n // 2] = np.pi / grid.h
    k1_odd = k1.copy()
    k1_odd[n // 2] = 0.0
    k = np.stack(np.meshgrid(k1, k1, k1, indexing="ij"))
    k_odd = np.stack(np.meshgrid(k1_odd, k1_odd, k1_odd, indexing="ij"))
    cutoff = (2.0 / 3.0) * np.pi / grid.h
    mask = np.all(np.abs(k) <= cutoff, axis=0)
    return Wavenumbers(k=k, k_odd=k_odd, k2=np.sum(k**2, axis=0), k2_odd=np.sum(k_odd**2, axis=0), mask=mask)


def fftn(u: np.ndarray) -> np.ndarray:
    return fft.fftn(u, axes=_AXES, workers=settings.THREADS)


def ifftn(u: np.ndarray, real: bool) -> np.ndarray:
    out = fft.ifftn(u, axes=_AXES, workers=settings.THREADS)
    return out.real if real else out


def gradient(u: np.ndarray, grid: Grid3) -> np.ndarray:
    """Scalar u -> (3, n, n, n); vector u -> (3, 3, n, n, n) with [i, j] = d_i u_j."""
    k = wavenumbers(grid).k_odd
    k = k.reshape((3,) + (1,) * (u.ndim - 3) + k.shape[1:])
    return ifftn(1j * k * fftn(u)[None], real=np.isrealobj(u))


def laplacian(u: np.ndarray, grid: Grid3) -> np.ndarray:
    kw = wavenumbers(grid)
    return ifftn(-kw.k2 * fftn(u), real=np.isrealobj(u))


def divergence(v: np.ndarray, grid: Grid3) -> np.ndarray:
    kw = wavenumbers(grid)
    return ifftn(np.sum(1j * kw.k_odd * fftn(v), axis=0), real=np.isrealobj(v))


def curl(v: np.ndarray, grid: Grid3) -> np.ndarray:
    kw = wavenumbers(grid)
    vh = fftn(v)
    k = kw.k_odd
    out = np.stack(
        [
            k[1] * vh[2] - k[2] * vh[1],
            k[2] * vh[0] - k[0] * vh[2],
            k[0] * vh[1] - k[1] * vh[0],
        ]
    )
    return ifftn(1j * out, real=np.isrealobj(v))


def dealias(u: np.ndarray, grid: Grid3) -> np.ndarray:
    """2/3-rule truncation."""
    return ifftn(wavenumbers(grid).mask * fftn(u), real=np.isrealobj(u))


@dataclass(frozen=True)
class PoissonResult:
    u: np.ndarray
    mean: float
    neutral: bool


def poisson_solve(
    rho: np.ndarray, grid: Grid3, metric: np.ndarray | None = None, source: str = "poisson"
) -> PoissonResult:
    """Zero-mean u with -Lap u = rho - mean(rho).

    A non-neutral source is flagged in the result; the first violation per `source` label is
    logged at WARNING, repeats at DEBUG.

    With a symmetric `metric` G the operator is -div(G grad u), using first-derivative
    wavenumbers so that div(G grad u) built from `gradient`/`divergence` matches exactly.
    """
    kw = wavenumbers(grid)
    rho_hat = fftn(rho)
    mean = rho_hat[0, 0, 0].real / grid.n**3 if np.isrealobj(rho) else rho_hat[0, 0, 0] / grid.n**3
    if metric is None:
        denom = kw.k2
    else:
        k = kw.k_odd
        denom = np.einsum("i...,ij,j...->...", k, metric, k)
    safe = np.where(denom > 0, denom, 1.0)
    u_hat = np.where(denom > 0, rho_hat / safe, 0.0)
    norm = float(np.sqrt(np.mean(np.abs(rho) ** 2)))
    neutral = abs(mean) <= NEUTRALITY_TOL * max(norm, 1e-300)
    if not neutral:
        level = logging.DEBUG if source in _reported else logging.WARNING
        _reported.add(source)
        logger.log(level, "%s: periodic neutrality violated, mean source %.3e removed", source, abs(mean))
    return PoissonResult(u=ifftn(u_hat, real=np.isrealobj(rho)), mean=mean, neutral=neutral)


def leray_project(v: np.ndarray, grid: Grid3) -> np.ndarray:
    """Remove the gradient part: v - grad Lap^{-1} div v."""
    kw = wavenumbers(grid)
    vh = fftn(v)
    k = kw.k_odd
    safe = np.where(kw.k2_odd > 0, kw.k2_odd, 1.0)
    kdotv = np.sum(k * vh, axis=0) / safe
    return ifftn(vh - k * kdotv[None], real=np.isrealobj(v))


def l2_inner(a: np.ndarray, b: np.ndarray, grid: Grid3) -> float:
    """<a, b> = Re sum conj(a) b h^3 (vector fields summed over components)."""
    return float(np.real(np.vdot(a.ravel(), b.ravel())) * grid.cell_volume)


def l2_norm(a: np.ndarray, grid: Grid3) -> float:
    return float(np.sqrt(l2_inner(a, a, grid)))


def covariant_gradient(phi: np.ndarray, total_A: np.ndarray, e: float, grid: Grid3) -> np.ndarray:
    return gradient(phi, grid) - 1j * e * total_A * phi[None]


def energy(
    state: FieldState,
    spec: PotentialSpec,
    background: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """H(phi, psi, A + a, E) plus the coupling e int a0 <i phi, psi> to a prescribed background."""
    grid = state.grid
    e = state.e
    total_A = state.A if background is None else state.A + background[1]
    dphi = covariant_gradient(state.phi, total_A, e, grid)
    dv = grid.cell_volume
    density = (
        np.sum(state.E**2, axis=0)
        + np.sum(curl(state.A, grid) ** 2, axis=0)
        + np.abs(state.psi) ** 2
        + np.sum(np.abs(dphi) ** 2, axis=0)
        + 2.0 * spec.V(state.phi)
    )
    value = 0.5 * float(np.sum(density)) * dv
    if background is not None and e != 0.0:
        value += e * float(np.sum(background[0] * charge_density(state.phi, state.psi))) * dv
    return value


def charge_density(phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """<i phi, psi> pointwise."""
    return np.real(np.conj(1j * phi) * psi)


def total_charge(state: FieldState) -> float:
    return float(np.sum(charge_density(state.phi, state.psi))) * state.grid.cell_volume


def energy_norm(state: FieldState) -> float:
    """||(phi, psi, A, E)|| in H^1 x L^2 x dot-H^1 x L^2."""
    grid = state.grid
    parts = (
        l2_inner(state.phi, state.phi, grid)
        + l2_inner(gradient(state.phi, grid), gradient(state.phi, grid), grid)
        + l2_inner(state.psi, state.psi, grid)
        + l2_inner(gradient(state.A, grid), gradient(state.A, grid), grid)
        + l2_inner(state.E, state.E, grid)
    )
    return float(np.sqrt(parts))


def pack_fields(state: FieldState) -> np.ndarray:
    return np.stack(
        [state.phi.real, state.phi.imag, state.psi.real, state.psi.imag, *state.A, *state.E]
    ).astype("<f8")


def save_snapshot(state: FieldState, path: Path) -> Path:
    """KGM1 file: header (magic, n, L, t, e, field count), then little-endian float64 fields, row-major."""
    header = np.zeros(1, dtype=SNAPSHOT_HEADER)
    header[0] = (SNAPSHOT_MAGIC, state.grid.n, state.grid.L, state.t, state.e, SNAPSHOT_FIELDS)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(pack_fields(state)).tobytes())
    return path


def load_snapshot(path: Path) -> FieldState:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ArtifactError(detail=f"{path}: {exc.strerror or exc}")
    if len(raw) < SNAPSHOT_HEADER.itemsize:
        raise ArtifactError(detail=f"{path}: truncated header ({len(raw)} bytes)")
    header = np.frombuffer(raw[: SNAPSHOT_HEADER.itemsize], dtype=SNAPSHOT_HEADER)[0]
    if header["magic"] != SNAPSHOT_MAGIC:
        raise ArtifactError(detail=f"{path}: not a KGM1 snapshot")
    n = int(header["n"])
    count = int(header["fields"])
    payload = raw[SNAPSHOT_HEADER.itemsize :]
    if n <= 0 or count != SNAPSHOT_FIELDS or len(payload) != 8 * count * n**3:
        raise ArtifactError(detail=f"{path}: payload size does not match header")
    data = np.frombuffer(payload, dtype="<f8")
    fields = data.reshape(count, n, n, n)
    try:
        grid = Grid3(n=n, L=float(header["L"]))
    except ValueError as exc:
        raise ArtifactError(detail=f"{path}: bad grid in header ({exc})")
    return FieldState(
        grid=grid,
        t=float(header["t"]),
        e=float(header["e"]),
        phi=fields[0] + 1j * fields[1],
        psi=fields[2] + 1j * fields[3],
        A=fields[4:7].copy(),
        E=fields[7:10].copy(),
    )
