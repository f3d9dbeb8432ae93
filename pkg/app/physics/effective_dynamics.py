import logging
from typing import Optional

import numpy as np
from scipy import interpolate

from app.core.errors import PreconditionViolation, TimeRangeMismatch
from app.models.effective import ComparisonReport, ConvergenceRow, EffectivePath, EffectiveState
from app.models.external import ExternalFieldSpec, ExternalPreset
from app.models.modulation import ModulationTrack
from app.models.soliton import SolitonParams
from app.physics.external_field import fields, minimum_image
from app.physics.soliton_family import SolitonFamily
from app.physics.spectral_stability import soliton_charge, soliton_mass

logger = logging.getLogger(__name__)

TIME_TOL = 1e-9


def velocity(p: np.ndarray, M_S: float) -> np.ndarray:
    """u = p / sqrt(M_S^2 + |p|^2), so |u| < 1 for every finite p."""
    return p / np.sqrt(M_S**2 + float(p @ p))


def from_soliton(family: SolitonFamily, lam0: SolitonParams) -> EffectiveState:
    """Freeze M_S (e=0 profile) and Q_S (coupled profile) at the initial frequency."""
    return EffectiveState(
        xi=lam0.xi,
        u=lam0.u,
        M_S=soliton_mass(family.profile(lam0.omega)),
        Q_S=soliton_charge(family.coupled(lam0.omega)),
        e=family.e,
    )


def _field_at(external: ExternalFieldSpec | None, t: float, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if external is None or external.preset == ExternalPreset.VACUUM:
        return np.zeros(3), np.zeros(3)
    E, B = fields(external, t, xi.reshape(3, 1))
    return E[:, 0], B[:, 0]


def lorentz_rhs(y: np.ndarray, state: EffectiveState, external: ExternalFieldSpec | None, t: float) -> np.ndarray:
    """d/dt (xi, p) = (u, e Q_S (E + u x B)) with p = M_S gamma u."""
    xi, p = y[:3], y[3:]
    u = velocity(p, state.M_S)
    E, B = _field_at(external, t, xi)
    force = state.e * state.Q_S * (E + np.cross(u, B))
    return np.concatenate([u, force])


def integrate(
    initial: EffectiveState,
    external: ExternalFieldSpec | None,
    t_end: float,
    dt: float,
    t0: float = 0.0,
    stride: int = 1,
) -> EffectivePath:
    """Classical RK4 in (xi, p), sampled every `stride` steps and at t_end (the last step is shortened to land on it)."""
    if dt <= 0 or t_end < t0:
        raise PreconditionViolation(detail=f"need dt > 0 and t_end >= t0 (dt={dt}, t0={t0}, t_end={t_end})")
    steps = int(np.ceil((t_end - t0) / dt - 1e-9))
    y = np.concatenate([np.asarray(initial.xi, dtype=float), initial.momentum])
    times, xis, us = [t0], [y[:3].tolist()], [list(initial.u)]

    def f(tt, yy):
        return lorentz_rhs(yy, initial, external, tt)

    for k in range(1, steps + 1):
        t = t0 + (k - 1) * dt
        h = dt if k < steps else t_end - t
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if k % stride == 0 or k == steps:
            times.append(t_end if k == steps else t0 + k * dt)
            xis.append(y[:3].tolist())
            us.append(velocity(y[3:], initial.M_S).tolist())
    logger.debug("effective path: %d step(s) of dt=%.3g", steps, dt)
    return EffectivePath(times=times, xi=xis, u=us, M_S=initial.M_S, Q_S=initial.Q_S, e=initial.e)


def _deviations(track: ModulationTrack, path: EffectivePath, box: float | None) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(track.times, dtype=float)
    pt = path.t
    if len(t) == 0 or t[0] < pt[0] - TIME_TOL or t[-1] > pt[-1] + TIME_TOL:
        raise TimeRangeMismatch(
            detail={
                "track": [float(t[0]), float(t[-1])] if len(t) else [],
                "path": [float(pt[0]), float(pt[-1])],
            }
        )
    tt = np.clip(t, pt[0], pt[-1])
    if len(pt) >= 2:
        xi_eff = interpolate.interp1d(pt, path.xi_array, axis=0, kind="cubic" if len(pt) > 3 else "linear")(tt)
        u_eff = interpolate.interp1d(pt, path.u_array, axis=0, kind="cubic" if len(pt) > 3 else "linear")(tt)
    else:
        xi_eff = np.repeat(path.xi_array, len(tt), axis=0)
        u_eff = np.repeat(path.u_array, len(tt), axis=0)
    dxi = minimum_image((track.xi - xi_eff).T, np.zeros(3), box).T
    return np.linalg.norm(dxi, axis=1), np.linalg.norm(track.u - u_eff, axis=1)


def convergence_table(reports: list[ComparisonReport]) -> list[ConvergenceRow]:
    """deviation/e per coupling, ordered by decreasing e, with the ratio to the previous row."""
    rows: list[ConvergenceRow] = []
    for report in sorted(reports, key=lambda r: -r.e):
        ratio = report.max_xi / report.e if report.e > 0 else float("nan")
        previous = rows[-1].ratio if rows else None
        rows.append(
            ConvergenceRow(
                e=report.e,
                max_xi=report.max_xi,
                ratio=ratio,
                ratio_to_previous=None if previous in (None, 0.0) else ratio / previous,
            )
        )
    return rows


def compare(
    track: ModulationTrack,
    path: EffectivePath,
    sweep: Optional[list[tuple[ModulationTrack, EffectivePath]]] = None,
    box: float | None = None,
) -> ComparisonReport:
    """Max and RMS deviations of xi(t), u(t); with `sweep`, a convergence table over the couplings."""
    dxi, du = _deviations(track, path, box)
    report = ComparisonReport(
        e=track.e,
        samples=len(dxi),
        t_start=float(track.times[0]),
        t_end=float(track.times[-1]),
        max_xi=float(np.max(dxi)),
        rms_xi=float(np.sqrt(np.mean(dxi**2))),
        max_u=float(np.max(du)),
        rms_u=float(np.sqrt(np.mean(du**2))),
    )
    if sweep:
        others = [compare(t, p, box=box) for t, p in sweep]
        report.convergence = convergence_table([report] + others)
    logger.info("e=%.4g: max |dxi|=%.3e, max |du|=%.3e", report.e, report.max_xi, report.max_u)
    return report
