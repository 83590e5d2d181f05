"""Pseudopotential analysis: nils, trap depth, secular frequencies, axes.

The time-averaged potential seen by an ion driven at angular frequency
omega_rf is

    psi = (Z e)^2 |grad(phi_rf)|^2 / (4 m omega_rf^2)

here always reported in eV. The total potential adds the static term
Z * phi_dc. Positions at this interface are micrometres.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import DriveConfig, IonSpecies
from .constants import CODATA, UM
from .errors import (DegenerateAxesWarning, NoEscapePointError,
                     NotAMinimumError, SearchFailedError)
from .fields import rf_voltage_pairs, weighted_fields
from .geometry import ElectrodeLayout

_AXIS_LABELS = ("x", "y", "z")


def pseudo_coefficient_ev(drive: DriveConfig, ion: IonSpecies) -> float:
    """Coefficient C such that psi[eV] = C * |grad(phi_rf)|^2 [(V/m)^2]."""
    z = ion.charge_number
    e = CODATA.elementary_charge
    return z * z * e / (4.0 * ion.mass_kg * drive.omega_rf ** 2)


def _dc_pairs(layout: ElectrodeLayout, drive: DriveConfig):
    from .fields import _voltage_pairs

    return _voltage_pairs(layout, drive.dc_voltages)


def pseudopotential_batch(layout: ElectrodeLayout, drive: DriveConfig,
                          ion: IonSpecies, points_um) -> np.ndarray:
    _, grad, _ = weighted_fields(rf_voltage_pairs(layout, drive), points_um)
    coeff = pseudo_coefficient_ev(drive, ion)
    return coeff * np.einsum("ij,ij->i", grad, grad)


def pseudopotential(layout: ElectrodeLayout, drive: DriveConfig,
                    ion: IonSpecies, point_um) -> float:
    """Pseudopotential in eV at one point."""
    return float(pseudopotential_batch(layout, drive, ion, point_um)[0])


def total_potential_batch(layout: ElectrodeLayout, drive: DriveConfig,
                          ion: IonSpecies, points_um) -> np.ndarray:
    u = pseudopotential_batch(layout, drive, ion, points_um)
    if drive.dc_voltages:
        phi, _, _ = weighted_fields(_dc_pairs(layout, drive), points_um)
        u = u + ion.charge_number * phi
    return u


def total_potential(layout: ElectrodeLayout, drive: DriveConfig,
                    ion: IonSpecies, point_um) -> float:
    """Pseudopotential plus static energy Z*phi_dc, in eV."""
    return float(total_potential_batch(layout, drive, ion, point_um)[0])


def total_gradient(layout: ElectrodeLayout, drive: DriveConfig,
                   ion: IonSpecies, point_um) -> np.ndarray:
    """Analytic gradient of the total potential, eV/m."""
    _, g, h = weighted_fields(rf_voltage_pairs(layout, drive), point_um)
    coeff = pseudo_coefficient_ev(drive, ion)
    out = coeff * 2.0 * (h[0] @ g[0])
    if drive.dc_voltages:
        _, gdc, _ = weighted_fields(_dc_pairs(layout, drive), point_um)
        out = out + ion.charge_number * gdc[0]
    return out


def total_hessian(layout: ElectrodeLayout, drive: DriveConfig,
                  ion: IonSpecies, point_um, rel_step: float = 1e-4) -> np.ndarray:
    """Hessian of the total potential in eV/m^2.

    Central finite differences of the analytic gradient; the relative step is
    taken against the point's height so the truncation error stays ~1e-8.
    """
    p = np.asarray(point_um, dtype=float)
    step_um = rel_step * max(p[1], 1e-3)
    hess = np.zeros((3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = step_um
        gp = total_gradient(layout, drive, ion, p + e)
        gm = total_gradient(layout, drive, ion, p - e)
        hess[k] = (gp - gm) / (2.0 * step_um * UM)
    return 0.5 * (hess + hess.T)


# -- RF nil search ---------------------------------------------------------


def find_rf_nil(layout: ElectrodeLayout, drive: DriveConfig, guess_um,
                fix_axial: bool = True, tol_grad: float = 1e-6,
                max_iter: int = 200) -> np.ndarray:
    """Locate the RF nil near `guess_um` (um).

    Damped Newton (Levenberg) iteration on the per-volt RF basis gradient;
    converged when |grad(phi_rf)| < tol_grad (V/m per applied volt). With
    fix_axial=True (default) only the transverse (x, y) components are
    solved and tested, because the nil of a linear trap is a line along z:
    off the rail midpoint the axial component never vanishes exactly.
    """
    pairs = [(p, 1.0) for p in layout.rf_patches]
    axes = (0, 1) if fix_axial else (0, 1, 2)
    idx = np.array(axes)

    def residual(pt):
        _, g, h = weighted_fields(pairs, pt)
        return g[0][idx], h[0][np.ix_(idx, idx)]

    p = np.asarray(guess_um, dtype=float).copy()
    g, jac = residual(p)
    best = (np.linalg.norm(g), p.copy())
    lam = 0.0
    for _ in range(max_iter):
        gn = np.linalg.norm(g)
        if gn < tol_grad:
            return p
        if gn < best[0]:
            best = (gn, p.copy())
        scale = max(np.trace(jac @ jac.T), 1e-300)
        accepted = False
        for _ in range(60):
            lhs = jac + lam * np.sqrt(scale) * np.eye(len(idx))
            try:
                step_m = np.linalg.solve(lhs, -g)
            except np.linalg.LinAlgError:
                lam = max(lam * 10.0, 1e-12)
                continue
            trial = p.copy()
            trial[idx] += step_m / UM
            while trial[1] <= 0:  # stay above the plane
                step_m *= 0.5
                trial = p.copy()
                trial[idx] += step_m / UM
            g_t, jac_t = residual(trial)
            if np.linalg.norm(g_t) < gn:
                p, g, jac = trial, g_t, jac_t
                lam = lam / 3.0 if lam > 1e-14 else 0.0
                accepted = True
                break
            lam = max(lam * 10.0, 1e-12)
        if not accepted:
            break
    gn = np.linalg.norm(g)
    if gn < tol_grad:
        return p
    raise SearchFailedError(
        f"RF nil search did not reach |grad| < {tol_grad:g} 1/m "
        f"(best {best[0]:.3g})", best_point_um=best[1], residual=best[0])


# -- escape-point search ----------------------------------------------------


def _first_barrier(u: np.ndarray, u0: float) -> int | None:
    """Index of the first strict local maximum above u0 along a ray."""
    rising = False
    for i in range(1, len(u)):
        if u[i] > u[i - 1]:
            rising = True
        elif u[i] < u[i - 1]:
            if rising and u[i - 1] > u0:
                return i - 1
            rising = False
    return None


def _fan_scan(layout, drive, ion, origin, dirs, radii):
    """Evaluate the total potential on origin + r*dir for all (dir, r).

    Returns per-direction (barrier_value, barrier_radius) arrays with NaN
    where a ray has no turnover.
    """
    pts = (origin[None, None, :]
           + dirs[:, None, :] * radii[None, :, None]).reshape(-1, 3)
    u = total_potential_batch(layout, drive, ion, pts).reshape(len(dirs), len(radii))
    u0 = total_potential(layout, drive, ion, origin)
    vals = np.full(len(dirs), np.nan)
    rads = np.full(len(dirs), np.nan)
    for i in range(len(dirs)):
        m = _first_barrier(u[i], u0)
        if m is not None:
            vals[i] = u[i, m]
            rads[i] = radii[m]
    return vals, rads, u0


def trap_depth(layout: ElectrodeLayout, drive: DriveConfig, ion: IonSpecies,
               nil_um, n_angles: int = 181, n_radial: int = 400,
               max_radius_factor: float = 10.0) -> tuple[float, np.ndarray]:
    """Depth (eV) and escape point (um) of the well around `nil_um`.

    Rays in the transverse plane through the reference point are scanned for
    their first potential turnover; the escape point is the lowest such
    barrier (a fan over the full upper hemisphere is the fallback when no
    in-plane ray turns over). The best candidate is refined with a finer
    local fan and finally polished by a Newton solve of grad(U) = 0.
    """
    origin = np.asarray(nil_um, dtype=float)
    h = origin[1]
    radii = np.linspace(0.0, max_radius_factor * h, n_radial + 1)[1:]

    theta = np.linspace(0.0, np.pi, n_angles)
    dirs = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=1)
    vals, rads, u0 = _fan_scan(layout, drive, ion, origin, dirs, radii)

    if np.all(np.isnan(vals)):
        alpha = np.linspace(0.0, np.pi / 2, 19)        # polar from +y
        beta = np.linspace(0.0, 2 * np.pi, 36, endpoint=False)
        ga, gb = np.meshgrid(alpha, beta, indexing="ij")
        dirs = np.stack([np.sin(ga) * np.cos(gb), np.cos(ga),
                         np.sin(ga) * np.sin(gb)], axis=-1).reshape(-1, 3)
        vals, rads, u0 = _fan_scan(layout, drive, ion, origin, dirs, radii)
        if np.all(np.isnan(vals)):
            raise NoEscapePointError(
                f"no escape saddle within {max_radius_factor:g}x the trap height")

    i = int(np.nanargmin(vals))
    best_dir, best_r = dirs[i], rads[i]

    # refinement fan around the best ray
    dtheta = np.pi / (n_angles - 1)
    base = np.arctan2(best_dir[1], best_dir[0]) if abs(best_dir[2]) < 1e-12 else None
    if base is not None:
        th = np.linspace(base - 1.5 * dtheta, base + 1.5 * dtheta, 41)
        fdirs = np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], axis=1)
    else:
        fdirs = dirs[max(i - 1, 0):i + 2]
    fradii = np.linspace(0.75 * best_r, 1.25 * best_r, 201)
    fvals, frads, _ = _fan_scan(layout, drive, ion, origin, fdirs, fradii)
    if not np.all(np.isnan(fvals)):
        j = int(np.nanargmin(fvals))
        best_dir, best_r = fdirs[j], frads[j]
        barrier = fvals[j]
    else:
        barrier = vals[i]
    escape = origin + best_dir * best_r

    # Newton polish on the saddle: stationary point of the total potential,
    # solved in the transverse plane (z frozen at the ray's plane)
    polished = _polish_saddle(layout, drive, ion, escape, h)
    if polished is not None:
        u_pol = total_potential(layout, drive, ion, polished)
        if abs(u_pol - barrier) <= 0.02 * max(barrier - u0, 1e-30):
            escape, barrier = polished, u_pol

    return float(barrier - u0), escape


def _polish_saddle(layout, drive, ion, start_um, h, tol=1e-12, max_iter=40):
    p = np.asarray(start_um, dtype=float).copy()
    idx = np.array([0, 1])
    for _ in range(max_iter):
        g = total_gradient(layout, drive, ion, p)[idx]
        hess = total_hessian(layout, drive, ion, p)[np.ix_(idx, idx)]
        try:
            step_m = np.linalg.solve(hess, -g)
        except np.linalg.LinAlgError:
            return None
        if np.linalg.norm(step_m) / UM > 0.05 * h:   # left the local basin
            return None
        p[idx] += step_m / UM
        if p[1] <= 0:
            return None
        if np.linalg.norm(step_m) / UM < 1e-9 * h:
            return p
    return None


# -- minima and curvatures ---------------------------------------------------


def find_potential_minimum(layout: ElectrodeLayout, drive: DriveConfig,
                           ion: IonSpecies, guess_um,
                           grad_tol_ev_m: float = 1e-4,
                           max_iter: int = 200) -> np.ndarray:
    """Locate a local minimum of the total potential near `guess_um` (um)."""
    p = np.asarray(guess_um, dtype=float).copy()
    lam = 0.0
    g = total_gradient(layout, drive, ion, p)
    best = (np.linalg.norm(g), p.copy())
    for _ in range(max_iter):
        gn = np.linalg.norm(g)
        if gn < grad_tol_ev_m:
            return p
        if gn < best[0]:
            best = (gn, p.copy())
        hess = total_hessian(layout, drive, ion, p)
        scale = max(abs(np.trace(hess)), 1e-300)
        accepted = False
        for _ in range(60):
            try:
                step_m = np.linalg.solve(hess + lam * scale * np.eye(3), -g)
            except np.linalg.LinAlgError:
                lam = max(lam * 10.0, 1e-10)
                continue
            trial = p + step_m / UM
            while trial[1] <= 0:
                step_m *= 0.5
                trial = p + step_m / UM
            g_t = total_gradient(layout, drive, ion, trial)
            u_t = total_potential(layout, drive, ion, trial)
            u_p = total_potential(layout, drive, ion, p)
            if np.linalg.norm(g_t) < gn or u_t < u_p:
                p, g = trial, g_t
                lam = lam / 3.0 if lam > 1e-14 else 0.0
                accepted = True
                break
            lam = max(lam * 10.0, 1e-10)
        if not accepted:
            break
    if np.linalg.norm(g) < grad_tol_ev_m:
        return p
    raise SearchFailedError(
        f"potential minimum search stalled (|grad| = {best[0]:.3g} eV/m)",
        best_point_um=best[1], residual=best[0])


def modes_from_hessian(hess_j_m2: np.ndarray, ion: IonSpecies,
                       clamp_rel: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Secular frequencies (Hz, ordered by axis label x,y,z) and axes.

    hess_j_m2 is the energy Hessian in J/m^2. Eigenvalues within
    clamp_rel * max of zero are reported as zero-frequency flat axes (an
    RF-only linear trap has no axial curvature); more negative ones raise
    NotAMinimumError naming the unstable axis.
    """
    hess = 0.5 * (np.asarray(hess_j_m2, float) + np.asarray(hess_j_m2, float).T)
    lam, vec = np.linalg.eigh(hess)
    lam_max = float(np.max(np.abs(lam)))
    lam = lam.copy()
    for k in range(3):
        if lam[k] <= 0:
            if lam[k] >= -clamp_rel * lam_max:
                lam[k] = 0.0
            else:
                axis = _AXIS_LABELS[int(np.argmax(np.abs(vec[:, k])))]
                raise NotAMinimumError(
                    f"Hessian eigenvalue {lam[k]:.3g} J/m^2 is negative along "
                    f"the {axis} principal direction", axis=axis)
    freqs = np.sqrt(lam / ion.mass_kg) / (2.0 * np.pi)

    # label each eigenvector by its dominant coordinate axis; the matching
    # resolves near-ties consistently
    _, order = linear_sum_assignment(-np.abs(vec))
    freqs = freqs[order]
    axes = vec[:, order]
    for k in range(3):  # deterministic sign
        if axes[np.argmax(np.abs(axes[:, k])), k] < 0:
            axes[:, k] = -axes[:, k]
    return freqs, axes


def secular_frequencies(layout: ElectrodeLayout, drive: DriveConfig,
                        ion: IonSpecies, minimum_um,
                        clamp_rel: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Full-Hessian secular frequencies (Hz) and principal axes at a minimum.

    freqs[k] is the mode whose eigenvector points mostly along axis k
    (x, y, z); axes columns are the matching unit eigenvectors.
    """
    hess_ev = total_hessian(layout, drive, ion, minimum_um)
    hess_j = CODATA.elementary_charge * hess_ev
    return modes_from_hessian(hess_j, ion, clamp_rel=clamp_rel)


def rotation_angle_from_modes(freqs_hz: np.ndarray, axes: np.ndarray,
                              degeneracy_rel: float = 1e-6) -> float:
    """Tilt (deg) of the most-horizontal radial principal axis vs the x axis."""
    axial = int(np.argmax(np.abs(axes[2, :])))
    radial = [k for k in range(3) if k != axial]
    lam = np.square(np.asarray(freqs_hz, float))
    l1, l2 = lam[radial[0]], lam[radial[1]]
    ref = max(abs(l1), abs(l2))
    if ref > 0 and abs(l1 - l2) / ref < degeneracy_rel:
        warnings.warn("radial curvatures are degenerate; the principal-axis "
                      "angle is ill-defined", DegenerateAxesWarning)
    angles = [np.degrees(np.arccos(min(1.0, abs(float(axes[0, k]))))) for k in radial]
    return float(min(angles))


# -- characterization --------------------------------------------------------


@dataclass(frozen=True)
class TrapCharacterization:
    """Everything measured about one trapping zone. Lengths um, energy eV."""

    nil_position_um: np.ndarray
    ion_height_um: float
    trap_depth_ev: float
    escape_point_um: np.ndarray
    secular_freqs_hz: np.ndarray    # ordered by axis label (x, y, z)
    principal_axes: np.ndarray      # columns match secular_freqs_hz
    rotation_angle_deg: float

    def to_dict(self) -> dict:
        return {
            "nil_position_um": [float(v) for v in self.nil_position_um],
            "ion_height_um": float(self.ion_height_um),
            "trap_depth_ev": float(self.trap_depth_ev),
            "escape_point_um": [float(v) for v in self.escape_point_um],
            "secular_freqs_hz": {
                "x": float(self.secular_freqs_hz[0]),
                "y": float(self.secular_freqs_hz[1]),
                "z": float(self.secular_freqs_hz[2]),
            },
            "principal_axes_columns_xyz": [[float(v) for v in col]
                                           for col in self.principal_axes.T],
            "rotation_angle_deg": float(self.rotation_angle_deg),
        }


def principal_axis_rotation(char: TrapCharacterization) -> float:
    """Rotation angle (deg) of the radial principal axes off horizontal."""
    return rotation_angle_from_modes(char.secular_freqs_hz, char.principal_axes)


def characterize(layout: ElectrodeLayout, drive: DriveConfig, ion: IonSpecies,
                 guess_um, fix_axial: bool = True) -> TrapCharacterization:
    """Full single-zone characterization starting from a zone-centre guess.

    The RF nil is located first; with static voltages present the analysis
    point is then the nearby minimum of the total potential (the ion's
    actual equilibrium), otherwise the nil itself.
    """
    nil = find_rf_nil(layout, drive, guess_um, fix_axial=fix_axial)
    ref = nil
    if any(v != 0.0 for v in drive.dc_voltages.values()):
        ref = find_potential_minimum(layout, drive, ion, nil)
    depth, escape = trap_depth(layout, drive, ion, ref)
    freqs, axes = secular_frequencies(layout, drive, ion, ref)
    rot = rotation_angle_from_modes(freqs, axes)
    return TrapCharacterization(
        nil_position_um=nil, ion_height_um=float(ref[1]),
        trap_depth_ev=depth, escape_point_um=escape,
        secular_freqs_hz=freqs, principal_axes=axes, rotation_angle_deg=rot)


def write_characterization_report(path, chars: Mapping[str, TrapCharacterization],
                                  drive: DriveConfig, ion: IonSpecies) -> None:
    """JSON report for one or more zones, with the drive and ion echoed."""
    doc = {
        "drive": {"v_rf_volts": drive.v_rf, "omega_rf_rad_s": drive.omega_rf,
                  "dc_voltages_volts": dict(sorted(drive.dc_voltages.items()))},
        "ion": {"mass_amu": ion.mass_amu, "charge_number": ion.charge_number,
                "label": ion.label},
        "zones": {name: ch.to_dict() for name, ch in chars.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
