"""Closed-form design formulas, geometry optimization, DC solving, waveforms.

The closed forms for a symmetric five-wire cross-section with centre width a
and rail widths b, c:

    ion height      h = sqrt(a b c (a + b + c)) / (b + c)
    drive scale     Gamma = (Z e)^2 V_rf^2 / (pi^2 m Omega^2)     [J m^2]
    depth estimate  depth = kappa * Gamma / h^2

kappa is the dimensionless geometric efficiency of the electrode pattern. It
is not available in closed form; it is extracted once per width ratio from
the full escape-point search (which makes the depth estimate agree with the
full simulation by construction) and cached.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .config import DriveConfig, IonSpecies, YB171
from .constants import CODATA, UM
from .errors import (BoundViolationError, InfeasibleTargetError,
                     InvalidParameterError)
from .fields import basis_fields
from .geometry import Defect, ElectrodeLayout, LayoutParams, ValidationReport

# Engineering limits for a sensor trap chip: up to 500 V of RF is safe when
# the fabricated inter-electrode gaps stay above 5 um. Both bounds inclusive.
RF_VOLTAGE_LIMIT = 500.0
MIN_GAP_LIMIT_UM = 5.0
GAP_CHECK_THRESHOLD_V = 50.0


def ion_height(a: float, b: float, c: float) -> float:
    """Nil height (um) above a five-wire cross-section with widths in um."""
    for name, v in (("a", a), ("b", b), ("c", c)):
        if not v > 0:
            raise InvalidParameterError(f"width {name} must be > 0, got {v}")
    return float(np.sqrt(a * b * c * (a + b + c)) / (b + c))


def drive_scale(v_rf: float, omega_rf: float, ion: IonSpecies) -> float:
    """Drive-strength energy scale (Z e V_rf)^2 / (pi^2 m Omega^2), J m^2."""
    if not (v_rf > 0 and omega_rf > 0):
        raise InvalidParameterError("v_rf and omega_rf must be > 0")
    q = ion.charge_c
    return (q * v_rf) ** 2 / (np.pi ** 2 * ion.mass_kg * omega_rf ** 2)


def heating_scale(h_ref: float, h_new: float) -> float:
    """Anomalous-heating ratio between two ion heights: (h_new/h_ref)^-4."""
    if not (h_ref > 0 and h_new > 0):
        raise InvalidParameterError("heights must be > 0")
    return float((h_new / h_ref) ** -4.0)


def secular_estimate(v_rf: float, omega_rf: float, ion: IonSpecies,
                     h_um: float) -> float:
    """Single-formula radial secular frequency estimate in Hz.

    f = e V_rf / (sqrt(2) m h^2 Omega) / 2pi. This treats the field curvature
    at the nil as 1/h^2 and therefore ignores the geometric efficiency of the
    electrode pattern; for the reference five-wire geometry it overestimates
    the full-field value by roughly 3x. Scaling estimator only.
    """
    if not (v_rf > 0 and omega_rf > 0 and h_um > 0):
        raise InvalidParameterError("v_rf, omega_rf and h must be > 0")
    h_m = h_um * UM
    omega_s = ion.charge_c * v_rf / (np.sqrt(2.0) * ion.mass_kg * h_m ** 2 * omega_rf)
    return float(omega_s / (2.0 * np.pi))


# -- geometric factor -------------------------------------------------------

_KAPPA_CACHE: dict[tuple[float, float, float], float] = {}
_KAPPA_LOCK = threading.Lock()

# any drive works: depth/Gamma is drive-independent, so kappa is purely geometric
_KAPPA_REFERENCE_DRIVE = (100.0, 2.0 * np.pi * 20e6)


def _five_wire_for_widths(a: float, b: float, c: float) -> ElectrodeLayout:
    from .geometry import build_five_wire

    return build_five_wire(LayoutParams(a=a, b=b, c=c, dc_width=(a + b + c) / 3.0))


def geometric_factor(a: float, b: float, c: float, use_cache: bool = True) -> float:
    """Dimensionless depth efficiency kappa of a five-wire cross-section.

    Defined operationally as depth * h^2 / Gamma with the depth taken from
    the full escape-point search. Depends only on the width ratios (exactly
    scale-invariant), so results are cached per normalized (a:b:c).
    """
    s = a + b + c
    key = (round(a / s, 12), round(b / s, 12), round(c / s, 12))
    if use_cache:
        with _KAPPA_LOCK:
            if key in _KAPPA_CACHE:
                return _KAPPA_CACHE[key]

    from .pseudo import find_rf_nil, trap_depth

    layout = _five_wire_for_widths(a, b, c)
    v_rf, omega_rf = _KAPPA_REFERENCE_DRIVE
    drive = DriveConfig(v_rf=v_rf, omega_rf=omega_rf)
    ion = YB171
    nil = find_rf_nil(layout, drive, layout.zone_centers[0])
    depth_ev, _ = trap_depth(layout, drive, ion, nil)
    h_m = ion_height(a, b, c) * UM
    gamma = drive_scale(v_rf, omega_rf, ion)
    kappa = depth_ev * CODATA.elementary_charge * h_m ** 2 / gamma
    if use_cache:
        with _KAPPA_LOCK:
            _KAPPA_CACHE[key] = kappa
    return kappa


@dataclass(frozen=True)
class DepthEstimate:
    """Closed-form depth decomposition: depth = kappa * Gamma / h^2."""

    drive_scale_jm2: float
    kappa: float
    depth_ev: float
    height_um: float


def depth_estimate(a: float, b: float, c: float, v_rf: float, omega_rf: float,
                   ion: IonSpecies) -> DepthEstimate:
    """Depth estimate from the closed forms plus the extracted kappa."""
    gamma = drive_scale(v_rf, omega_rf, ion)
    kappa = geometric_factor(a, b, c)
    h_um = ion_height(a, b, c)
    h_m = h_um * UM
    depth_j = kappa * gamma / h_m ** 2
    return DepthEstimate(drive_scale_jm2=gamma, kappa=kappa,
                         depth_ev=depth_j / CODATA.elementary_charge,
                         height_um=h_um)


# -- geometry optimization ---------------------------------------------------


@dataclass(frozen=True)
class OptimizedGeometry:
    a_um: float
    b_um: float
    c_um: float
    depth_ev: float
    height_um: float
    kappa: float


def center_width_for_height(b: float, c: float, target_h: float) -> float:
    """Centre width a solving ion_height(a, b, c) = target_h, all in um."""
    bc = b * c
    a = (b + c) * (np.sqrt(bc + 4.0 * target_h ** 2) - np.sqrt(bc)) / (2.0 * np.sqrt(bc))
    return float(a)


def optimize_geometry(target_h_um: float,
                      bounds_um: Mapping[str, tuple[float, float]],
                      equal_rf_widths: bool = True,
                      v_rf: float = 200.0,
                      omega_rf: float = 2.0 * np.pi * 22e6,
                      ion: IonSpecies = YB171) -> OptimizedGeometry:
    """Widths maximizing trap depth at a fixed nil height.

    The height constraint eliminates the centre width a in closed form; the
    remaining one (b = c) or two (b, c) rail widths are searched
    derivative-free. Deterministic for fixed inputs. bounds_um maps "a", "b",
    "c" to (lo, hi) pairs in um.
    """
    if not target_h_um > 0:
        raise InvalidParameterError("target height must be > 0")
    try:
        a_lo, a_hi = bounds_um["a"]
        b_lo, b_hi = bounds_um["b"]
        c_lo, c_hi = bounds_um["c"]
    except KeyError as exc:
        raise InvalidParameterError(f"bounds_um missing entry for {exc}") from exc

    def neg_kappa(b: float, c: float) -> float:
        a = center_width_for_height(b, c, target_h_um)
        if not (a_lo <= a <= a_hi):
            # smooth penalty pushes the search back into the feasible band
            return 1.0 + abs(a - np.clip(a, a_lo, a_hi)) / target_h_um
        return -geometric_factor(a, b, c)

    if equal_rf_widths:
        lo, hi = max(b_lo, c_lo), min(b_hi, c_hi)
        if not lo < hi:
            raise InfeasibleTargetError("empty b = c bound intersection")
        # feasibility scan before the local search
        bs = np.linspace(lo, hi, 33)
        vals = [neg_kappa(b, b) for b in bs]
        if min(vals) >= 0.0:
            raise InfeasibleTargetError(
                "no b = c value yields a centre width inside its bounds")
        b0 = bs[int(np.argmin(vals))]
        span = (hi - lo) / 32.0
        res = minimize_scalar(lambda b: neg_kappa(b, b),
                              bounds=(max(lo, b0 - 2 * span), min(hi, b0 + 2 * span)),
                              method="bounded",
                              options={"xatol": 1e-3 * target_h_um})
        b_best = c_best = float(res.x)
        if neg_kappa(b_best, b_best) >= 0.0:
            raise InfeasibleTargetError("optimizer left the feasible band")
    else:
        x0 = np.array([0.5 * (b_lo + b_hi), 0.5 * (c_lo + c_hi)])
        res = minimize(lambda x: neg_kappa(*np.clip(x, [b_lo, c_lo], [b_hi, c_hi])),
                       x0, method="Nelder-Mead",
                       options={"xatol": 1e-3 * target_h_um,
                                "fatol": 1e-6, "maxiter": 400})
        b_best, c_best = np.clip(res.x, [b_lo, c_lo], [b_hi, c_hi])
        if neg_kappa(b_best, c_best) >= 0.0:
            raise InfeasibleTargetError("no feasible (b, c) found")

    a_best = center_width_for_height(b_best, c_best, target_h_um)
    est = depth_estimate(a_best, b_best, c_best, v_rf, omega_rf, ion)
    return OptimizedGeometry(a_um=float(a_best), b_um=float(b_best),
                             c_um=float(c_best), depth_ev=est.depth_ev,
                             height_um=est.height_um, kappa=est.kappa)


# -- voltage limits -----------------------------------------------------------


def check_voltage_limits(drive: DriveConfig, min_gap_um: float) -> ValidationReport:
    """Advisory check of the RF amplitude against the breakdown limits.

    Flags v_rf above 500 V, and fabricated gaps below 5 um whenever the RF
    amplitude is high enough to matter. Boundary values pass.
    """
    report = ValidationReport()
    if drive.v_rf > RF_VOLTAGE_LIMIT:
        report.defects.append(Defect(
            "rf-voltage-limit", (),
            f"v_rf = {drive.v_rf:g} V exceeds the {RF_VOLTAGE_LIMIT:g} V "
            f"breakdown limit (safe up to {RF_VOLTAGE_LIMIT:g} V with gaps "
            f">= {MIN_GAP_LIMIT_UM:g} um)"))
    if min_gap_um < MIN_GAP_LIMIT_UM and drive.v_rf > GAP_CHECK_THRESHOLD_V:
        report.defects.append(Defect(
            "electrode-gap", (),
            f"gap {min_gap_um:g} um is below the {MIN_GAP_LIMIT_UM:g} um "
            f"minimum for RF amplitudes above {GAP_CHECK_THRESHOLD_V:g} V"))
    report.info.append(
        f"limits: v_rf <= {RF_VOLTAGE_LIMIT:g} V, gap >= {MIN_GAP_LIMIT_UM:g} um "
        "(inclusive)")
    return report


# -- DC solving ---------------------------------------------------------------


@dataclass(frozen=True)
class WellSpec:
    """Target harmonic well: centre (um), axial frequency (Hz), ion."""

    center_um: tuple[float, float, float]
    axial_freq_hz: float
    ion: IonSpecies = YB171

    def __post_init__(self):
        if self.axial_freq_hz < 0:
            raise InvalidParameterError(
                f"axial_freq_hz must be >= 0, got {self.axial_freq_hz}")

    @property
    def target_curvature_v_m2(self) -> float:
        """phi_zz such that Z e phi_zz = m (2 pi f)^2."""
        omega = 2.0 * np.pi * self.axial_freq_hz
        return self.ion.mass_kg * omega ** 2 / self.ion.charge_c


def solve_dc_voltages(layout: ElectrodeLayout, well: WellSpec,
                      voltage_bounds: tuple[float, float]) -> dict[str, float]:
    """Static voltages on the segmented DC electrodes forming an axial well.

    Least-squares fit of the per-electrode Taylor coefficients at the well
    centre to: zero gradient (no push along x, y, z) and the requested axial
    curvature. Tikhonov-regularized (weight 1e-6 relative), which picks the
    smallest-norm solution of the underdetermined system.
    """
    lo, hi = voltage_bounds
    if not lo < hi:
        raise InvalidParameterError(f"empty voltage bounds ({lo}, {hi})")
    electrodes = sorted(layout.dc_patches, key=lambda p: p.id)
    if not electrodes:
        raise InvalidParameterError("layout has no DC electrodes")

    c_t = well.target_curvature_v_m2
    if c_t == 0.0:
        return {p.id: 0.0 for p in electrodes}

    center = np.asarray(well.center_um, dtype=float)
    _, grad, hess = basis_fields(electrodes, center)
    h_m = center[1] * UM
    rows = np.vstack([
        grad[:, 0, 0] / (c_t * h_m),
        grad[:, 0, 1] / (c_t * h_m),
        grad[:, 0, 2] / (c_t * h_m),
        hess[:, 0, 2, 2] / c_t,
    ])
    target = np.array([0.0, 0.0, 0.0, 1.0])

    sigma = np.linalg.svd(rows, compute_uv=False)
    reg = 1e-6 * sigma[0]
    a_stack = np.vstack([rows, reg * np.eye(len(electrodes))])
    b_stack = np.concatenate([target, np.zeros(len(electrodes))])
    volts, *_ = np.linalg.lstsq(a_stack, b_stack, rcond=None)

    resid = rows @ volts - target
    if np.max(np.abs(resid[:3])) > 1e-3:
        raise InfeasibleTargetError(
            "DC electrode set cannot null the gradient at the well centre "
            f"(scaled residual {np.max(np.abs(resid[:3])):.3g})")

    over = [(p.id, v) for p, v in zip(electrodes, volts) if not (lo <= v <= hi)]
    if over:
        over.sort(key=lambda t: -max(t[1] - hi, lo - t[1]))
        names = [f"{pid} ({v:+.3g} V)" for pid, v in over[:5]]
        raise BoundViolationError(
            f"DC solution leaves bounds [{lo:g}, {hi:g}] V: {', '.join(names)}",
            electrodes=[pid for pid, _ in over])
    return {p.id: float(v) for p, v in zip(electrodes, volts)}


# -- waveforms ----------------------------------------------------------------


@dataclass(frozen=True)
class Waveform:
    """Ordered DC voltage steps with the verified well position per step."""

    steps: tuple[dict[str, float], ...]
    well_positions_um: np.ndarray       # (n_steps, 3)
    timestamps_s: np.ndarray | None = None

    @property
    def electrode_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.steps[0]))

    def rows(self):
        ids = self.electrode_ids
        for k, (step, pos) in enumerate(zip(self.steps, self.well_positions_um)):
            yield [k] + [step[i] for i in ids] + [pos[0], pos[1], pos[2]]

    def columns(self) -> list[str]:
        return ["step", *self.electrode_ids, "well_x_um", "well_y_um", "well_z_um"]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.columns()) + "\n")
            for row in self.rows():
                fh.write(",".join(
                    str(row[0:1][0]) if i == 0 else format(v, ".12g")
                    for i, v in enumerate(row)) + "\n")

    def write_json(self, path) -> None:
        doc = {
            "columns": self.columns(),
            "rows": [[row[0]] + [float(format(v, ".12g")) for v in row[1:]]
                     for row in self.rows()],
        }
        if self.timestamps_s is not None:
            doc["timestamps_s"] = [float(t) for t in self.timestamps_s]
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def transport_waveform(layout: ElectrodeLayout, drive: DriveConfig,
                       start_um, end_um, n_steps: int, well: WellSpec,
                       voltage_bounds: tuple[float, float],
                       depth_floor_ev: float = 0.05,
                       min_gap_um: float = 10.0) -> Waveform:
    """Step-wise DC waveform carrying the well from start to end.

    The well centre is interpolated linearly in position and the DC set is
    re-solved at every step; each step is then verified against the full
    field: the total-potential minimum must track the interpolation
    monotonically, keep at least depth_floor_ev of trap depth, and pass the
    voltage-limit check.
    """
    from .pseudo import find_potential_minimum, trap_depth

    if n_steps < 2:
        raise InvalidParameterError(f"n_steps must be >= 2, got {n_steps}")
    start = np.asarray(start_um, dtype=float)
    end = np.asarray(end_um, dtype=float)
    span = end - start
    span_norm = np.linalg.norm(span)

    steps: list[dict[str, float]] = []
    positions = np.zeros((n_steps, 3))
    for k in range(n_steps):
        frac = k / (n_steps - 1)
        center = start + frac * span
        step_well = WellSpec(center_um=tuple(center),
                             axial_freq_hz=well.axial_freq_hz, ion=well.ion)
        try:
            volts = solve_dc_voltages(layout, step_well, voltage_bounds)
        except (BoundViolationError, InfeasibleTargetError) as exc:
            raise type(exc)(f"step {k}: {exc}") from exc
        step_drive = drive.with_dc(volts)
        limits = check_voltage_limits(step_drive, min_gap_um)
        if not limits.ok:
            raise InfeasibleTargetError(
                f"step {k} fails the voltage-limit check: "
                + "; ".join(d.detail for d in limits.defects))
        minimum = find_potential_minimum(layout, step_drive, well.ion, center)
        depth, _ = trap_depth(layout, step_drive, well.ion, minimum)
        if depth < depth_floor_ev:
            raise InfeasibleTargetError(
                f"step {k}: trap depth {depth:.4g} eV below floor "
                f"{depth_floor_ev:g} eV")
        steps.append(volts)
        positions[k] = minimum

    if span_norm > 0:
        s = (positions - start) @ (span / span_norm)
        if np.any(np.diff(s) < -1e-6 * span_norm):
            raise InfeasibleTargetError(
                "verified well positions do not advance monotonically")
    return Waveform(steps=tuple(steps), well_positions_um=positions)


def vertical_shift(layout: ElectrodeLayout, drive: DriveConfig,
                   ion: IonSpecies, delta_h_um: float,
                   voltage_bounds: tuple[float, float],
                   zone: int = 0) -> dict[str, float]:
    """Centre-control voltages that raise or lower the trapping minimum.

    A common voltage on all CenterControl electrodes is solved by bracketing
    so the full-field total-potential minimum sits at nil height +
    delta_h_um. For a positive ion a positive control voltage pushes the
    minimum up.
    """
    from .pseudo import find_potential_minimum, find_rf_nil

    controls = sorted(p.id for p in layout.control_patches)
    if not controls:
        raise InvalidParameterError("layout has no CenterControl electrodes")
    lo, hi = voltage_bounds
    if not lo < hi:
        raise InvalidParameterError(f"empty voltage bounds ({lo}, {hi})")

    nil = find_rf_nil(layout, drive, layout.zone_centers[zone])
    h0 = nil[1]
    if abs(delta_h_um) >= 0.5 * h0:
        raise InvalidParameterError(
            f"|delta_h| = {abs(delta_h_um):g} um must stay below half the "
            f"nil height ({0.5 * h0:g} um)")
    if delta_h_um == 0.0:
        return {cid: 0.0 for cid in controls}

    state = {"guess": nil.copy()}

    def height_err(v: float) -> float:
        d = drive.with_dc({cid: v for cid in controls})
        minimum = find_potential_minimum(layout, d, ion, state["guess"])
        state["guess"] = minimum
        return minimum[1] - (h0 + delta_h_um)

    # expand a bracket from 0 towards the required sign
    sign = 1.0 if delta_h_um > 0 else -1.0
    v_edge = hi if sign > 0 else lo
    v_try = sign * min(1.0, abs(v_edge))
    f0 = -delta_h_um
    f_try = height_err(v_try)
    while f_try * f0 > 0:
        if v_try == v_edge:
            raise InfeasibleTargetError(
                f"shift of {delta_h_um:g} um unreachable within "
                f"[{lo:g}, {hi:g}] V on the centre electrodes")
        v_try = sign * min(abs(v_try) * 2.0, abs(v_edge))
        f_try = height_err(v_try)

    v_sol = brentq(height_err, 0.0 if sign > 0 else v_try,
                   v_try if sign > 0 else 0.0,
                   xtol=1e-6 * max(abs(v_try), 1.0))
    return {cid: float(v_sol) for cid in controls}
