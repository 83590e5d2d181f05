"""Analytic electrostatics of rectangular electrodes on a grounded plane.

A rectangle held at 1 V on an otherwise grounded plane produces, in the
half-space y > 0, the bounded harmonic potential equal to its normalized
solid angle:

    phi(x, y, z) = (1/2pi) * sum_{i,j in {1,2}} (-1)^(i+j)
                   * arctan( (x_i - x)(z_j - z) / (y * R_ij) ),
    R_ij = sqrt((x_i - x)^2 + (z_j - z)^2 + y^2)

Gradient and Hessian are evaluated in closed form (no numerics), so
downstream curvatures are noise-free. Positions cross this interface in
micrometres; gradients and Hessians come back in SI (V/m, V/m^2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import DriveConfig, IonSpecies
from .constants import UM
from .errors import InvalidParameterError, OutOfDomainError
from .geometry import ElectrodeLayout, RectPatch, Role

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FieldSample:
    """Potential (V), gradient (V/m) and symmetric Hessian (V/m^2) at a point.

    For unit-voltage basis evaluations phi is dimensionless (per volt).
    """

    phi: float
    grad: np.ndarray
    hessian: np.ndarray


def _as_points_m(points_um) -> tuple[np.ndarray, bool]:
    """Micrometre input -> (P, 3) metres. Returns (array, was_single_point)."""
    pts = np.atleast_2d(np.asarray(points_um, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise InvalidParameterError(f"points must have shape (..., 3), got {pts.shape}")
    if np.any(pts[:, 1] <= 0.0):
        raise OutOfDomainError("field evaluation requires y > 0 (above the trap plane)")
    single = np.asarray(points_um).ndim == 1
    return pts * UM, single


def _rect_fields(x1: float, x2: float, z1: float, z2: float,
                 pts_m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit-voltage potential, gradient and Hessian of one rectangle.

    Corner extents in metres; pts_m shape (P, 3). Returns phi (P,),
    grad (P, 3), hess (P, 3, 3).
    """
    x = pts_m[:, 0]
    y = pts_m[:, 1]
    z = pts_m[:, 2]
    n = len(pts_m)
    phi = np.zeros(n)
    grad = np.zeros((n, 3))
    hess = np.zeros((n, 3, 3))

    y2 = y * y
    for xi, sx in ((x1, -1.0), (x2, 1.0)):
        u = xi - x
        u2 = u * u
        A = u2 + y2
        for zj, sz in ((z1, -1.0), (z2, 1.0)):
            s = sx * sz
            w = zj - z
            w2 = w * w
            B = w2 + y2
            R2 = u2 + w2 + y2
            R = np.sqrt(R2)
            R3 = R2 * R
            AB = A * B
            ApB = A + B  # equals R^2 + y^2

            f = np.arctan(u * w / (y * R))
            f_u = y * w / (R * A)
            f_w = y * u / (R * B)
            f_y = -u * w * ApB / (R * AB)

            f_uu = -y * w * u * (A + 2.0 * R2) / (R3 * A * A)
            f_ww = -y * u * w * (B + 2.0 * R2) / (R3 * B * B)
            f_uw = y / R3
            f_uy = w * (R2 * A - y2 * (A + 2.0 * R2)) / (R3 * A * A)
            f_wy = u * (R2 * B - y2 * (B + 2.0 * R2)) / (R3 * B * B)
            f_yy = -u * w * y * (4.0 * R2 * AB - ApB * (AB + 2.0 * R2 * ApB)) \
                / (R3 * AB * AB)

            # chain rule: du/dx = dw/dz = -1, dy/dy = +1
            phi += s * f
            grad[:, 0] -= s * f_u
            grad[:, 1] += s * f_y
            grad[:, 2] -= s * f_w
            hess[:, 0, 0] += s * f_uu
            hess[:, 1, 1] += s * f_yy
            hess[:, 2, 2] += s * f_ww
            hess[:, 0, 1] -= s * f_uy
            hess[:, 0, 2] += s * f_uw
            hess[:, 1, 2] -= s * f_wy

    hess[:, 1, 0] = hess[:, 0, 1]
    hess[:, 2, 0] = hess[:, 0, 2]
    hess[:, 2, 1] = hess[:, 1, 2]
    return phi / TWO_PI, grad / TWO_PI, hess / TWO_PI


def weighted_fields(patch_voltages: Iterable[tuple[RectPatch, float]],
                    points_um) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Superposed phi/grad/hess arrays for (patch, volts) pairs (batch form)."""
    pts_m, _ = _as_points_m(points_um)
    n = len(pts_m)
    phi = np.zeros(n)
    grad = np.zeros((n, 3))
    hess = np.zeros((n, 3, 3))
    for patch, volts in patch_voltages:
        if volts == 0.0:
            continue
        p, g, h = _rect_fields(patch.x_min * UM, patch.x_max * UM,
                               patch.z_min * UM, patch.z_max * UM, pts_m)
        phi += volts * p
        grad += volts * g
        hess += volts * h
    return phi, grad, hess


def patch_basis(patch: RectPatch, point_um) -> FieldSample:
    """Unit-voltage basis sample of a single patch (phi in [0, 1])."""
    pts_m, _ = _as_points_m(point_um)
    p, g, h = _rect_fields(patch.x_min * UM, patch.x_max * UM,
                           patch.z_min * UM, patch.z_max * UM, pts_m)
    return FieldSample(phi=float(p[0]), grad=g[0], hessian=h[0])


def basis_fields(patches: Sequence[RectPatch],
                 points_um) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-patch unit-voltage arrays: phi (n,P), grad (n,P,3), hess (n,P,3,3)."""
    pts_m, _ = _as_points_m(points_um)
    n_pt = len(pts_m)
    phi = np.zeros((len(patches), n_pt))
    grad = np.zeros((len(patches), n_pt, 3))
    hess = np.zeros((len(patches), n_pt, 3, 3))
    for i, patch in enumerate(patches):
        phi[i], grad[i], hess[i] = _rect_fields(
            patch.x_min * UM, patch.x_max * UM,
            patch.z_min * UM, patch.z_max * UM, pts_m)
    return phi, grad, hess


def _voltage_pairs(layout: ElectrodeLayout,
                   voltages: Mapping[str, float]) -> list[tuple[RectPatch, float]]:
    ids = set(layout.ids)
    unknown = sorted(set(voltages) - ids)
    if unknown:
        raise InvalidParameterError(f"unknown electrode ids in voltage map: {unknown}")
    return [(p, voltages.get(p.id, 0.0)) for p in layout.patches]


def superpose(layout: ElectrodeLayout, voltages: Mapping[str, float],
              point_um) -> FieldSample:
    """Linear superposition of patch bases at the given voltages."""
    phi, grad, hess = weighted_fields(_voltage_pairs(layout, voltages), point_um)
    return FieldSample(phi=float(phi[0]), grad=grad[0], hessian=hess[0])


def rf_voltage_pairs(layout: ElectrodeLayout,
                     drive: DriveConfig) -> list[tuple[RectPatch, float]]:
    return [(p, drive.v_rf) for p in layout.rf_patches]


def rf_field_sample(layout: ElectrodeLayout, drive: DriveConfig,
                    point_um) -> FieldSample:
    """Superposition restricted to RF patches at amplitude v_rf."""
    phi, grad, hess = weighted_fields(rf_voltage_pairs(layout, drive), point_um)
    return FieldSample(phi=float(phi[0]), grad=grad[0], hessian=hess[0])


# -- dense grids ----------------------------------------------------------


@dataclass(frozen=True)
class FieldMap:
    """Dense field grid in row-major (x, y, z) index order.

    Axes are in micrometres. phi is in volts; efield holds E = -grad(phi)
    in V/m; pseudo_ev (optional) is the pseudopotential in eV.
    """

    x_um: np.ndarray
    y_um: np.ndarray
    z_um: np.ndarray
    phi: np.ndarray          # (nx, ny, nz)
    efield: np.ndarray       # (nx, ny, nz, 3)
    pseudo_ev: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.phi.shape

    def points_um(self) -> np.ndarray:
        gx, gy, gz = np.meshgrid(self.x_um, self.y_um, self.z_um, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def metadata(self) -> dict:
        md = {
            "shape": list(self.shape),
            "order": "row-major over (x, y, z); z varies fastest",
            "axes_um": {"x": self.x_um.tolist(), "y": self.y_um.tolist(),
                        "z": self.z_um.tolist()},
            "columns": ["x_um", "y_um", "z_um", "phi_V", "Ex", "Ey", "Ez"],
            "units": {"phi_V": "V", "E": "V/m"},
        }
        if self.pseudo_ev is not None:
            md["columns"].append("pseudo_eV")
            md["units"]["pseudo_eV"] = "eV"
        return md

    def rows(self):
        pts = self.points_um()
        phi = self.phi.ravel()
        ef = self.efield.reshape(-1, 3)
        ps = None if self.pseudo_ev is None else self.pseudo_ev.ravel()
        for i in range(len(pts)):
            row = [pts[i, 0], pts[i, 1], pts[i, 2], phi[i], ef[i, 0], ef[i, 1], ef[i, 2]]
            if ps is not None:
                row.append(ps[i])
            yield row

    def write_csv(self, path) -> None:
        cols = self.metadata()["columns"]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.rows():
                fh.write(",".join(format(v, ".12g") for v in row) + "\n")

    def write_json(self, path) -> None:
        d = self.metadata()
        d["rows"] = [[float(format(v, ".12g")) for v in row] for row in self.rows()]
        Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")

    def write_sidecar(self, path, extra: Mapping | None = None) -> None:
        md = self.metadata()
        if extra:
            md.update(extra)
        Path(path).write_text(json.dumps(md, indent=2, sort_keys=True) + "\n")


def _axis(lo: float, hi: float, n: int) -> np.ndarray:
    if n < 1:
        raise InvalidParameterError(f"resolution must be >= 1, got {n}")
    if n == 1:
        return np.array([lo], dtype=float)
    return np.linspace(lo, hi, n)


def grid_map(layout: ElectrodeLayout, voltages: Mapping[str, float],
             region_um: Sequence[Sequence[float]], resolution: Sequence[int],
             drive: DriveConfig | None = None, ion: IonSpecies | None = None,
             include_pseudo: bool = False) -> FieldMap:
    """Dense FieldSample grid over an axis-aligned box (um).

    region_um is ((x0, x1), (y0, y1), (z0, z1)); the y range must sit
    strictly above the plane. With include_pseudo=True a pseudopotential
    column is computed from `drive`/`ion`.
    """
    (x0, x1), (y0, y1), (z0, z1) = region_um
    if min(y0, y1) <= 0:
        raise OutOfDomainError("grid region must satisfy y > 0")
    xs = _axis(x0, x1, resolution[0])
    ys = _axis(y0, y1, resolution[1])
    zs = _axis(z0, z1, resolution[2])
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    phi, grad, _ = weighted_fields(_voltage_pairs(layout, voltages), pts)
    shape = (len(xs), len(ys), len(zs))
    pseudo = None
    if include_pseudo:
        if drive is None or ion is None:
            raise InvalidParameterError("include_pseudo requires drive and ion")
        from .pseudo import pseudopotential_batch

        pseudo = pseudopotential_batch(layout, drive, ion, pts).reshape(shape)
    return FieldMap(x_um=xs, y_um=ys, z_um=zs,
                    phi=phi.reshape(shape),
                    efield=(-grad).reshape(shape + (3,)),
                    pseudo_ev=pseudo)
