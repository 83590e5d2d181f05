"""Electrode layouts: rectangular patches on the grounded z=0 ... y=0 plane.

Coordinate convention (fixed project-wide): the trap plane is y = 0, ions sit
at y > 0, the axial direction is z and the transverse in-plane direction is x.
All lengths at this interface are micrometres.

The model is gapless: every point of the plane is either part of a named
electrode patch or implicit ground; inter-electrode gaps are exactly zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import InvalidParameterError


class Role(str, Enum):
    RF = "RF"
    DC = "DC"
    CENTER_CONTROL = "CenterControl"
    GROUND = "Ground"


@dataclass(frozen=True)
class RectPatch:
    """Axis-aligned rectangular electrode on the trap plane (extents in um)."""

    id: str
    role: Role
    x_min: float
    x_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.z_min < self.z_max):
            raise InvalidParameterError(
                f"patch {self.id!r}: extents must satisfy x_min < x_max and "
                f"z_min < z_max, got x=[{self.x_min}, {self.x_max}] "
                f"z=[{self.z_min}, {self.z_max}]"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def length(self) -> float:
        return self.z_max - self.z_min

    @property
    def area(self) -> float:
        return self.width * self.length

    def translated(self, dx: float = 0.0, dz: float = 0.0) -> "RectPatch":
        return replace(self, x_min=self.x_min + dx, x_max=self.x_max + dx,
                       z_min=self.z_min + dz, z_max=self.z_max + dz)


@dataclass(frozen=True)
class LayoutParams:
    """Generator parameters for the five-wire cell and its replications.

    a            width of the centre ground/control electrode (um)
    b, c         widths of the two RF rails (um)
    dc_width     axial (z) length of each segmented DC electrode (um)
    rail_length  axial extent of the rails; defaults to 10*(a+b+c) so end
                 effects at the zone centres stay below the percent level
    n_zones      number of nominal trapping zones (>= 1)
    dc_segments_per_zone  DC segments per zone, split across the two flanking
                 columns (must be even; default 6)
    intercell_gap  ground width between replicated cells; defaults to a
    dc_depth     transverse (x) extent of the DC columns; defaults to a+b+c
    """

    a: float
    b: float
    c: float
    dc_width: float
    rail_length: float | None = None
    n_zones: int = 1
    dc_segments_per_zone: int = 6
    intercell_gap: float | None = None
    dc_depth: float | None = None

    def __post_init__(self):
        for name in ("a", "b", "c", "dc_width"):
            v = getattr(self, name)
            if not v > 0:
                raise InvalidParameterError(f"{name} must be > 0, got {v}")
        for name in ("rail_length", "intercell_gap", "dc_depth"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InvalidParameterError(f"{name} must be > 0, got {v}")
        if self.n_zones < 1:
            raise InvalidParameterError(f"n_zones must be >= 1, got {self.n_zones}")
        if self.dc_segments_per_zone < 2 or self.dc_segments_per_zone % 2:
            raise InvalidParameterError(
                "dc_segments_per_zone must be an even integer >= 2, got "
                f"{self.dc_segments_per_zone}"
            )

    @property
    def resolved_rail_length(self) -> float:
        return self.rail_length if self.rail_length is not None else 10.0 * (self.a + self.b + self.c)

    @property
    def resolved_intercell_gap(self) -> float:
        return self.intercell_gap if self.intercell_gap is not None else self.a

    @property
    def resolved_dc_depth(self) -> float:
        return self.dc_depth if self.dc_depth is not None else self.a + self.b + self.c

    def scaled(self, s: float) -> "LayoutParams":
        """All lengths multiplied by s (counts untouched)."""
        if not s > 0:
            raise InvalidParameterError(f"scale must be > 0, got {s}")
        return replace(
            self, a=self.a * s, b=self.b * s, c=self.c * s,
            dc_width=self.dc_width * s,
            rail_length=None if self.rail_length is None else self.rail_length * s,
            intercell_gap=None if self.intercell_gap is None else self.intercell_gap * s,
            dc_depth=None if self.dc_depth is None else self.dc_depth * s,
        )


@dataclass(frozen=True)
class ElectrodeLayout:
    """Immutable collection of patches plus nominal zone centres (um)."""

    patches: tuple[RectPatch, ...]
    zone_centers: tuple[tuple[float, float, float], ...]
    params: LayoutParams | None = None

    def __post_init__(self):
        ids = [p.id for p in self.patches]
        if len(set(ids)) != len(ids):
            raise InvalidParameterError(f"duplicate patch ids: {sorted(ids)}")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.patches)

    def __getitem__(self, patch_id: str) -> RectPatch:
        for p in self.patches:
            if p.id == patch_id:
                return p
        raise InvalidParameterError(f"unknown electrode id {patch_id!r}")

    def by_role(self, role: Role) -> tuple[RectPatch, ...]:
        return tuple(p for p in self.patches if p.role == role)

    @property
    def rf_patches(self) -> tuple[RectPatch, ...]:
        return self.by_role(Role.RF)

    @property
    def dc_patches(self) -> tuple[RectPatch, ...]:
        return self.by_role(Role.DC)

    @property
    def control_patches(self) -> tuple[RectPatch, ...]:
        return self.by_role(Role.CENTER_CONTROL)

    def translated(self, dx: float = 0.0, dz: float = 0.0) -> "ElectrodeLayout":
        return ElectrodeLayout(
            patches=tuple(p.translated(dx, dz) for p in self.patches),
            zone_centers=tuple((x + dx, y, z + dz) for x, y, z in self.zone_centers),
            params=self.params,
        )

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        d: dict = {
            "patches": [
                {"id": p.id, "role": p.role.value, "x_min": p.x_min,
                 "x_max": p.x_max, "z_min": p.z_min, "z_max": p.z_max}
                for p in self.patches
            ],
            "zone_centers": [list(zc) for zc in self.zone_centers],
        }
        if self.params is not None:
            pr = self.params
            d["params"] = {
                "a": pr.a, "b": pr.b, "c": pr.c, "dc_width": pr.dc_width,
                "rail_length": pr.resolved_rail_length,
                "n_zones": pr.n_zones,
                "dc_segments_per_zone": pr.dc_segments_per_zone,
                "intercell_gap": pr.resolved_intercell_gap,
                "dc_depth": pr.resolved_dc_depth,
            }
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ElectrodeLayout":
        patches = tuple(
            RectPatch(id=p["id"], role=Role(p["role"]), x_min=p["x_min"],
                      x_max=p["x_max"], z_min=p["z_min"], z_max=p["z_max"])
            for p in d["patches"]
        )
        zones = tuple(tuple(float(v) for v in zc) for zc in d.get("zone_centers", []))
        params = None
        if "params" in d:
            params = LayoutParams(**d["params"])
        return cls(patches=patches, zone_centers=zones, params=params)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ElectrodeLayout":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "ElectrodeLayout":
        return cls.from_json(Path(path).read_text())


# -- generators -----------------------------------------------------------


def _zone_grid(n_zones: int) -> tuple[int, int]:
    """Map a zone count onto (transverse cells, axial wells per cell).

    Wide layouts replicate sideways; even counts of four or more also split
    each nil line into two axial wells, which is what yields the reference
    four-zone design with four RF rails and twenty-four DC electrodes.
    """
    if n_zones >= 4 and n_zones % 2 == 0:
        return n_zones // 2, 2
    return n_zones, 1


def build_multizone(params: LayoutParams) -> ElectrodeLayout:
    """Replicated five-wire layout with n_zones nominal trapping zones.

    Structure, left to right in x: one segmented DC column, `n_cells`
    five-wire cells (RF rail b | centre control a | RF rail c) separated by
    ground strips of width `intercell_gap`, one more DC column.  Each DC
    column carries (dc_segments_per_zone/2)*n_zones contiguous segments of
    length dc_width, centred axially.
    """
    from .designer import ion_height  # local import; designer depends on geometry

    n_cells, n_axial = _zone_grid(params.n_zones)
    a, b, c = params.a, params.b, params.c
    length = params.resolved_rail_length
    gap = params.resolved_intercell_gap
    pitch = a + b + c + gap

    half_len = length / 2.0
    patches: list[RectPatch] = []

    for k in range(n_cells):
        x0 = k * pitch  # centre of cell k's control electrode
        patches.append(RectPatch(f"rf_b_{k}", Role.RF,
                                 x0 - a / 2 - b, x0 - a / 2, -half_len, half_len))
        patches.append(RectPatch(f"ctl_{k}", Role.CENTER_CONTROL,
                                 x0 - a / 2, x0 + a / 2, -half_len, half_len))
        patches.append(RectPatch(f"rf_c_{k}", Role.RF,
                                 x0 + a / 2, x0 + a / 2 + c, -half_len, half_len))

    depth = params.resolved_dc_depth
    left_outer = -a / 2 - b            # cell 0 left rail edge
    right_outer = (n_cells - 1) * pitch + a / 2 + c
    n_seg = (params.dc_segments_per_zone // 2) * params.n_zones
    span = n_seg * params.dc_width
    for j in range(n_seg):
        z0 = -span / 2 + j * params.dc_width
        z1 = z0 + params.dc_width
        patches.append(RectPatch(f"dc_l_{j}", Role.DC,
                                 left_outer - depth, left_outer, z0, z1))
        patches.append(RectPatch(f"dc_r_{j}", Role.DC,
                                 right_outer, right_outer + depth, z0, z1))

    h = ion_height(a, b, c)
    z_wells = [(-(n_axial - 1) / 2 + j) * (span / n_axial) for j in range(n_axial)]
    zone_centers = tuple(
        (k * pitch, h, zw) for k in range(n_cells) for zw in z_wells
    )
    return ElectrodeLayout(patches=tuple(patches), zone_centers=zone_centers,
                           params=params)


def build_five_wire(params: LayoutParams) -> ElectrodeLayout:
    """Canonical single-zone five-wire trap (requires n_zones == 1)."""
    if params.n_zones != 1:
        raise InvalidParameterError(
            f"five-wire layout requires n_zones == 1, got {params.n_zones}"
        )
    return build_multizone(params)


# -- validation -----------------------------------------------------------


@dataclass
class Defect:
    kind: str
    ids: tuple[str, ...]
    detail: str


@dataclass
class ValidationReport:
    defects: list[Defect] = field(default_factory=list)
    info: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.defects

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "defects": [{"kind": d.kind, "ids": list(d.ids), "detail": d.detail}
                        for d in self.defects],
            "info": list(self.info),
        }


def _overlap_area(p: RectPatch, q: RectPatch) -> float:
    dx = min(p.x_max, q.x_max) - max(p.x_min, q.x_min)
    dz = min(p.z_max, q.z_max) - max(p.z_min, q.z_min)
    return max(dx, 0.0) * max(dz, 0.0)


def validate(layout: ElectrodeLayout) -> ValidationReport:
    """Brute-force O(n^2) geometric checks; findings go in the report."""
    report = ValidationReport()
    ps = layout.patches
    for p in ps:
        if p.area <= 0:
            report.defects.append(Defect("zero-area", (p.id,),
                                         f"patch {p.id!r} has zero area"))
    for i in range(len(ps)):
        for j in range(i + 1, len(ps)):
            area = _overlap_area(ps[i], ps[j])
            if area > 0:
                report.defects.append(Defect(
                    "overlap", (ps[i].id, ps[j].id),
                    f"patches {ps[i].id!r} and {ps[j].id!r} overlap "
                    f"(area {area:.6g} um^2)"))
    report.info.append(
        "gapless model: inter-electrode gap is 0 um; the breakdown-voltage "
        "limit assumes physical gaps of at least 5 um")
    return report
