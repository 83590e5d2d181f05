"""Magnetometer sensitivity budgets, field-to-frequency tuning, gradiometry.

The shot-noise-limited field resolution of the trapped-ion magnetometer is

    dB_min = 2.33 hbar / (mu_B sqrt(n T_tot T2))          [T/sqrt(Hz)]

and improves by a further 1/sqrt(n) when the n ions are entangled, giving
the overall 1/n entangled scaling. All outputs are SI unless a unit is in
the name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np

from .constants import CODATA
from .errors import InfeasibleTargetError, InvalidParameterError, ZeroBaselineError

SENSITIVITY_PREFACTOR = 2.33

# first-order Zeeman splitting coefficient for the F=1, m_F = +/-1 states
# (1.4 MHz per gauss)
DEFAULT_ZEEMAN_HZ_PER_T = 1.4e10

RF_BAND_HZ = (1e6, 150e6)
MICROWAVE_BAND_HZ = (12.5e9, 12.7e9)
DEFAULT_MICROWAVE_CENTER_HZ = 12.642e9


@dataclass(frozen=True)
class SensitivitySpec:
    """n ions probed for t_total seconds with coherence time t2."""

    n_ions: int = 1
    t2_s: float = 1.0
    t_total_s: float = 1.0
    entangled: bool = False

    def __post_init__(self):
        if self.n_ions < 1:
            raise InvalidParameterError(f"n_ions must be >= 1, got {self.n_ions}")
        if not self.t2_s > 0:
            raise InvalidParameterError(f"t2_s must be > 0, got {self.t2_s}")
        if not self.t_total_s > 0:
            raise InvalidParameterError(
                f"t_total_s must be > 0, got {self.t_total_s}")


def _base_constant() -> float:
    return SENSITIVITY_PREFACTOR * CODATA.hbar / CODATA.bohr_magneton


def sensitivity(spec: SensitivitySpec) -> float:
    """Smallest resolvable field in T/sqrt(Hz)."""
    val = _base_constant() / math.sqrt(spec.n_ions * spec.t_total_s * spec.t2_s)
    if spec.entangled:
        val /= math.sqrt(spec.n_ions)
    return val


class ResourceSolution(NamedTuple):
    field: str
    value: float
    spec: SensitivitySpec


def required_resources(target_t_sqrthz: float, n_ions: int | None = None,
                       t2_s: float | None = None, t_total_s: float | None = None,
                       entangled: bool = False,
                       max_ions: int = 10 ** 12) -> ResourceSolution:
    """Solve the sensitivity budget for the one unspecified resource.

    Exactly one of n_ions / t2_s / t_total_s must be None; as a special case
    t2_s and t_total_s may both be None, in which case they are solved tied
    equal. Ion counts are rounded up to the smallest integer meeting the
    target.
    """
    if not target_t_sqrthz > 0:
        raise InvalidParameterError("target must be > 0")
    k = _base_constant()
    free = [name for name, v in
            (("n_ions", n_ions), ("t2_s", t2_s), ("t_total_s", t_total_s))
            if v is None]
    if free == ["n_ions"]:
        tt = t2_s * t_total_s
        if entangled:
            n_exact = k / (target_t_sqrthz * math.sqrt(tt))
        else:
            n_exact = (k / target_t_sqrthz) ** 2 / tt
        n = max(1, math.ceil(n_exact - 1e-12))
        if n > max_ions:
            raise InfeasibleTargetError(
                f"target needs {n} ions, above the configured maximum {max_ions}")
        spec = SensitivitySpec(n, t2_s, t_total_s, entangled)
        return ResourceSolution("n_ions", n, spec)
    if free in (["t2_s"], ["t_total_s"]):
        n = n_ions
        fixed = t_total_s if free == ["t2_s"] else t2_s
        scale = n ** 2 if entangled else n
        t = (k / target_t_sqrthz) ** 2 / (scale * fixed)
        spec = SensitivitySpec(n, t if free == ["t2_s"] else t2_s,
                               t if free == ["t_total_s"] else t_total_s, entangled)
        return ResourceSolution(free[0], t, spec)
    if free == ["t2_s", "t_total_s"]:
        n = n_ions
        t = k / (target_t_sqrthz * (n if entangled else math.sqrt(n)))
        spec = SensitivitySpec(n, t, t, entangled)
        return ResourceSolution("t2_s=t_total_s", t, spec)
    raise InvalidParameterError(
        "exactly one of n_ions/t2_s/t_total_s must be unspecified "
        "(or both times, solved equal); got free fields " + repr(free))


# -- tuning -------------------------------------------------------------------


class Band(str, Enum):
    RF = "RF"
    MICROWAVE = "Microwave"


@dataclass(frozen=True)
class TuningMap:
    """Transition frequencies reachable at a given bias field."""

    bias_field_t: float
    band: Band
    f_plus_hz: float
    f_minus_hz: float
    f_zero_hz: float
    sensing_freq_hz: float
    in_range: bool


def tune(bias_field_t: float, band: Band | str,
         zeeman_hz_per_t: float = DEFAULT_ZEEMAN_HZ_PER_T,
         microwave_center_hz: float = DEFAULT_MICROWAVE_CENTER_HZ) -> TuningMap:
    """First-order Zeeman tuning map of the sensing transitions.

    The RF band reports the splitting of the m_F = +/-1 states around the
    zero-field m_F = 0 level (sensing frequency = zeeman * B); the microwave
    band reports the hyperfine transition at the configured centre shifted by
    +/- zeeman * B. In-range flags follow the band windows (inclusive).
    """
    if bias_field_t < 0:
        raise InvalidParameterError(
            f"bias field must be >= 0, got {bias_field_t}")
    band = Band(band)
    split = zeeman_hz_per_t * bias_field_t
    if band is Band.RF:
        f_plus, f_minus, f_zero = split, -split, 0.0
        sensing = split
        in_range = RF_BAND_HZ[0] <= sensing <= RF_BAND_HZ[1]
    else:
        f_plus = microwave_center_hz + split
        f_minus = microwave_center_hz - split
        f_zero = microwave_center_hz
        sensing = f_plus
        in_range = (MICROWAVE_BAND_HZ[0] <= f_minus
                    and f_plus <= MICROWAVE_BAND_HZ[1])
    return TuningMap(bias_field_t=bias_field_t, band=band, f_plus_hz=f_plus,
                     f_minus_hz=f_minus, f_zero_hz=f_zero,
                     sensing_freq_hz=sensing, in_range=in_range)


# -- gradiometry --------------------------------------------------------------


@dataclass(frozen=True)
class ZoneArray:
    """Sensing zones: positions in um and per-zone field sensitivities."""

    zone_positions_um: tuple[tuple[float, float, float], ...]
    per_zone_sensitivity_t_sqrthz: tuple[float, ...]

    def __post_init__(self):
        if len(self.zone_positions_um) < 2:
            raise InvalidParameterError("gradiometry needs at least 2 zones")
        if len(self.zone_positions_um) != len(self.per_zone_sensitivity_t_sqrthz):
            raise InvalidParameterError(
                "zone_positions and per_zone_sensitivity lengths differ")


class GradiometerPair(NamedTuple):
    pair: tuple[int, int]
    baseline_um: float
    grad_sens_t_per_sqrthz_m: float


def gradiometer_resolution(array: ZoneArray,
                           pairing: str = "adjacent") -> list[GradiometerPair]:
    """Gradient sensitivity per zone pair, independent-noise assumption.

    Per pair dG = sqrt(dB_i^2 + dB_j^2) / d with d the Euclidean separation:
    the two zone noises are taken as uncorrelated and combined in quadrature.
    """
    if pairing not in ("adjacent", "all-pairs"):
        raise InvalidParameterError(
            f"pairing must be 'adjacent' or 'all-pairs', got {pairing!r}")
    n = len(array.zone_positions_um)
    if pairing == "adjacent":
        pairs = [(i, i + 1) for i in range(n - 1)]
    else:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    out = []
    for i, j in pairs:
        pi = np.asarray(array.zone_positions_um[i], float)
        pj = np.asarray(array.zone_positions_um[j], float)
        d_um = float(np.linalg.norm(pj - pi))
        if d_um == 0.0:
            raise ZeroBaselineError(f"zones {i} and {j} are coincident")
        dbi = array.per_zone_sensitivity_t_sqrthz[i]
        dbj = array.per_zone_sensitivity_t_sqrthz[j]
        dg = math.hypot(dbi, dbj) / (d_um * 1e-6)
        out.append(GradiometerPair((i, j), d_um, dg))
    return out
