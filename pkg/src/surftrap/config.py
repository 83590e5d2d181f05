"""Drive and ion dataclasses shared by the field and potential modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .constants import CODATA
from .errors import InvalidParameterError


@dataclass(frozen=True)
class IonSpecies:
    """Trapped ion: mass in atomic mass units, integer charge number."""

    mass_amu: float = 171.0
    charge_number: int = 1
    label: str = "171Yb+"

    def __post_init__(self):
        if not self.mass_amu > 0:
            raise InvalidParameterError(f"mass_amu must be > 0, got {self.mass_amu}")
        if self.charge_number < 1:
            raise InvalidParameterError(
                f"charge_number must be >= 1, got {self.charge_number}")

    @property
    def mass_kg(self) -> float:
        return self.mass_amu * CODATA.atomic_mass

    @property
    def charge_c(self) -> float:
        return self.charge_number * CODATA.elementary_charge


YB171 = IonSpecies()


@dataclass(frozen=True)
class DriveConfig:
    """RF amplitude/frequency plus static voltages keyed by electrode id.

    v_rf is the amplitude applied to every role=RF patch; omega_rf is the
    drive angular frequency in rad/s. Electrodes absent from dc_voltages sit
    at 0 V.
    """

    v_rf: float
    omega_rf: float
    dc_voltages: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.v_rf < 0:
            raise InvalidParameterError(f"v_rf must be >= 0, got {self.v_rf}")
        if not self.omega_rf > 0:
            raise InvalidParameterError(
                f"omega_rf must be > 0, got {self.omega_rf}")
        object.__setattr__(self, "dc_voltages", dict(self.dc_voltages))

    def with_dc(self, dc_voltages: Mapping[str, float]) -> "DriveConfig":
        return DriveConfig(self.v_rf, self.omega_rf, dc_voltages)
