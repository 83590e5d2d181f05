"""Physical constants (CODATA, via scipy) used throughout the package."""

from __future__ import annotations

from dataclasses import dataclass

from scipy import constants as _sc


@dataclass(frozen=True)
class PhysicalConstants:
    """Fixed CODATA values; a single shared instance is exported as CODATA."""

    elementary_charge: float  # C
    atomic_mass: float        # kg
    hbar: float               # J s
    bohr_magneton: float      # J/T


CODATA = PhysicalConstants(
    elementary_charge=_sc.elementary_charge,
    atomic_mass=_sc.atomic_mass,
    hbar=_sc.hbar,
    bohr_magneton=_sc.physical_constants["Bohr magneton"][0],
)

# Length conversion used at every public boundary: interfaces take micrometres,
# internals run in metres.
UM = 1e-6
