"""Ion species and rf drive parameters shared across the analysis modules."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import ELEMENTARY_CHARGE, SR88_MASS_AMU, charge_from_e, mass_from_amu


@dataclass(frozen=True)
class IonSpecies:
    """A trapped charge: atomic ion or macroion.

    Q : charge (C), nonzero
    m : mass (kg), positive
    drag_gamma : velocity damping rate (1/s), 0 in vacuum
    """

    Q: float
    m: float
    drag_gamma: float = 0.0

    def __post_init__(self):
        if self.Q == 0.0:
            raise ValueError("ion charge must be nonzero")
        if self.m <= 0.0:
            raise ValueError("ion mass must be positive")
        if self.drag_gamma < 0.0:
            raise ValueError("drag rate must be >= 0")

    @property
    def q_over_m(self):
        return self.Q / self.m


@dataclass(frozen=True)
class DriveConfig:
    """Trap drive: rf amplitude V at angular frequency Omega, plus dc biases.

    V : rf amplitude (V), >= 0
    Omega : angular drive frequency (rad/s), > 0
    U0 : endcap dc voltage (V)
    U : top-plate dc voltage (V)
    """

    V: float
    Omega: float
    U0: float = 0.0
    U: float = 0.0

    def __post_init__(self):
        if self.Omega <= 0.0:
            raise ValueError("drive frequency must be positive")
        if self.V < 0.0:
            raise ValueError("rf amplitude must be >= 0")

    @property
    def drive_freq_hz(self):
        return self.Omega / (2.0 * math.pi)


def ion_from_units(charge_e: float, mass_amu: float, drag_gamma: float = 0.0) -> IonSpecies:
    """Build an IonSpecies from charge in units of e and mass in amu."""
    return IonSpecies(Q=charge_from_e(charge_e), m=mass_from_amu(mass_amu), drag_gamma=drag_gamma)


def sr88_ion(drag_gamma: float = 0.0) -> IonSpecies:
    """Singly charged 88Sr+."""
    return ion_from_units(1.0, SR88_MASS_AMU, drag_gamma)


def macroion_from_q_over_m(q_over_m_e_per_amu: float, mass_amu: float,
                           drag_gamma: float = 0.0) -> IonSpecies:
    """Macroion specified by charge-to-mass ratio (e/amu) and total mass (amu)."""
    m = mass_from_amu(mass_amu)
    q = q_over_m_e_per_amu * mass_amu * ELEMENTARY_CHARGE
    return IonSpecies(Q=q, m=m, drag_gamma=drag_gamma)
