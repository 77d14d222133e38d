"""Physical constants and unit conversions (SI internally everywhere)."""

import math

# CODATA 2018 exact / recommended values
ELEMENTARY_CHARGE = 1.602176634e-19      # C
ATOMIC_MASS = 1.66053906660e-27          # kg
EPSILON_0 = 8.8541878128e-12             # F/m
PLANCK_H = 6.62607015e-34                # J s
HBAR = PLANCK_H / (2.0 * math.pi)        # J s
BOLTZMANN_K = 1.380649e-23               # J/K

SR88_MASS_AMU = 87.905619                # 88Sr isotope mass


def ev_to_joule(e_ev):
    return e_ev * ELEMENTARY_CHARGE


def joule_to_ev(e_j):
    return e_j / ELEMENTARY_CHARGE


def charge_from_e(q_e):
    """Charge in coulomb from units of the elementary charge."""
    return q_e * ELEMENTARY_CHARGE


def mass_from_amu(m_amu):
    """Mass in kg from atomic mass units."""
    return m_amu * ATOMIC_MASS
