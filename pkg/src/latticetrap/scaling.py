"""Quantum-simulation feasibility: spin-spin coupling rate vs lattice scale.

The coupling rate between ions in neighbouring wells falls as the fourth
power of the secular frequency, and shrinking the lattice at fixed nominal
stability and drive voltage forces that frequency up as 1/d: the scan makes
the resulting J proportional-to-d law explicit.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .constants import EPSILON_0, HBAR, PLANCK_H
from .errors import LatticeTrapError
from .params import DriveConfig, IonSpecies

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CouplingParams:
    """Inputs of the coupling-rate formula: pushing force F, ion spacing d,
    secular frequency omega (rad/s), and the ion."""

    F: float
    d: float
    omega: float
    ion: IonSpecies

    def __post_init__(self):
        if min(self.F, self.d, self.omega) <= 0:
            raise LatticeTrapError("coupling parameters must be positive")


@dataclass(frozen=True)
class ScalingConstraint:
    """Scan constraints: nominal stability q, minimum loadable depth, V cap."""

    q_target: float = 0.3
    depth_min_ev: float = 0.1
    v_max: float | None = None

    def __post_init__(self):
        if not 0.0 < self.q_target < 0.908:
            raise LatticeTrapError(
                f"q_target must lie in the first stability region, got {self.q_target}")


def j_coupling(p: CouplingParams, convention: str = "h") -> float:
    """Spin-spin coupling rate in Hz: J = Q^2 F^2 / (8 pi eps0 m^2 d^3 omega^4).

    The energy J is reported as a rate; ``convention`` picks J/h (default)
    or J/hbar. Ions with Q != e substitute their own charge for e.
    """
    j_energy = (p.ion.Q ** 2 * p.F ** 2
                / (8.0 * math.pi * EPSILON_0 * p.ion.m ** 2 * p.d ** 3 * p.omega ** 4))
    if convention == "h":
        return j_energy / PLANCK_H
    if convention == "hbar":
        return j_energy / HBAR
    raise ValueError(f"unknown convention {convention!r} (use 'h' or 'hbar')")


def force_for_coupling(j_hz: float, d: float, omega: float, ion: IonSpecies,
                       convention: str = "h") -> float:
    """Invert the coupling formula for the pushing force magnitude."""
    quantum = PLANCK_H if convention == "h" else HBAR
    j_energy = j_hz * quantum
    f_sq = j_energy * 8.0 * math.pi * EPSILON_0 * ion.m ** 2 * d ** 3 * omega ** 4 \
        / ion.Q ** 2
    return math.sqrt(f_sq)


def lamb_dicke(ion: IonSpecies, omega: float, wavelength: float):
    """Lamb-Dicke parameter eta = (2 pi / lambda) sqrt(hbar / 2 m omega).

    Returns (eta, in_regime); eta >= 1 flags the ion as outside the
    confinement regime.
    """
    if omega <= 0 or wavelength <= 0:
        raise LatticeTrapError("omega and wavelength must be positive")
    eta = (2.0 * math.pi / wavelength) * math.sqrt(HBAR / (2.0 * ion.m * omega))
    return eta, eta < 1.0


@dataclass(frozen=True)
class ScalingRow:
    d: float
    r1: float
    V: float
    Omega: float
    omega_r: float
    q: float
    depth_ev: float
    j_over_h_hz: float
    eta: float
    feasible: bool
    j_gain: float = 1.0


def scaling_scan(ion: IonSpecies, base_drive: DriveConfig, base_r1: float,
                 base_d: float, base_depth_ev: float, d_values,
                 constraint: ScalingConstraint, F: float,
                 wavelength: float = 532e-9,
                 v_post_load_scale: float = 1.0) -> list[ScalingRow]:
    """Constrained shrink of the lattice: r1 scales with d, V held fixed,
    Omega solved from the q constraint.

    Depth follows the q*V proportionality anchored at the base solve.
    ``v_post_load_scale`` < 1 models dropping the rf voltage after loading
    (depth constraint relaxed); each row then reports the coupling gain
    relative to the full-voltage row.
    """
    if not 0.0 < v_post_load_scale <= 1.0:
        raise LatticeTrapError("post-load voltage scale must be in (0, 1]")
    _, q_base = _mathieu(ion, base_drive, base_r1)
    v_full = base_drive.V
    v_run = v_full * v_post_load_scale
    if constraint.v_max is not None and v_run > constraint.v_max:
        raise LatticeTrapError(
            f"no drive satisfies q = {constraint.q_target} under V_max: "
            f"requires V = {v_run:g} V > {constraint.v_max:g} V")

    rows = []
    for d in d_values:
        r1 = base_r1 * (d / base_d)
        omega_drive = math.sqrt(
            2.0 * abs(ion.Q) * v_run / (ion.m * r1 ** 2 * constraint.q_target))
        drive = DriveConfig(V=v_run, Omega=omega_drive)
        _, q = _mathieu(ion, drive, r1)
        omega_r = math.sqrt(2.0) * abs(ion.Q) * v_run / (ion.m * omega_drive * r1 ** 2)
        depth = base_depth_ev * (q * v_run) / (q_base * v_full)
        j = j_coupling(CouplingParams(F=F, d=d, omega=omega_r, ion=ion))
        eta, _ = lamb_dicke(ion, omega_r, wavelength)
        feasible = (v_post_load_scale == 1.0 and depth >= constraint.depth_min_ev
                    or v_post_load_scale < 1.0) \
            and (constraint.v_max is None or v_run <= constraint.v_max)
        j_gain = 1.0 / v_post_load_scale ** 2
        rows.append(ScalingRow(d=d, r1=r1, V=v_run, Omega=omega_drive,
                               omega_r=omega_r, q=q, depth_ev=depth,
                               j_over_h_hz=j, eta=eta, feasible=feasible,
                               j_gain=j_gain))
    return rows


def _mathieu(ion, drive, r0):
    denom = ion.m * r0 ** 2 * drive.Omega ** 2
    return 8.0 * ion.Q * drive.U0 / denom, 2.0 * ion.Q * drive.V / denom


def scan_to_csv(rows: list[ScalingRow], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d_m", "r1_m", "V_volt", "Omega_rad_s", "omega_r_rad_s",
                    "q", "depth_eV", "J_over_h_Hz", "eta", "feasible"])
        for r in rows:
            w.writerow([f"{r.d:.9e}", f"{r.r1:.9e}", f"{r.V:.6f}",
                        f"{r.Omega:.9e}", f"{r.omega_r:.9e}", f"{r.q:.9f}",
                        f"{r.depth_ev:.9e}", f"{r.j_over_h_hz:.9e}",
                        f"{r.eta:.9e}", int(r.feasible)])
