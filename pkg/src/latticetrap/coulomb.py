"""Inter-well Coulomb interaction of trapped ions above a grounded plane.

The plane's image charges screen the lateral ion-ion force; the model keeps
the paper-style single scalar screening factor on the inter-ion force, with
the exact image-charge force law available as a toggle. Equilibria come from
a damped Newton solve of confinement-plus-Coulomb force balance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .constants import ELEMENTARY_CHARGE, EPSILON_0
from .dynamics import EQ6_COEFFICIENT
from .errors import (ConvergenceError, DegenerateDataError, LatticeTrapError,
                     MergeError, RegimeError)
from .interpolate import TricubicInterpolant
from .params import DriveConfig, IonSpecies
from .pseudopot import PseudoField, find_site_minimum

log = logging.getLogger(__name__)

COULOMB_K = 1.0 / (4.0 * math.pi * EPSILON_0)
EQUILIBRIUM_TOL = 1e-6          # residual force relative to the confining scale
MERGE_FRACTION = 0.2            # separation below this fraction of a pitch = collapse


def screening_factor_image(height: float, d: float) -> float:
    """Unscreened-to-net lateral force ratio for two equal-height charges
    above an infinite grounded plane (image-charge construction)."""
    if height <= 0:
        raise LatticeTrapError("height above the plane must be positive")
    if d <= 0:
        raise LatticeTrapError("separation must be positive")
    reduction = d ** 3 / (d * d + 4.0 * height * height) ** 1.5
    return 1.0 / (1.0 - reduction)


@dataclass(frozen=True)
class IonPair:
    """Two ions in neighbouring wells a lattice pitch apart.

    ``screening`` defaults to the image-charge value at the pair's height.
    """

    ion1: IonSpecies
    ion2: IonSpecies
    d: float
    height: float
    screening: float | None = None

    def __post_init__(self):
        if self.d <= 0:
            raise LatticeTrapError("site separation must be positive")
        s = self.effective_screening
        if s < 1.0:
            raise LatticeTrapError(f"screening factor must be >= 1, got {s}")

    @property
    def effective_screening(self) -> float:
        if self.screening is not None:
            return self.screening
        return screening_factor_image(self.height, self.d)


@dataclass(frozen=True)
class DisplacementResult:
    """Signed offsets from the well centers, positive = away from the other ion."""

    x1: float
    x2: float
    method: str
    screening: float
    iterations: int = 0


@dataclass(frozen=True)
class AnalyticConfinement:
    """Harmonic in-plane wells of the multipole pseudopotential at z = 0."""

    r1: float
    alpha: float = 0.0


def _omega_r(ion: IonSpecies, drive: DriveConfig, r1: float) -> float:
    return math.sqrt(2.0) * ion.Q * drive.V / (ion.m * drive.Omega * r1 ** 2)


def two_ion_displacement_closed(pair: IonPair, drive: DriveConfig,
                                r1: float) -> DisplacementResult:
    """Small-displacement closed form: x1 = Omega^2 m1 r1^4 Q2 / (8 pi eps0 V^2 Q1 s d^2)."""
    s = pair.effective_screening
    denom = 8.0 * math.pi * EPSILON_0 * drive.V ** 2 * s * pair.d ** 2
    x1 = drive.Omega ** 2 * pair.ion1.m * r1 ** 4 * pair.ion2.Q / (denom * pair.ion1.Q)
    x2 = drive.Omega ** 2 * pair.ion2.m * r1 ** 4 * pair.ion1.Q / (denom * pair.ion2.Q)
    if max(abs(x1), abs(x2)) > 0.2 * pair.d:
        raise RegimeError(
            f"closed form outside its regime: |x| = {max(abs(x1), abs(x2)):.3g} m "
            f"> 0.2 d = {0.2 * pair.d:.3g} m")
    return DisplacementResult(x1=x1, x2=x2, method="closed_form", screening=s)


def _pair_force(delta, q1q2, s, height, exact_image):
    """Lateral Coulomb force on ion 1 from ion 2 (2-vector), screened."""
    r = np.linalg.norm(delta)
    if exact_image:
        f = COULOMB_K * q1q2 * (1.0 / r ** 3
                                - 1.0 / (r * r + 4.0 * height ** 2) ** 1.5)
        return f * delta
    return COULOMB_K * q1q2 / (s * r ** 3) * delta


def n_ion_equilibrium(ions, site_positions, drive: DriveConfig,
                      confinement: AnalyticConfinement, height: float,
                      screening: float | None = None,
                      exact_image: bool = False,
                      max_iter: int = 200):
    """In-plane equilibrium displacements for up to four ions on fixed sites.

    Solves confinement gradient + screened Coulomb = 0 per ion by damped
    Newton iteration (numeric Jacobian; the system is tiny). Returns an
    (N, 2) array of displacements and the iteration count.
    """
    n = len(ions)
    if n < 2 or n > 4:
        raise LatticeTrapError("equilibrium solver supports 2..4 ions")
    if len(site_positions) != n:
        raise LatticeTrapError("one site position per ion required")
    sites = np.asarray(site_positions, dtype=float)
    pitch = min(np.linalg.norm(sites[i] - sites[j])
                for i in range(n) for j in range(i + 1, n))
    if screening is None:
        screening = screening_factor_image(height, pitch)

    k_conf = np.array([ions[i].m * _omega_r(ions[i], drive, confinement.r1) ** 2
                       for i in range(n)])

    def residual(u):
        u = u.reshape(n, 2)
        pos = sites + u
        out = -k_conf[:, None] * u
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                out[i] += _pair_force(pos[i] - pos[j], ions[i].Q * ions[j].Q,
                                      screening, height, exact_image)
        return out.ravel()

    def check_merge(u):
        pos = sites + u.reshape(n, 2)
        for i in range(n):
            for j in range(i + 1, n):
                if np.linalg.norm(pos[i] - pos[j]) < MERGE_FRACTION * pitch:
                    raise MergeError(
                        f"ions {i} and {j} collapsed into one well during iteration")

    scale = float(k_conf.min()) * pitch
    u = np.zeros(2 * n)
    r = residual(u)
    it = 0
    while np.max(np.abs(r)) > EQUILIBRIUM_TOL * scale:
        if it >= max_iter:
            raise ConvergenceError(
                f"equilibrium Newton failed after {max_iter} iterations "
                f"(residual {np.max(np.abs(r)):.3e} N)", residual=float(np.max(np.abs(r))),
                iterations=it)
        J = np.empty((2 * n, 2 * n))
        h = 1e-9 * pitch
        for col in range(2 * n):
            up = u.copy()
            up[col] += h
            J[:, col] = (residual(up) - r) / h
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian in equilibrium solve") from None
        lam = 1.0
        r_norm = np.max(np.abs(r))
        while lam > 1e-6:
            u_try = u + lam * step
            check_merge(u_try)
            r_try = residual(u_try)
            if np.max(np.abs(r_try)) < r_norm:
                u, r = u_try, r_try
                break
            lam *= 0.5
        else:
            raise ConvergenceError("equilibrium line search stalled")
        it += 1
    return u.reshape(n, 2), it


def two_ion_equilibrium(pair: IonPair, confinement, drive: DriveConfig,
                        exact_image: bool = False,
                        sites: tuple | None = None) -> DisplacementResult:
    """Coupled nonlinear equilibrium of two ions in neighbouring wells.

    ``confinement`` is an AnalyticConfinement or a solved PseudoField (the
    latter needs ``sites``, uses the field's own ion/drive scaling, and
    requires an unbiased drive).
    """
    if isinstance(confinement, AnalyticConfinement):
        u, it = n_ion_equilibrium(
            [pair.ion1, pair.ion2], [(0.0, 0.0), (pair.d, 0.0)], drive,
            confinement, pair.height,
            screening=None if exact_image else pair.effective_screening,
            exact_image=exact_image)
        return DisplacementResult(x1=float(-u[0, 0]), x2=float(u[1, 0]),
                                  method="equilibrium",
                                  screening=pair.effective_screening,
                                  iterations=it)
    if isinstance(confinement, PseudoField):
        return _two_ion_equilibrium_solved(pair, confinement, exact_image, sites)
    raise TypeError(f"unsupported confinement {type(confinement).__name__}")


def _two_ion_equilibrium_solved(pair, psi: PseudoField, exact_image, sites):
    if sites is None:
        raise LatticeTrapError("solved-field equilibrium requires the two site indices")
    if psi.drive.U != 0.0:
        raise LatticeTrapError("solved-field equilibrium supports unbiased drives only")
    mins = [find_site_minimum(psi, s) for s in sites]
    axis = mins[1][:2] - mins[0][:2]
    d_sites = float(np.linalg.norm(axis))
    axis = axis / d_sites
    s = pair.effective_screening
    interp = [TricubicInterpolant.from_field(psi.field, center=m,
                                             halfwidth=0.45 * d_sites) for m in mins]
    # eV -> J, then rescale the field's reference ion to each pair member
    ref = psi.ion
    scale = [ELEMENTARY_CHARGE * (ion.Q ** 2 / ion.m) / (ref.Q ** 2 / ref.m)
             for ion in (pair.ion1, pair.ion2)]
    ions = (pair.ion1, pair.ion2)
    height = pair.height
    h_fd = 0.25 * psi.field.spacing[0]

    def conf_force(i, lateral):
        pos = mins[i].copy()
        pos[:2] += lateral
        g = np.empty(2)
        for ax in range(2):
            p_hi = pos.copy()
            p_lo = pos.copy()
            p_hi[ax] += h_fd
            p_lo[ax] -= h_fd
            g[ax] = (interp[i](p_hi) - interp[i](p_lo)) / (2.0 * h_fd)
        return -scale[i] * g

    def residual(u):
        u = u.reshape(2, 2)
        pos = [mins[i][:2] + u[i] for i in range(2)]
        out = np.empty((2, 2))
        for i in range(2):
            j = 1 - i
            out[i] = conf_force(i, u[i]) + _pair_force(
                pos[i] - pos[j], ions[i].Q * ions[j].Q, s, height, exact_image)
        return out.ravel()

    # confining force scale from the field's own stiffness near the well
    probe = conf_force(0, np.array([0.05 * d_sites, 0.0]))
    k0 = abs(probe[0]) / (0.05 * d_sites)
    scale_f = k0 * d_sites

    u = np.zeros(4)
    r = residual(u)
    it = 0
    while np.max(np.abs(r)) > EQUILIBRIUM_TOL * scale_f:
        if it >= 100:
            raise ConvergenceError("solved-field equilibrium did not converge",
                                   residual=float(np.max(np.abs(r))), iterations=it)
        J = np.empty((4, 4))
        h = 1e-6 * d_sites
        for col in range(4):
            up = u.copy()
            up[col] += h
            J[:, col] = (residual(up) - r) / h
        step = np.linalg.solve(J, -r)
        lam, r_norm = 1.0, np.max(np.abs(r))
        while lam > 1e-6:
            u_try = u + lam * step
            pos = [mins[i][:2] + u_try.reshape(2, 2)[i] for i in range(2)]
            if np.linalg.norm(pos[0] - pos[1]) < MERGE_FRACTION * d_sites:
                raise MergeError("ions collapsed into one well")
            r_try = residual(u_try)
            if np.max(np.abs(r_try)) < r_norm:
                u, r = u_try, r_try
                break
            lam *= 0.5
        else:
            raise ConvergenceError("solved-field equilibrium line search stalled")
        it += 1
    u = u.reshape(2, 2)
    return DisplacementResult(x1=float(-u[0] @ axis), x2=float(u[1] @ axis),
                              method="equilibrium", screening=s, iterations=it)


def fit_charge_to_mass(data, drive: DriveConfig, r1: float, alpha: float,
                       z1: float, U: float):
    """Least-squares Q/m from measured (Omega, omega_z) pairs.

    Fits the biased axial-frequency model (as printed, 144/64 coefficient)
    with Q/m as the single free parameter, working in the omega^2 domain
    where the model is polynomial in Q/m. Returns (q_over_m, standard error)
    in C/kg.
    """
    pts = np.asarray(data, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise DegenerateDataError("need at least 3 (Omega, omega_z) pairs")
    omegas, wz = pts[:, 0], pts[:, 1]
    if len(np.unique(omegas)) < len(omegas):
        raise DegenerateDataError("drive frequencies must be distinct")
    if np.any(omegas <= 0) or np.any(wz < 0):
        raise DegenerateDataError("frequencies must be positive")

    v = drive.V

    def model_sq(rho):
        return 8.0 * rho ** 2 * v ** 2 / (omegas ** 2 * r1 ** 4) \
            - 8.0 * EQ6_COEFFICIENT * alpha * U * rho / (r1 * z1)

    def res(p):
        return model_sq(p[0]) - wz ** 2

    rho0 = float(wz[0] * omegas[0] * r1 ** 2 / (2.0 * math.sqrt(2.0) * v))
    sol = least_squares(res, [rho0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if not sol.success:
        raise ConvergenceError(f"Q/m fit failed: {sol.message}")
    rho = float(abs(sol.x[0]))
    dof = max(len(wz) - 1, 1)
    s2 = 2.0 * sol.cost / dof
    jtj = float(sol.jac.T @ sol.jac)
    err = math.sqrt(s2 / jtj) if jtj > 0 else float("inf")
    return rho, err
