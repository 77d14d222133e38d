"""Ion motion: Mathieu stability, secular frequencies, trajectories, spectra.

Floquet stability integrates the (optionally damped) Mathieu equation over
one drive period to build the monodromy matrix; trajectories use a fixed-step
position-Verlet integrator with the rf force evaluated at half steps. The
numerical tickle-and-FFT route mirrors the resonance measurement a real trap
uses to read out its secular frequencies.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .backend import kernels
from .errors import (AntiTrappingError, BracketError, LatticeTrapError,
                     MissingZ1Error, NoPeakError, StepSizeError)
from .interpolate import FieldWindow
from .params import DriveConfig, IonSpecies
from .pseudopot import pseudopotential_analytic

log = logging.getLogger(__name__)

STABILITY_TOL = 1e-9
FLOQUET_IVP_TOL = 1e-12
DEFAULT_STEPS_PER_PERIOD = 200
MIN_STEPS_PER_PERIOD = 50
EQ6_COEFFICIENT = 144.0 / 64.0     # as printed in the biased-frequency formula


@dataclass(frozen=True)
class StabilityPoint:
    a: float
    q: float
    stable: bool
    floquet_exponent: float    # largest Floquet multiplier magnitude


@dataclass
class Trajectory:
    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    ion: IonSpecies
    drive: DriveConfig
    escaped: bool = False
    escape_time: float | None = None

    def axis(self, name):
        return self.pos[:, {"x": 0, "y": 1, "z": 2}[name]] if isinstance(name, str) \
            else self.pos[:, name]


def mathieu_parameters(ion: IonSpecies, drive: DriveConfig, r0: float):
    """Dimensionless dc and rf strengths (a, q); pass r1 for lattice traps."""
    if r0 <= 0:
        raise LatticeTrapError("r0 must be positive")
    denom = ion.m * r0 ** 2 * drive.Omega ** 2
    a = 8.0 * ion.Q * drive.U0 / denom
    q = 2.0 * ion.Q * drive.V / denom
    return a, q


def _monodromy(a: float, q: float, damping: float) -> np.ndarray:
    """Integrate u'' + c u' + (a - 2 q cos 2 tau) u = 0 over one period (pi)."""
    c = 2.0 * damping   # physical drag gamma/Omega -> Mathieu-time coefficient

    def rhs(tau, y):
        u1, v1, u2, v2 = y
        w = a - 2.0 * q * math.cos(2.0 * tau)
        return [v1, -c * v1 - w * u1, v2, -c * v2 - w * u2]

    sol = solve_ivp(rhs, (0.0, math.pi), [1.0, 0.0, 0.0, 1.0], method="DOP853",
                    rtol=FLOQUET_IVP_TOL, atol=FLOQUET_IVP_TOL)
    if not sol.success:
        raise LatticeTrapError(f"Floquet integration failed: {sol.message}")
    y = sol.y[:, -1]
    return np.array([[y[0], y[2]], [y[1], y[3]]])


def is_stable(a: float, q: float, drag_gamma_over_omega: float = 0.0) -> StabilityPoint:
    """Floquet stability: both monodromy eigenvalues on/inside the unit circle."""
    M = _monodromy(a, q, drag_gamma_over_omega)
    mu = float(np.max(np.abs(np.linalg.eigvals(M))))
    return StabilityPoint(a=a, q=q, stable=mu <= 1.0 + STABILITY_TOL, floquet_exponent=mu)


def stability_boundary(a: float = 0.0, drag_gamma_over_omega: float = 0.0,
                       q_max: float = 2.0, tol: float = 1e-4) -> float:
    """Critical q of the first stability region at fixed a, by bisection."""
    n_scan = 41
    qs = np.linspace(q_max / n_scan, q_max, n_scan)
    flags = [is_stable(a, qv, drag_gamma_over_omega).stable for qv in qs]
    last_stable = None
    for qv, ok in zip(qs, flags):
        if ok:
            last_stable = qv
    if last_stable is None or last_stable == qs[-1]:
        raise BracketError(f"no stable->unstable transition found in (0, {q_max}]")
    lo = last_stable
    hi = qs[np.searchsorted(qs, last_stable) + 1]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_stable(a, mid, drag_gamma_over_omega).stable:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def floquet_secular_frequency(a: float, q: float, omega_drive: float) -> float:
    """Exact secular frequency from the Mathieu characteristic exponent."""
    M = _monodromy(a, q, 0.0)
    half_trace = 0.5 * float(np.trace(M))
    if abs(half_trace) > 1.0:
        raise LatticeTrapError(f"(a={a}, q={q}) is unstable; no real exponent")
    beta = math.acos(half_trace) / math.pi
    return beta * omega_drive / 2.0


def drive_for_mathieu_q(ion: IonSpecies, q: float, omega_drive: float,
                        r1: float) -> DriveConfig:
    """Drive whose in-plane equation of motion is the Mathieu equation with
    parameter exactly ``q``.

    In the multipole field the literal radial Mathieu parameter is
    4QV/(m Omega^2 r1^2), twice the nominal q = 2QV/(m r1^2 Omega^2) (and the
    axial one is twice that again). Trajectory-vs-Floquet comparisons need
    the literal parameter, so this maps q -> V accordingly.
    """
    v = q * ion.m * omega_drive ** 2 * r1 ** 2 / (4.0 * ion.Q)
    return DriveConfig(V=v, Omega=omega_drive)


def secular_frequencies(ion: IonSpecies, drive: DriveConfig, r1: float):
    """Harmonic-region frequencies (omega_r, omega_z); omega_z = 2 omega_r exactly."""
    if r1 <= 0:
        raise LatticeTrapError("r1 must be positive")
    base = ion.Q * drive.V / (ion.m * drive.Omega * r1 ** 2)
    return math.sqrt(2.0) * base, 2.0 * math.sqrt(2.0) * base


def omega_z_biased(ion: IonSpecies, drive: DriveConfig, r1: float, alpha: float,
                   z1: float, formula: str = "printed") -> float:
    """Axial frequency with a top-plate dc bias.

    ``printed`` evaluates the closed-form bracket with its 144/64 coefficient;
    ``curvature`` differentiates the analytic pseudopotential plus the linear
    bias term at the shifted minimum (see verify_biased_coefficient for the
    numerical comparison of the two).
    """
    if z1 <= 0:
        raise MissingZ1Error("z1 must be positive")
    w0_sq = 8.0 * (ion.Q * drive.V / (ion.m * drive.Omega * r1 ** 2)) ** 2
    if formula == "printed":
        bracket = 1.0 - EQ6_COEFFICIENT * alpha * ion.m * drive.Omega ** 2 * r1 ** 3 \
            * drive.U / (ion.Q * drive.V ** 2 * z1)
        if bracket <= 0.0:
            raise AntiTrappingError(
                f"biased axial bracket {bracket:g} <= 0: static bias destroys confinement")
        return math.sqrt(w0_sq * bracket)
    if formula == "curvature":
        wsq = _biased_curvature_sq(ion, drive, r1, alpha, z1)
        if wsq <= 0.0:
            raise AntiTrappingError("curvature at the shifted minimum is non-positive")
        return math.sqrt(wsq)
    raise ValueError(f"unknown formula {formula!r}")


def _biased_axial_energy(z, ion, drive, r1, alpha, z1):
    return pseudopotential_analytic(0.0, z, ion, drive, r1, alpha) \
        + ion.Q * drive.U * z / z1


def _biased_curvature_sq(ion, drive, r1, alpha, z1):
    """m omega_z^2 from the shifted minimum of the biased axial potential."""
    h = 1e-6 * r1

    def dW(z):
        return (_biased_axial_energy(z + h, ion, drive, r1, alpha, z1)
                - _biased_axial_energy(z - h, ion, drive, r1, alpha, z1)) / (2.0 * h)

    # the unbiased well is at z = 0; the bias shifts it by about -QU/(8K z1)
    k_conf = 8.0 * (ion.Q * drive.V) ** 2 / (ion.m * drive.Omega ** 2 * r1 ** 4)
    guess = -ion.Q * drive.U / (k_conf * z1)
    span = max(8.0 * abs(guess), 1e-4 * r1)
    lo, hi = guess - span, guess + span
    if dW(lo) * dW(hi) > 0:
        raise AntiTrappingError("no shifted axial minimum near the unbiased null")
    z_min = brentq(dW, lo, hi, xtol=1e-18, rtol=8.9e-16)
    w = _biased_axial_energy
    d2 = (w(z_min + h, ion, drive, r1, alpha, z1)
          - 2.0 * w(z_min, ion, drive, r1, alpha, z1)
          + w(z_min - h, ion, drive, r1, alpha, z1)) / (h * h)
    return d2 / ion.m


def verify_biased_coefficient(ion: IonSpecies, drive: DriveConfig, r1: float,
                              alpha: float, z1: float) -> dict:
    """Back out the bracket coefficient implied by the curvature oracle.

    Returns the as-printed coefficient (144/64), the empirical coefficient
    from the finite-difference curvature at the shifted minimum, and their
    ratio, for one parameter set with U != 0.
    """
    if drive.U == 0.0 or alpha == 0.0:
        raise LatticeTrapError("coefficient check needs U != 0 and alpha != 0")
    w0_sq = 8.0 * (ion.Q * drive.V / (ion.m * drive.Omega * r1 ** 2)) ** 2
    wsq = _biased_curvature_sq(ion, drive, r1, alpha, z1)
    term = alpha * ion.m * drive.Omega ** 2 * r1 ** 3 * drive.U \
        / (ion.Q * drive.V ** 2 * z1)
    c_emp = (1.0 - wsq / w0_sq) / term
    return {
        "printed_coefficient": EQ6_COEFFICIENT,
        "empirical_coefficient": float(c_emp),
        "ratio_empirical_to_printed": float(c_emp / EQ6_COEFFICIENT),
        "omega_printed": omega_z_biased(ion, drive, r1, alpha, z1, "printed"),
        "omega_curvature": math.sqrt(wsq),
    }


# ---------------------------------------------------------------------------
# trajectory integration

@dataclass(frozen=True)
class AnalyticField:
    """Multipole rf field, coordinates centered on the well null."""

    r1: float
    alpha: float = 0.0


def integrate_trajectory(field, ion: IonSpecies, drive: DriveConfig, x0, v0,
                         duration: float, tickle=None, z1: float | None = None,
                         dt: float | None = None, stride: int | None = None,
                         escape_radius: float | None = None) -> Trajectory:
    """Integrate ion motion in the time-dependent rf field.

    ``field`` is an AnalyticField (multipole model) or a FieldWindow built
    from a solved grid. A top-plate bias (drive.U) and a tickle
    ``(amplitude_volts, angular_frequency)`` act as uniform axial forces of
    magnitude Q*U/z1, which requires ``z1``. Escape is flagged, not raised.
    """
    period = 2.0 * math.pi / drive.Omega
    if dt is None:
        dt = period / DEFAULT_STEPS_PER_PERIOD
    if dt > period / MIN_STEPS_PER_PERIOD:
        raise StepSizeError(
            f"dt = {dt:g} s exceeds drive period / {MIN_STEPS_PER_PERIOD}")
    nsteps = int(math.ceil(duration / dt))
    if stride is None:
        stride = max(1, nsteps // 65536)

    az_static = 0.0
    if drive.U != 0.0:
        if z1 is None:
            raise MissingZ1Error("drive.U != 0 requires z1 for the bias force")
        az_static = -ion.Q * drive.U / (ion.m * z1)
    a_tickle = 0.0
    w_tickle = 0.0
    if tickle is not None:
        amp, w_tickle = tickle
        if z1 is None:
            raise MissingZ1Error("tickle drive requires z1 for the force scale")
        a_tickle = ion.Q * amp / (ion.m * z1)

    nrec_max = nsteps // stride + 2
    out_t = np.empty(nrec_max)
    out_x = np.empty((nrec_max, 3))
    out_v = np.empty((nrec_max, 3))
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    qm_v = ion.Q * drive.V / ion.m
    K = kernels()

    if isinstance(field, AnalyticField):
        if escape_radius is None:
            escape_radius = 0.5 * field.r1
        nrec, esc = K.integrate_rf_analytic(
            x0, v0, qm_v, field.r1, field.alpha, ion.drag_gamma, drive.Omega,
            az_static, a_tickle, w_tickle, dt, nsteps, stride,
            escape_radius ** 2, out_t, out_x, out_v)
    elif isinstance(field, FieldWindow):
        guard = 2.0
        inv_h = 1.0 / field.spacing
        nrec, esc = K.integrate_rf_bspline(
            x0, v0, qm_v, field.cex, field.cey, field.cez, field.origin, inv_h,
            ion.drag_gamma, drive.Omega, az_static, a_tickle, w_tickle, dt,
            nsteps, stride, guard, out_t, out_x, out_v)
    else:
        raise TypeError(f"unsupported force model {type(field).__name__}")

    escaped = esc >= 0
    if escaped:
        log.info("trajectory escaped at t = %.3g s (step %d)", esc * dt, esc)
    return Trajectory(t=out_t[:nrec].copy(), pos=out_x[:nrec].copy(),
                      vel=out_v[:nrec].copy(), ion=ion, drive=drive,
                      escaped=escaped,
                      escape_time=(esc * dt if escaped else None))


def extract_secular_frequency(traj: Trajectory, axis) -> float:
    """Dominant sub-drive spectral peak of one coordinate, rad/s.

    Hann-windowed FFT with parabolic peak interpolation; bins at and above
    half the drive frequency are rejected (micromotion sidebands).
    """
    x = traj.axis(axis)
    n = len(x)
    if n < 16:
        raise NoPeakError("trajectory too short for spectral analysis")
    dt_s = traj.t[1] - traj.t[0]
    sig = x - np.mean(x)
    rms = float(np.sqrt(np.mean(sig ** 2)))
    if rms < 1e-18:
        raise NoPeakError("coordinate carries no oscillation (cold ion at the null)")
    win = np.hanning(n)
    spec = np.abs(np.fft.rfft(sig * win))
    freqs = np.fft.rfftfreq(n, dt_s) * 2.0 * math.pi
    valid = freqs < 0.5 * traj.drive.Omega
    valid[:2] = False
    if not valid.any():
        raise NoPeakError("no spectral bins below half the drive frequency")
    spec_v = np.where(valid, spec, 0.0)
    k = int(np.argmax(spec_v))
    if spec_v[k] <= 0 or spec_v[k] < 10.0 * np.median(spec[valid]):
        raise NoPeakError("spectrum is flat below the drive frequency")
    if 0 < k < len(spec) - 1 and spec[k - 1] > 0 and spec[k + 1] > 0:
        la, lb, lc = np.log(spec[k - 1]), np.log(spec[k]), np.log(spec[k + 1])
        denom = la - 2.0 * lb + lc
        delta = 0.5 * (la - lc) / denom if denom != 0 else 0.0
        delta = float(np.clip(delta, -0.5, 0.5))
    else:
        delta = 0.0
    omega = (k + delta) * (freqs[1] - freqs[0])
    n_periods = traj.t[-1] * omega / (2.0 * math.pi)
    if n_periods < 20.0:
        raise NoPeakError(
            f"record spans only {n_periods:.1f} secular periods (need >= 20)")
    return float(omega)


def secular_amplitude_drift(traj: Trajectory, axis, n_chunks: int = 10) -> float:
    """Relative spread of per-chunk RMS amplitude (energy-conservation probe)."""
    x = traj.axis(axis)
    chunks = np.array_split(x - np.mean(x), n_chunks)
    amps = np.array([np.sqrt(2.0) * np.sqrt(np.mean(c ** 2)) for c in chunks])
    return float((amps.max() - amps.min()) / np.mean(amps))


def stability_map(a_values, q_values, drag_gamma_over_omega: float = 0.0):
    """Rows of (a, q, stable, floquet_exponent) over a parameter grid."""
    rows = []
    for a in a_values:
        for q in q_values:
            pt = is_stable(a, q, drag_gamma_over_omega)
            rows.append((pt.a, pt.q, pt.stable, pt.floquet_exponent))
    return rows


def trajectory_to_csv(traj: Trajectory, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "x_m", "y_m", "z_m", "vx_m_s", "vy_m_s", "vz_m_s"])
        for i in range(len(traj.t)):
            w.writerow([f"{traj.t[i]:.9e}",
                        *(f"{traj.pos[i, ax]:.9e}" for ax in range(3)),
                        *(f"{traj.vel[i, ax]:.9e}" for ax in range(3))])
