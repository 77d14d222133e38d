"""Ponderomotive pseudopotential: wells, depth, and multipole-constant fits.

The normalized solved field enters through its negative gradient; physical
drive voltage, ion charge and mass are applied here. Pseudopotential grids
are stored in eV (depth thresholds read naturally); the analytic model
returns joules like every other closed-form energy in the package.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares

from .constants import ELEMENTARY_CHARGE
from .errors import (ConvergenceError, FitRankError, LatticeTrapError,
                     MissingZ1Error, NoMinimumError, UnboundedWellError)
from .fieldsolver import ScalarField3D, VectorField3D, gradient
from .params import DriveConfig, IonSpecies

log = logging.getLogger(__name__)

DEPTH_REL_TOL = 1e-3          # bisection resolution relative to the well depth
FIT_RADIUS_FRACTION = 0.25    # default fit cylinder: radius/half-height = 0.25 * pitch


@dataclass
class TrapSite:
    """Per-well derived quantities for one lattice site.

    The two printed near-null expansions (potential vs pseudopotential)
    disagree on the sign of the cubic shape factor; ``alpha`` follows the
    pseudopotential-expansion convention (the one the reported fit constants
    and the biased-frequency formula use), ``alpha_potential`` is the same
    shape expressed in the potential expansion (= -alpha).
    """

    site_index: tuple[int, int]
    minimum_position: tuple[float, float, float]
    r1: float
    alpha: float
    alpha_potential: float = 0.0
    z1: float | None = None
    depth_ev: float | None = None
    fit_residual: float = 0.0
    r1_err: float = 0.0
    alpha_err: float = 0.0
    z0_err: float = 0.0
    z1_err: float | None = None

    def __post_init__(self):
        if self.r1 <= 0:
            raise LatticeTrapError(f"fitted r1 must be positive, got {self.r1}")
        if self.depth_ev is not None and self.depth_ev < 0:
            raise LatticeTrapError(f"trap depth must be >= 0, got {self.depth_ev}")

    def as_record(self) -> dict:
        return {
            "site": list(self.site_index),
            "minimum_position_m": list(self.minimum_position),
            "r1_m": self.r1,
            "r1_err_m": self.r1_err,
            "alpha": self.alpha,
            "alpha_potential": self.alpha_potential,
            "alpha_err": self.alpha_err,
            "z0_err_m": self.z0_err,
            "z1_m": self.z1,
            "z1_err_m": self.z1_err,
            "depth_eV": self.depth_ev,
            "fit_residual": self.fit_residual,
        }


@dataclass
class PseudoField:
    """Pseudopotential samples in eV for one ion species and drive."""

    field: ScalarField3D
    ion: IonSpecies
    drive: DriveConfig

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def pseudopotential(grad: VectorField3D, ion: IonSpecies, drive: DriveConfig,
                    z0: float | None = None, z1: float | None = None) -> PseudoField:
    """Q^2 V^2 |E_norm|^2 / (4 m Omega^2), in eV, plus the top-plate bias term.

    A nonzero top-plate bias U adds the static energy Q U (z - z0)/z1 and
    therefore needs the fitted z0 and z1.
    """
    scale = (ion.Q * drive.V) ** 2 / (4.0 * ion.m * drive.Omega ** 2)
    psi = scale * grad.magnitude_squared()
    if drive.U != 0.0:
        if z0 is None or z1 is None:
            raise MissingZ1Error("top-plate bias U != 0 requires fitted z0 and z1")
        z = grad.origin[2] + grad.spacing[2] * np.arange(grad.extents[2])
        psi = psi + ion.Q * drive.U * (z - z0)[None, None, :] / z1
    psi /= ELEMENTARY_CHARGE
    fld = ScalarField3D(origin=grad.origin, spacing=grad.spacing, values=psi,
                        free=grad.free, metadata=dict(grad.metadata))
    return PseudoField(field=fld, ion=ion, drive=drive)


def pseudopotential_analytic(r, z, ion: IonSpecies, drive: DriveConfig,
                             r1: float, alpha: float):
    """Closed-form pseudopotential of the multipole model, in joules.

    The z term is expanded to a polynomial so the r^2/z factor never
    divides by zero. Prefactor uses Q^2 (dimensionally consistent with the
    |grad phi|^2 form; see the axial-curvature consistency test).
    """
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    k = (ion.Q * drive.V) ** 2 / (ion.m * drive.Omega ** 2 * r1 ** 4)
    radial = r * r * (1.0 + 3.0 * alpha * z / r1) ** 2
    axial_root = z + 1.5 * alpha * z * z / r1 - 0.75 * alpha * r * r / r1
    out = k * (radial + 4.0 * axial_root ** 2)
    return out if out.ndim else float(out)


def _quadratic_refine(values, node, spacing, free):
    """Sub-grid minimum by a Newton step on the local quadratic model."""
    i, j, k = node
    g = np.empty(3)
    H = np.zeros((3, 3))
    v0 = values[i, j, k]
    idx = np.array(node)
    for ax, h in enumerate(spacing):
        up = idx.copy()
        dn = idx.copy()
        up[ax] += 1
        dn[ax] -= 1
        vp = values[tuple(up)]
        vm = values[tuple(dn)]
        g[ax] = (vp - vm) / (2.0 * h)
        H[ax, ax] = (vp - 2.0 * v0 + vm) / (h * h)
    for a in range(3):
        for b in range(a + 1, 3):
            pp = idx.copy(); pp[a] += 1; pp[b] += 1
            pm = idx.copy(); pm[a] += 1; pm[b] -= 1
            mp = idx.copy(); mp[a] -= 1; mp[b] += 1
            mm = idx.copy(); mm[a] -= 1; mm[b] -= 1
            H[a, b] = H[b, a] = (values[tuple(pp)] - values[tuple(pm)]
                                 - values[tuple(mp)] + values[tuple(mm)]) \
                / (4.0 * spacing[a] * spacing[b])
    try:
        delta = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        delta = np.zeros(3)
    delta = np.clip(delta, -np.asarray(spacing), np.asarray(spacing))
    return delta


def _site_stack(field: ScalarField3D):
    stack = field.metadata.get("stack")
    if stack is None:
        raise LatticeTrapError("field carries no electrode stack metadata")
    return stack


def find_site_minimum(psi: PseudoField, site: tuple[int, int]) -> np.ndarray:
    """Sub-grid pseudopotential minimum above one lattice hole."""
    return _find_minimum_on_field(psi.field, site)


def _find_minimum_on_field(fld: ScalarField3D, site: tuple[int, int]) -> np.ndarray:
    stack = _site_stack(fld)
    cx, cy = stack.site_center(site)
    hx, hy, hz = fld.spacing
    ix = int(round((cx - fld.origin[0]) / hx))
    iy = int(round((cy - fld.origin[1]) / hy))
    nz = fld.extents[2]
    k_lo = int(np.ceil((stack.rf_plate_top - fld.origin[2]) / hz)) + 1
    k_hi = nz - 2
    if k_lo >= k_hi:
        raise NoMinimumError("no grid nodes above the rf plate")
    col = fld.values[ix, iy, k_lo:k_hi]
    free_col = np.ones_like(col, dtype=bool) if fld.free is None \
        else fld.free[ix, iy, k_lo:k_hi] != 0
    if not free_col.any():
        raise NoMinimumError(f"site {site}: no free nodes above the hole")
    col = np.where(free_col, col, np.inf)
    krel = int(np.argmin(col))
    if krel == 0 or krel == len(col) - 1:
        raise NoMinimumError(
            f"site {site}: pseudopotential is monotonic above the hole (unconfined)")
    node = np.array([ix, iy, k_lo + krel])
    pos = fld.origin + node * np.array(fld.spacing)
    for _ in range(4):
        delta = _quadratic_refine(fld.values, tuple(node), fld.spacing, fld.free)
        pos = fld.origin + node * np.array(fld.spacing) + delta
        step = np.rint(delta / np.array(fld.spacing)).astype(int)
        if not step.any():
            break
        nxt = node + step
        if (nxt < 1).any() or (nxt >= np.array(fld.extents) - 1).any():
            break
        node = nxt
    return np.asarray(pos, dtype=float)


def trap_depth(psi: PseudoField, minimum) -> float:
    """Escape barrier above the minimum, eV, by bisection on level-set
    connectivity to the domain boundary (resolution 1e-3 of the depth)."""
    fld = psi.field
    free = np.ones(fld.extents, dtype=bool) if fld.free is None else fld.free != 0
    vals = fld.values
    node = tuple(int(round((minimum[ax] - fld.origin[ax]) / fld.spacing[ax]))
                 for ax in range(3))
    if not free[node]:
        raise NoMinimumError("minimum node is not a free node")
    psi_min = float(vals[node])

    escape = np.zeros(fld.extents, dtype=bool)
    escape[:2, :, :] = escape[-2:, :, :] = True
    escape[:, :2, :] = escape[:, -2:, :] = True
    escape[:, :, :2] = escape[:, :, -2:] = True
    escape &= free
    if not escape.any():
        raise LatticeTrapError("no free nodes adjacent to the domain boundary")

    structure = ndimage.generate_binary_structure(3, 1)

    def connected(level):
        region = free & (vals <= level)
        labels, _ = ndimage.label(region, structure=structure)
        lab = labels[node]
        return lab != 0 and bool(np.any(labels[escape] == lab))

    finite_vals = vals[free]
    hi = float(finite_vals.max())
    lo = psi_min
    span = hi - psi_min
    if span <= 0:
        raise UnboundedWellError("pseudopotential is flat; no barrier exists")
    if connected(psi_min + 1e-12 * span):
        raise UnboundedWellError("minimum connects to the boundary at its own level")
    if not connected(hi):
        raise LatticeTrapError("escape region unreachable even at the global maximum")
    while hi - lo > DEPTH_REL_TOL * max(lo - psi_min, 1e-30 * span):
        mid = 0.5 * (lo + hi)
        if connected(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi) - psi_min


def _multipole_model(params, rho2, z):
    r1, alpha, z0, c0 = params
    zeta = z - z0
    return c0 + (rho2 - 2.0 * zeta ** 2) / r1 ** 2 \
        + alpha * (2.0 * zeta ** 3 - 3.0 * zeta * rho2) / r1 ** 3


def _multipole_jacobian(params, rho2, z):
    r1, alpha, z0, _ = params
    zeta = z - z0
    quad = rho2 - 2.0 * zeta ** 2
    cub = 2.0 * zeta ** 3 - 3.0 * zeta * rho2
    d_r1 = -2.0 * quad / r1 ** 3 - 3.0 * alpha * cub / r1 ** 4
    d_alpha = cub / r1 ** 3
    d_zeta = -4.0 * zeta / r1 ** 2 + alpha * (6.0 * zeta ** 2 - 3.0 * rho2) / r1 ** 3
    d_z0 = -d_zeta
    d_c0 = np.ones_like(z)
    return np.stack([d_r1, d_alpha, d_z0, d_c0], axis=1)


def fit_multipole(phi: ScalarField3D, site: tuple[int, int],
                  fit_radius: float | None = None,
                  null_hint: float | None = None) -> TrapSite:
    """Levenberg-Marquardt fit of the multipole model to the solved potential.

    Fits (r1, alpha, z0) plus a constant offset (the solved potential at a
    lattice null is not zero) over a cylinder around the field null.
    Parameter uncertainties come from the fit covariance. ``null_hint``
    (axial null height, m) skips the gradient-based null search.
    """
    stack = _site_stack(phi)
    if fit_radius is None:
        fit_radius = FIT_RADIUS_FRACTION * stack.hole_pitch
    cx, cy = stack.site_center(site)

    if null_hint is None:
        grad = gradient(phi)
        e2_field = ScalarField3D(origin=phi.origin, spacing=phi.spacing,
                                 values=grad.magnitude_squared(), free=phi.free,
                                 metadata=dict(phi.metadata))
        null = _find_minimum_on_field(e2_field, site)
        z0_init = float(null[2])
    else:
        z0_init = float(null_hint)

    xs = phi.axis_coords(0)
    ys = phi.axis_coords(1)
    zs = phi.axis_coords(2)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    rho2 = (X - cx) ** 2 + (Y - cy) ** 2
    sel = (rho2 <= fit_radius ** 2) & (np.abs(Z - z0_init) <= fit_radius)
    if phi.free is not None:
        sel &= phi.free != 0

    n_sel = int(np.count_nonzero(sel))
    axis_counts = [len(np.unique(np.round(c[sel] / phi.spacing[ax]).astype(int)))
                   for ax, c in ((0, X), (1, Y), (2, Z))]
    if n_sel < 50 or min(axis_counts) < 5:
        raise FitRankError(
            f"fit region degenerate: {n_sel} nodes, per-axis counts {axis_counts}")

    rho2_s = rho2[sel]
    z_s = Z[sel]
    phi_s = phi.values[sel]

    p0 = np.array([stack.hole_pitch, 0.0, z0_init, float(np.median(phi_s))])
    res = least_squares(
        lambda p: _multipole_model(p, rho2_s, z_s) - phi_s, p0,
        jac=lambda p: _multipole_jacobian(p, rho2_s, z_s), method="lm",
        xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=2000)
    if not res.success:
        raise ConvergenceError(f"multipole fit did not converge: {res.message}",
                               iterations=res.nfev)
    r1, alpha_pot, z0, _c0 = res.x
    r1 = abs(r1)  # model is even in r1's sign

    dof = max(len(phi_s) - 4, 1)
    s2 = 2.0 * res.cost / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2
        errs = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        raise FitRankError("singular normal equations in multipole fit") from None

    spread = float(np.sqrt(np.mean((phi_s - phi_s.mean()) ** 2)))
    fit_residual = float(np.sqrt(np.mean(res.fun ** 2)) / spread) if spread > 0 else 0.0
    log.info("site %s multipole fit: r1 = %.4g m, alpha = %.3g, residual %.2e",
             site, r1, -alpha_pot, fit_residual)
    return TrapSite(site_index=tuple(site),
                    minimum_position=(cx, cy, float(z0)),
                    r1=float(r1), alpha=float(-alpha_pot),
                    alpha_potential=float(alpha_pot),
                    fit_residual=fit_residual,
                    r1_err=float(errs[0]), alpha_err=float(errs[1]),
                    z0_err=float(errs[2]))


def fit_z1(phi_bias: ScalarField3D, site: tuple[int, int], z0: float,
           fit_halfheight: float | None = None) -> tuple[float, float]:
    """Top-plate geometric factor: inverse on-axis slope of the unit-bias
    potential near the null. Returns (z1, standard error)."""
    stack = _site_stack(phi_bias)
    if fit_halfheight is None:
        fit_halfheight = FIT_RADIUS_FRACTION * stack.hole_pitch
    cx, cy = stack.site_center(site)
    hz = phi_bias.spacing[2]
    zs = phi_bias.axis_coords(2)
    sel = np.abs(zs - z0) <= fit_halfheight
    if np.count_nonzero(sel) < 5:
        raise FitRankError("too few on-axis nodes for the z1 slope fit")
    gx = (cx - phi_bias.origin[0]) / phi_bias.spacing[0]
    gy = (cy - phi_bias.origin[1]) / phi_bias.spacing[1]
    gz = (zs[sel] - phi_bias.origin[2]) / hz
    pts = np.stack([np.full(gz.shape, gx), np.full(gz.shape, gy), gz])
    vals = ndimage.map_coordinates(phi_bias.values, pts, order=3, mode="nearest")
    A = np.stack([zs[sel] - z0, np.ones(vals.shape)], axis=1)
    coef, res_ss, _, _ = np.linalg.lstsq(A, vals, rcond=None)
    slope = coef[0]
    if slope <= 0:
        raise FitRankError(f"non-positive bias slope {slope:g}; z1 undefined")
    n = len(vals)
    sigma2 = (res_ss[0] / (n - 2)) if (n > 2 and res_ss.size) else 0.0
    cov = np.linalg.inv(A.T @ A) * sigma2
    slope_err = float(np.sqrt(max(cov[0, 0], 0.0)))
    z1 = 1.0 / slope
    return float(z1), slope_err * z1 ** 2


_QUARTIC_EXPONENTS = np.array([(a, b, c)
                               for a in range(5) for b in range(5) for c in range(5)
                               if a + b + c <= 4], dtype=int)


def _local_quartic_fit(fld: ScalarField3D, center_node, radius_nodes=3.2):
    """LSQ quartic polynomial of the potential on a ball of free nodes."""
    h = np.asarray(fld.spacing)
    rad = int(np.ceil(radius_nodes))
    lo = np.maximum(np.array(center_node) - rad, 0)
    hi = np.minimum(np.array(center_node) + rad + 1, np.array(fld.extents))
    sl = tuple(slice(lo[ax], hi[ax]) for ax in range(3))
    idx = np.stack(np.meshgrid(*[np.arange(lo[a], hi[a]) for a in range(3)],
                               indexing="ij"), axis=-1).reshape(-1, 3)
    rel = (idx - np.array(center_node)) * h
    dist2 = np.sum((idx - np.array(center_node)) ** 2, axis=1)
    keep = dist2 <= radius_nodes ** 2
    if fld.free is not None:
        keep &= fld.free[sl].reshape(-1) != 0
    rel = rel[keep]
    vals = fld.values[sl].reshape(-1)[keep]
    if len(vals) < 2 * len(_QUARTIC_EXPONENTS):
        raise FitRankError(
            f"too few free nodes ({len(vals)}) for a local quartic potential fit")
    scale = radius_nodes * float(h[0])
    u = rel / scale
    A = np.prod(u[:, None, :] ** _QUARTIC_EXPONENTS[None, :, :], axis=2)
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    return coef, scale


def _poly_grad_hess(coef, scale, point):
    """Gradient and Hessian of the fitted quartic at a physical offset."""
    u = np.asarray(point) / scale
    E = _QUARTIC_EXPONENTS
    g = np.zeros(3)
    H = np.zeros((3, 3))
    for a in range(3):
        ea = E[:, a]
        mask = ea > 0
        Ed = E[mask].copy()
        Ed[:, a] -= 1
        terms = coef[mask] * ea[mask] * np.prod(u[None, :] ** Ed, axis=1)
        g[a] = terms.sum() / scale
        for b in range(3):
            eb = Ed[:, b]
            m2 = eb > 0
            Ed2 = Ed[m2].copy()
            Ed2[:, b] -= 1
            t2 = coef[mask][m2] * ea[mask][m2] * eb[m2] \
                * np.prod(u[None, :] ** Ed2, axis=1)
            H[a, b] = t2.sum() / scale ** 2
    return g, H


def curvature_frequencies(phi: ScalarField3D, minimum, ion: IonSpecies,
                          drive: DriveConfig) -> tuple[float, float]:
    """Secular frequencies from the solved potential's curvature at the null.

    Fits a local quartic polynomial to the (smooth) potential around the
    well, Newton-refines the field null on the fit, and converts the
    potential Hessian H to pseudopotential curvatures (2 s H^2 at a null).
    Unbiased drives only; returns (omega_r, omega_z) in rad/s.
    """
    if drive.U != 0.0:
        raise LatticeTrapError("curvature route is defined at the unbiased null")
    node = tuple(int(round((minimum[ax] - phi.origin[ax]) / phi.spacing[ax]))
                 for ax in range(3))
    coef, scale = _local_quartic_fit(phi, node)
    delta = np.asarray(minimum) - (np.asarray(phi.origin) + np.asarray(node) * np.asarray(phi.spacing))
    for _ in range(30):
        g, H = _poly_grad_hess(coef, scale, delta)
        step = np.linalg.solve(H, -g)
        delta = delta + step
        if np.linalg.norm(step) < 1e-15 * scale:
            break
    if np.linalg.norm(delta) > 1.5 * scale:
        raise NoMinimumError("null refinement left the local fit region")
    _, H = _poly_grad_hess(coef, scale, delta)
    s = (ion.Q * drive.V) ** 2 / (4.0 * ion.m * drive.Omega ** 2)
    psi_hess = 2.0 * s * (H @ H)
    evals, evecs = np.linalg.eigh(psi_hess)
    if np.any(evals <= 0):
        raise NoMinimumError("pseudopotential curvature is not positive definite")
    omegas = np.sqrt(evals / ion.m)
    z_idx = int(np.argmax(np.abs(evecs[2, :])))
    omega_z = float(omegas[z_idx])
    lateral = [omegas[i] for i in range(3) if i != z_idx]
    return float(0.5 * (lateral[0] + lateral[1])), omega_z
