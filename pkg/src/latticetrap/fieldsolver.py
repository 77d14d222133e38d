"""Electrostatic Laplace solver on the rasterized boundary grid.

Geometric multigrid (V-cycles, red-black Gauss-Seidel smoothing) with a
plain SOR path for small grids. The solve is normalized: Dirichlet values
come straight from the BoundaryGrid, so the result scales linearly with
the applied electrode voltages.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .backend import kernels
from .errors import ConvergenceError, LatticeTrapError
from .geometry import BoundaryGrid

log = logging.getLogger(__name__)

SOR_MAX_EXTENT = 33          # below this, plain SOR beats the V-cycle overhead
COARSEST_EXTENT = 5
PRE_SMOOTH = 2
POST_SMOOTH = 2


@dataclass
class ScalarField3D:
    """Potential samples on a regular grid (x, y, z node order)."""

    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]
    values: np.ndarray
    free: np.ndarray | None = None          # 1 = solved node, 0 = Dirichlet
    metadata: dict = field(default_factory=dict)

    @property
    def extents(self) -> tuple[int, int, int]:
        return self.values.shape

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.extents[axis])

    def grid_coords(self, point) -> tuple[float, float, float]:
        return tuple((point[ax] - self.origin[ax]) / self.spacing[ax] for ax in range(3))


@dataclass
class VectorField3D:
    """Negative gradient of a ScalarField3D (the E field for unit drive)."""

    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]
    ex: np.ndarray
    ey: np.ndarray
    ez: np.ndarray
    free: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def extents(self) -> tuple[int, int, int]:
        return self.ex.shape

    def magnitude_squared(self) -> np.ndarray:
        return self.ex ** 2 + self.ey ** 2 + self.ez ** 2


class _Level:
    __slots__ = ("free", "h2", "u", "f", "r")

    def __init__(self, free, h):
        self.free = free
        self.h2 = h * h
        self.u = np.zeros(free.shape)
        self.f = np.zeros(free.shape)
        self.r = np.zeros(free.shape)


def _coarsen_free(free: np.ndarray) -> np.ndarray:
    """Conservative coarse mask: coarse node is free only if its whole fine
    3x3x3 neighbourhood is free (keeps thin plates alive on coarse grids)."""
    fmin = ndimage.minimum_filter(free, size=3, mode="nearest")
    return np.ascontiguousarray(fmin[::2, ::2, ::2])


def _build_hierarchy(free, h):
    levels = [_Level(free, h)]
    while True:
        cur = levels[-1].free
        if min(cur.shape) <= COARSEST_EXTENT or len(levels) >= 12:
            break
        coarse = _coarsen_free(cur)
        if not coarse.any():
            break
        levels.append(_Level(coarse, h * 2 ** len(levels)))
    return levels


def _smooth(K, lvl, sweeps, omega=1.0):
    for _ in range(sweeps):
        K.gs_color(lvl.u, lvl.f, lvl.free, lvl.h2, 0, omega)
        K.gs_color(lvl.u, lvl.f, lvl.free, lvl.h2, 1, omega)


def _v_cycle(K, levels, li):
    lvl = levels[li]
    if li == len(levels) - 1:
        _smooth(K, lvl, 8 * max(lvl.free.shape))
        return
    _smooth(K, lvl, PRE_SMOOTH)
    K.residual(lvl.u, lvl.f, lvl.free, lvl.h2, lvl.r)
    nxt = levels[li + 1]
    K.restrict_full_weight(lvl.r, nxt.f)
    nxt.f *= nxt.free
    nxt.u[...] = 0.0
    _v_cycle(K, levels, li + 1)
    K.prolong_add(nxt.u, lvl.u, lvl.free)
    _smooth(K, lvl, POST_SMOOTH)


def solve_laplace(grid: BoundaryGrid, tol: float = 1e-8,
                  max_iter: int = 200) -> ScalarField3D:
    """Solve nabla^2 phi = 0 with the grid's Dirichlet data.

    Convergence metric: the largest per-node Jacobi update (h^2/6 times the
    discrete Laplacian) over free nodes, relative to the largest Dirichlet
    magnitude. Raises ConvergenceError (with the achieved residual attached)
    if ``max_iter`` cycles/sweeps do not reach ``tol``.
    """
    K = kernels()
    ids = grid.electrode_id
    nz = ids.shape[2]
    if not ids[:, :, 0].any() or not ids[:, :, nz - 1].any():
        raise LatticeTrapError("grid must carry Dirichlet nodes at both z extremes")

    free = grid.free_mask
    values = grid.dirichlet_values()
    vnorm = float(np.max(np.abs(values)))
    if vnorm == 0.0:
        vnorm = 1.0
    hx, hy, hz = grid.spacing
    if not (np.isclose(hx, hy) and np.isclose(hx, hz)):
        raise LatticeTrapError("solver requires isotropic node spacing")
    h = float(hx)

    use_sor = max(ids.shape) < SOR_MAX_EXTENT
    levels = _build_hierarchy(free, h) if not use_sor else [_Level(free, h)]
    top = levels[0]
    top.u[...] = values
    scale = top.h2 / 6.0 / vnorm

    history = []
    rmax = K.residual(top.u, top.f, top.free, top.h2, top.r) * scale
    t0 = time.perf_counter()
    it = 0
    if use_sor:
        omega = 2.0 / (1.0 + np.sin(np.pi / max(ids.shape)))
        while rmax > tol and it < max_iter:
            _smooth(K, top, 1, omega)
            rmax = K.residual(top.u, top.f, top.free, top.h2, top.r) * scale
            history.append(rmax)
            it += 1
        method = "sor"
    else:
        while rmax > tol and it < max_iter:
            _v_cycle(K, levels, 0)
            rmax = K.residual(top.u, top.f, top.free, top.h2, top.r) * scale
            history.append(rmax)
            it += 1
            log.debug("v-cycle %d: residual %.3e", it, rmax)
        method = "multigrid"

    elapsed = time.perf_counter() - t0
    meta = {
        "tol": tol,
        "residual": rmax,
        "iterations": it,
        "residual_history": history,
        "method": method,
        "solve_seconds": elapsed,
        "geometry_hash": grid.geometry_hash,
        "potentials": dict(grid.potentials),
        "stack": grid.stack,
    }
    if rmax > tol:
        raise ConvergenceError(
            f"{method} did not reach tol {tol:g} after {it} iterations "
            f"(residual {rmax:.3e})", residual=rmax, iterations=it)
    log.info("%s converged to %.2e in %d iterations (%.2f s)", method, rmax, it, elapsed)
    return ScalarField3D(origin=grid.origin, spacing=grid.spacing,
                         values=top.u, free=free, metadata=meta)


def gradient(phi: ScalarField3D) -> VectorField3D:
    """E = -grad(phi): central differences interior, one-sided at edges."""
    if min(phi.extents) < 3:
        raise LatticeTrapError("gradient needs at least 3 nodes per axis")
    gx, gy, gz = np.gradient(phi.values, *phi.spacing)
    return VectorField3D(origin=phi.origin, spacing=phi.spacing,
                         ex=-gx, ey=-gy, ez=-gz, free=phi.free,
                         metadata=dict(phi.metadata))


def multipole_potential(r, z, V, r1, alpha):
    """Near-null potential model: V (r^2 - 2 z^2)/r1^2 + alpha V (2 z^3 - 3 z r^2)/r1^3."""
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    quad = (r * r - 2.0 * z * z) / (r1 * r1)
    cub = (2.0 * z ** 3 - 3.0 * z * r * r) / (r1 ** 3)
    out = V * quad + alpha * V * cub
    return out if out.ndim else float(out)


def sample_multipole_field(r1, alpha, V, extent, n, z_center=0.0) -> ScalarField3D:
    """Sample the multipole model on a cube grid (testing/synthetic fields)."""
    h = 2.0 * extent / (n - 1)
    xs = np.linspace(-extent, extent, n)
    X, Y, Z = np.meshgrid(xs, xs, xs + z_center, indexing="ij")
    R = np.sqrt(X ** 2 + Y ** 2)
    vals = multipole_potential(R, Z - z_center, V, r1, alpha)
    return ScalarField3D(origin=(-extent, -extent, z_center - extent),
                         spacing=(h, h, h), values=vals,
                         free=np.ones_like(vals, dtype=np.uint8))
