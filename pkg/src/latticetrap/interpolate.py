"""Tricubic B-spline interpolation of solved fields.

Cubic spline interpolation keeps the force continuous through second
derivatives, which the symplectic trajectory integrator needs. Coefficients
are prefiltered once (scipy); evaluation runs through the kernel backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .backend import kernels
from .errors import LatticeTrapError
from .fieldsolver import ScalarField3D, VectorField3D


def _window_slices(origin, spacing, extents, center, halfwidth):
    slices = []
    for ax in range(3):
        lo = int(np.floor((center[ax] - halfwidth - origin[ax]) / spacing[ax])) - 2
        hi = int(np.ceil((center[ax] + halfwidth - origin[ax]) / spacing[ax])) + 3
        lo = max(lo, 0)
        hi = min(hi, extents[ax])
        if hi - lo < 8:
            raise LatticeTrapError("interpolation window too small (need >= 8 nodes/axis)")
        slices.append(slice(lo, hi))
    return tuple(slices)


@dataclass
class TricubicInterpolant:
    """C2-continuous interpolant of one scalar grid."""

    coef: np.ndarray
    origin: np.ndarray
    spacing: np.ndarray

    @classmethod
    def from_array(cls, values, origin, spacing):
        coef = ndimage.spline_filter(np.ascontiguousarray(values), order=3,
                                     mode="mirror", output=np.float64)
        return cls(coef=coef, origin=np.asarray(origin, dtype=float),
                   spacing=np.asarray(spacing, dtype=float))

    @classmethod
    def from_field(cls, field: ScalarField3D, center=None, halfwidth=None):
        """Interpolant of the whole grid, or of a window around ``center``."""
        if center is None:
            return cls.from_array(field.values, field.origin, field.spacing)
        sl = _window_slices(field.origin, field.spacing, field.extents, center, halfwidth)
        origin = [field.origin[ax] + sl[ax].start * field.spacing[ax] for ax in range(3)]
        return cls.from_array(field.values[sl], origin, field.spacing)

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = (pts - self.origin) / self.spacing
        out = kernels().bspline_eval3(self.coef, np.ascontiguousarray(g[:, 0]),
                                      np.ascontiguousarray(g[:, 1]),
                                      np.ascontiguousarray(g[:, 2]))
        return out if len(out) > 1 else float(out[0])


@dataclass
class FieldWindow:
    """Windowed B-spline coefficients of the three E-field components.

    This is the force-model payload for trajectory integration in a solved
    field: normalized E components around one trap site.
    """

    cex: np.ndarray
    cey: np.ndarray
    cez: np.ndarray
    origin: np.ndarray
    spacing: np.ndarray

    @classmethod
    def from_vector_field(cls, grad: VectorField3D, center, halfwidth):
        sl = _window_slices(grad.origin, grad.spacing, grad.extents, center, halfwidth)
        origin = np.array([grad.origin[ax] + sl[ax].start * grad.spacing[ax]
                           for ax in range(3)])

        def prep(a):
            return ndimage.spline_filter(np.ascontiguousarray(a[sl]), order=3,
                                         mode="mirror", output=np.float64)

        return cls(cex=prep(grad.ex), cey=prep(grad.ey), cez=prep(grad.ez),
                   origin=origin, spacing=np.asarray(grad.spacing, dtype=float))

    def e_norm(self, points):
        """Normalized E components at physical points, shape (n, 3)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = (pts - self.origin) / self.spacing
        K = kernels()
        gx = np.ascontiguousarray(g[:, 0])
        gy = np.ascontiguousarray(g[:, 1])
        gz = np.ascontiguousarray(g[:, 2])
        return np.stack([K.bspline_eval3(self.cex, gx, gy, gz),
                         K.bspline_eval3(self.cey, gx, gy, gz),
                         K.bspline_eval3(self.cez, gx, gy, gz)], axis=1)
