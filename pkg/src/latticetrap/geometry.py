"""Layered lattice-trap electrode geometry and its rasterization.

The trap is a stack of three planar electrodes: a grounded plane at z = 0,
an rf plate with a square array of circular holes a gap above it, and an
optional grounded top plate. Electrode potentials are stored normalized
(rf electrode = 1) so one field solve serves every drive amplitude.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, GeometryError, MemoryEstimateError, ResolutionError

log = logging.getLogger(__name__)

DEFAULT_PLATE_THICKNESS = 1.0e-4   # rf mesh is thin; zero thickness complicates node classification
DEFAULT_MAX_NODES = 250_000_000

ID_FREE = 0
ID_RF = 1
ID_GROUND = 2
ID_TOP = 3
ID_BOUNDARY = 4

ELECTRODE_NAMES = {ID_RF: "rf", ID_GROUND: "ground", ID_TOP: "top", ID_BOUNDARY: "boundary"}

RF_PROBLEM = {"rf": 1.0, "ground": 0.0, "top": 0.0, "boundary": 0.0}
TOP_BIAS_PROBLEM = {"rf": 0.0, "ground": 0.0, "top": 1.0, "boundary": 0.0}

_GEOM_TOL = 1.0e-12  # absolute length tolerance for metal membership (m)


@dataclass(frozen=True)
class ElectrodeStack:
    """Parametric description of the layered lattice trap.

    All lengths in meters. ``top_plate_height`` is measured from the top
    surface of the rf plate; ``None`` means no top plate.
    """

    hole_diameter: float
    hole_pitch: float
    lattice_dims: tuple[int, int]
    rf_ground_gap: float
    top_plate_height: float | None = None
    plate_thickness: float | None = None
    lattice_kind: str = "square"

    @property
    def thickness(self) -> float:
        return self.plate_thickness if self.plate_thickness is not None else DEFAULT_PLATE_THICKNESS

    @property
    def rf_plate_top(self) -> float:
        """Height of the rf plate's top surface above the ground plane."""
        return self.rf_ground_gap + self.thickness

    @property
    def top_plate_z(self) -> float | None:
        return None if self.top_plate_height is None else self.rf_plate_top + self.top_plate_height

    def site_center(self, site: tuple[int, int]) -> tuple[float, float]:
        """Lateral (x, y) coordinates of a lattice site's hole center."""
        nx, ny = self.lattice_dims
        i, j = site
        if not (0 <= i < nx and 0 <= j < ny):
            raise GeometryError(f"site {site} outside lattice dims {self.lattice_dims}")
        return ((i - (nx - 1) / 2.0) * self.hole_pitch,
                (j - (ny - 1) / 2.0) * self.hole_pitch)

    def canonical_dict(self) -> dict:
        return {
            "hole_diameter": self.hole_diameter,
            "hole_pitch": self.hole_pitch,
            "lattice_dims": list(self.lattice_dims),
            "rf_ground_gap": self.rf_ground_gap,
            "top_plate_height": self.top_plate_height,
            "plate_thickness": self.thickness,
            "lattice_kind": self.lattice_kind,
        }


def build_lattice_stack(params: ElectrodeStack) -> ElectrodeStack:
    """Validate and normalize a stack description; rejects rather than clamps."""
    if params.lattice_kind != "square":
        raise GeometryError(f"unsupported lattice kind {params.lattice_kind!r} (only 'square')")
    for name in ("hole_diameter", "hole_pitch", "rf_ground_gap"):
        v = getattr(params, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise GeometryError(f"{name} must be a positive length, got {v!r}")
    if params.hole_diameter >= params.hole_pitch:
        raise GeometryError(
            f"holes overlap: diameter {params.hole_diameter} >= pitch {params.hole_pitch}")
    if params.top_plate_height is not None and params.top_plate_height <= 0:
        raise GeometryError("top plate height must be positive when present")
    if params.plate_thickness is not None and params.plate_thickness <= 0:
        raise GeometryError("plate thickness must be positive")
    dims = tuple(int(n) for n in params.lattice_dims)
    if len(dims) != 2 or dims[0] < 1 or dims[1] < 1:
        raise GeometryError(f"lattice dims must be a pair of integers >= 1, got {params.lattice_dims}")
    return replace(params, lattice_dims=dims,
                   plate_thickness=params.thickness)


@dataclass(frozen=True)
class BoundaryGrid:
    """Regular grid with per-node Dirichlet electrode membership.

    ``electrode_id`` is 0 for free nodes; nonzero ids map to named electrodes
    whose normalized potentials live in ``potentials``.
    """

    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]
    electrode_id: np.ndarray
    potentials: dict
    stack: ElectrodeStack
    geometry_hash: str

    @property
    def extents(self) -> tuple[int, int, int]:
        return self.electrode_id.shape

    @property
    def dirichlet_mask(self) -> np.ndarray:
        return self.electrode_id != ID_FREE

    @property
    def free_mask(self) -> np.ndarray:
        return (self.electrode_id == ID_FREE).astype(np.uint8)

    def dirichlet_values(self) -> np.ndarray:
        values = np.zeros(self.electrode_id.shape)
        for eid, name in ELECTRODE_NAMES.items():
            v = self.potentials.get(name, 0.0)
            if v != 0.0:
                values[self.electrode_id == eid] = v
        return values

    def with_potentials(self, potentials: dict) -> "BoundaryGrid":
        unknown = set(potentials) - set(ELECTRODE_NAMES.values())
        if unknown:
            raise GeometryError(f"unknown electrode names {sorted(unknown)}")
        merged = dict(self.potentials)
        merged.update(potentials)
        return replace(self, potentials=merged)

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.extents[axis]
        return self.origin[axis] + self.spacing[axis] * np.arange(n)

    def node_index_near(self, point) -> tuple[int, int, int]:
        idx = []
        for ax in range(3):
            i = int(round((point[ax] - self.origin[ax]) / self.spacing[ax]))
            idx.append(min(max(i, 0), self.extents[ax] - 1))
        return tuple(idx)


def geometry_hash(stack: ElectrodeStack, spacing: float, margin: float) -> str:
    payload = {"stack": stack.canonical_dict(), "spacing": spacing, "margin": margin}
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def rasterize(stack: ElectrodeStack, spacing: float, margin: float,
              max_nodes: int = DEFAULT_MAX_NODES) -> BoundaryGrid:
    """Sample the stack onto a regular grid of Dirichlet boundary conditions.

    ``spacing`` must resolve each hole with at least 8 nodes across.
    ``margin`` is the open-space clearance beyond the outermost hole centers;
    domain truncation faces are held at 0 V. Node membership is computed from
    the geometry alone, so refining the spacing never reclassifies a node.
    """
    stack = build_lattice_stack(stack)
    if spacing <= 0:
        raise ResolutionError(f"spacing must be positive, got {spacing}")
    if spacing > stack.hole_diameter / 8.0 + _GEOM_TOL:
        raise ResolutionError(
            f"spacing {spacing:g} m too coarse: need <= hole_diameter/8 = "
            f"{stack.hole_diameter / 8.0:g} m")

    d = stack.hole_pitch
    nx_sites, ny_sites = stack.lattice_dims
    cx_max = (nx_sites - 1) / 2.0 * d
    cy_max = (ny_sites - 1) / 2.0 * d
    plate_border = d  # rf metal extends one pitch beyond the outermost hole centers
    if margin < plate_border + 2.0 * spacing:
        raise GeometryError(
            f"margin {margin:g} m must exceed the rf plate border ({plate_border:g} m) "
            "by at least two node spacings")

    half_x = cx_max + margin
    half_y = cy_max + margin
    mx = int(round(half_x / spacing))
    my = int(round(half_y / spacing))
    nx = 2 * mx + 1
    ny = 2 * my + 1
    if stack.top_plate_z is not None:
        z_max = stack.top_plate_z
    else:
        z_max = stack.rf_plate_top + margin
    nz = int(math.ceil(z_max / spacing - 1e-9)) + 1

    n_total = nx * ny * nz
    if n_total > max_nodes:
        raise MemoryEstimateError(
            f"grid of {nx}x{ny}x{nz} = {n_total} nodes exceeds cap {max_nodes}")

    xs = (np.arange(nx) - mx) * spacing
    ys = (np.arange(ny) - my) * spacing
    zs = np.arange(nz) * spacing

    # nearest hole center (square lattice: rounding gives the true nearest site)
    def nearest_center(coords, n_sites):
        off = (n_sites - 1) / 2.0
        idx = np.clip(np.round(coords / d + off), 0, n_sites - 1)
        return (idx - off) * d

    dx = xs - nearest_center(xs, nx_sites)
    dy = ys - nearest_center(ys, ny_sites)
    r2_lat = dx[:, None] ** 2 + dy[None, :] ** 2
    hole_r2 = (stack.hole_diameter / 2.0) ** 2
    in_metal_lat = ((np.abs(xs)[:, None] <= cx_max + plate_border + _GEOM_TOL)
                    & (np.abs(ys)[None, :] <= cy_max + plate_border + _GEOM_TOL)
                    & (r2_lat >= hole_r2 * (1.0 - 1e-12)))

    in_rf_slab = (zs >= stack.rf_ground_gap - _GEOM_TOL) & (zs <= stack.rf_plate_top + _GEOM_TOL)

    ids = np.zeros((nx, ny, nz), dtype=np.uint8)
    ids[0, :, :] = ID_BOUNDARY
    ids[-1, :, :] = ID_BOUNDARY
    ids[:, 0, :] = ID_BOUNDARY
    ids[:, -1, :] = ID_BOUNDARY
    ids[:, :, -1] = ID_BOUNDARY
    ids[:, :, 0] = ID_GROUND                      # ground plane: half-space z <= 0
    if stack.top_plate_z is not None:             # top plate: half-space z >= top_plate_z
        in_top = zs >= stack.top_plate_z - _GEOM_TOL
        ids[:, :, in_top] = ID_TOP
    rf_mask = in_metal_lat[:, :, None] & in_rf_slab[None, None, :]
    ids[rf_mask] = ID_RF

    n_rf = int(np.count_nonzero(ids == ID_RF))
    if n_rf == 0:
        raise ResolutionError(
            "rf plate slab contains no grid nodes; reduce spacing below the plate thickness")
    if stack.top_plate_z is not None and not np.any(ids == ID_TOP):
        raise ResolutionError("top plate plane contains no grid nodes")

    n_dirichlet = int(np.count_nonzero(ids))
    log.info("rasterized %dx%dx%d grid (%d nodes, %.1f%% Dirichlet, %d rf nodes)",
             nx, ny, nz, n_total, 100.0 * n_dirichlet / n_total, n_rf)

    return BoundaryGrid(
        origin=(-mx * spacing, -my * spacing, 0.0),
        spacing=(spacing, spacing, spacing),
        electrode_id=ids,
        potentials=dict(RF_PROBLEM),
        stack=stack,
        geometry_hash=geometry_hash(stack, spacing, margin),
    )


# ---------------------------------------------------------------------------
# TOML geometry config (all lengths in meters; *_mm keys accepted as well)

def _length_key(section: dict, base: str, default=None, required=True):
    if f"{base}_m" in section:
        return float(section[f"{base}_m"])
    if f"{base}_mm" in section:
        return float(section[f"{base}_mm"]) * 1e-3
    if not required or default is not None:
        return default
    raise ConfigError(f"geometry config missing '{base}_m' (or '{base}_mm')")


def stack_from_mapping(section: dict) -> ElectrodeStack:
    """Build a validated ElectrodeStack from a parsed [geometry] table."""
    dims = section.get("lattice_dims", None)
    if dims is None:
        raise ConfigError("geometry config missing 'lattice_dims'")
    stack = ElectrodeStack(
        hole_diameter=_length_key(section, "hole_diameter"),
        hole_pitch=_length_key(section, "hole_pitch"),
        lattice_dims=tuple(int(v) for v in dims),
        rf_ground_gap=_length_key(section, "rf_ground_gap"),
        top_plate_height=_length_key(section, "top_plate_height", required=False),
        plate_thickness=_length_key(section, "plate_thickness", required=False),
        lattice_kind=section.get("lattice_kind", "square"),
    )
    return build_lattice_stack(stack)
