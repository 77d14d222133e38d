"""Field-file formats.

Native format: one line of JSON (origin, spacing, extents, units, solver
tolerance and provenance) terminated by a newline, followed by the raw
little-endian float64 samples in x-fastest order. A VTK legacy
structured-points writer serves external visualization tools.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import LatticeTrapError
from .fieldsolver import ScalarField3D

MAGIC = "latticetrap-field"
FORMAT_VERSION = 1


def save_field(field: ScalarField3D, path, problem: str = "rf") -> None:
    meta = field.metadata
    header = {
        "magic": MAGIC,
        "version": FORMAT_VERSION,
        "problem": problem,
        "origin_m": list(field.origin),
        "spacing_m": list(field.spacing),
        "extents": list(field.extents),
        "units": "V (normalized, rf electrode = 1)",
        "tol": meta.get("tol"),
        "residual": meta.get("residual"),
        "iterations": meta.get("iterations"),
        "geometry_hash": meta.get("geometry_hash"),
        "potentials": meta.get("potentials"),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(field.values.ravel(order="F").astype("<f8").tobytes())


def load_field(path) -> ScalarField3D:
    """Read a native field file; free mask and stack metadata are not part
    of the format and must be reattached from the geometry config."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise LatticeTrapError(f"{path}: not a latticetrap field file") from exc
        if header.get("magic") != MAGIC:
            raise LatticeTrapError(f"{path}: bad magic {header.get('magic')!r}")
        if header.get("version") != FORMAT_VERSION:
            raise LatticeTrapError(f"{path}: unsupported version {header.get('version')}")
        extents = tuple(header["extents"])
        data = np.frombuffer(fh.read(), dtype="<f8")
    n = extents[0] * extents[1] * extents[2]
    if data.size != n:
        raise LatticeTrapError(
            f"{path}: payload has {data.size} samples, header says {n}")
    values = data.reshape(extents, order="F").copy()
    meta = {k: header.get(k) for k in
            ("tol", "residual", "iterations", "geometry_hash", "potentials", "problem")}
    return ScalarField3D(origin=tuple(header["origin_m"]),
                         spacing=tuple(header["spacing_m"]),
                         values=values, metadata=meta)


def export_vtk(field: ScalarField3D, path, name: str = "potential") -> None:
    """VTK legacy structured-points (ASCII) export."""
    nx, ny, nz = field.extents
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("latticetrap normalized potential\n")
        fh.write("ASCII\n")
        fh.write("DATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {nx} {ny} {nz}\n")
        fh.write(f"ORIGIN {field.origin[0]:.9e} {field.origin[1]:.9e} {field.origin[2]:.9e}\n")
        fh.write(f"SPACING {field.spacing[0]:.9e} {field.spacing[1]:.9e} {field.spacing[2]:.9e}\n")
        fh.write(f"POINT_DATA {nx * ny * nz}\n")
        fh.write(f"SCALARS {name} double 1\n")
        fh.write("LOOKUP_TABLE default\n")
        flat = field.values.ravel(order="F")
        for start in range(0, flat.size, 6):
            fh.write(" ".join(f"{v:.9e}" for v in flat[start:start + 6]) + "\n")


def field_path(directory, problem: str) -> Path:
    return Path(directory) / f"phi_{problem}.field"
