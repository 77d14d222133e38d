"""Command-line frontend: solve, analyze, traj, stability, repulsion, scaling, qm-fit.

One TOML config describes one virtual experiment; SI units internally, with
explicitly suffixed config keys (mass_amu, rf_amplitude_V, spacing_m, ...).
Exit codes: 0 success, 1 numerical failure, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                      # Python 3.10
    import tomli as tomllib

from . import __version__
from .constants import ELEMENTARY_CHARGE
from .coulomb import (AnalyticConfinement, IonPair, fit_charge_to_mass,
                      two_ion_displacement_closed, two_ion_equilibrium)
from .dynamics import (AnalyticField, extract_secular_frequency,
                       integrate_trajectory, secular_frequencies,
                       stability_map, trajectory_to_csv)
from .errors import ConfigError, LatticeTrapError, NoMinimumError, NoPeakError, RegimeError
from .fieldio import export_vtk, field_path, load_field, save_field
from .fieldsolver import ScalarField3D, gradient, solve_laplace
from .geometry import TOP_BIAS_PROBLEM, rasterize, stack_from_mapping
from .interpolate import FieldWindow
from .params import DriveConfig, IonSpecies, ion_from_units
from .pseudopot import (_find_minimum_on_field, curvature_frequencies,
                        find_site_minimum, fit_multipole, fit_z1,
                        pseudopotential, trap_depth)
from .scaling import CouplingParams, ScalingConstraint, j_coupling, scaling_scan, scan_to_csv

log = logging.getLogger(__name__)

# regression baseline: the modeled constants of the canonical trap geometry
CANONICAL_BASELINE = {
    "hole_diameter_m": 1.14e-3,
    "hole_pitch_m": 1.64e-3,
    "rf_ground_gap_m": 1.0e-3,
    "top_plate_height_m": 15.0e-3,
    "r1_m": 3.1e-3,
    "alpha": -4.0,
    "z1_m": 19.0e-3,
    "reference_drive": {"rf_amplitude_V": 300.0, "drive_freq_Hz": 7.7e6},
    "reference_q_over_m_e_per_amu": 1.9e-9,
}


def load_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


def _section(cfg: dict, name: str) -> dict:
    if name not in cfg:
        raise ConfigError(f"config is missing the [{name}] section")
    return cfg[name]


def _get(section: dict, key: str, default=None, required=False, kind=float):
    if key in section:
        try:
            return kind(section[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key '{key}' has invalid value "
                              f"{section[key]!r}") from exc
    if required:
        raise ConfigError(f"config section is missing required key '{key}'")
    return default


def _length(section: dict, base: str, default=None, required=False):
    if f"{base}_m" in section:
        return float(section[f"{base}_m"])
    if f"{base}_mm" in section:
        return float(section[f"{base}_mm"]) * 1e-3
    if required:
        raise ConfigError(f"config section is missing '{base}_m' (or '{base}_mm')")
    return default


def drive_from_config(cfg: dict) -> DriveConfig:
    sec = _section(cfg, "drive")
    v = _get(sec, "rf_amplitude_V", required=True)
    f = _get(sec, "drive_freq_Hz", required=True)
    if f <= 0:
        raise ConfigError("drive_freq_Hz must be positive")
    return DriveConfig(V=v, Omega=2.0 * math.pi * f,
                       U0=_get(sec, "endcap_U0_V", 0.0),
                       U=_get(sec, "top_plate_U_V", 0.0))


def ion_from_config(cfg: dict) -> IonSpecies:
    sec = _section(cfg, "ion")
    return ion_from_units(_get(sec, "charge_e", required=True),
                          _get(sec, "mass_amu", required=True),
                          _get(sec, "drag_gamma_per_s", 0.0))


def solver_options(cfg: dict, spacing_override=None) -> dict:
    sec = cfg.get("solver", {})
    return {
        "spacing": spacing_override or _length(sec, "spacing", 1.0e-4),
        "margin": _length(sec, "margin", 12.0e-3),
        "tol": _get(sec, "tol", 1.0e-8),
        "max_iter": _get(sec, "max_iter", 200, kind=int),
        "max_nodes": _get(sec, "max_nodes", 250_000_000, kind=int),
    }


def output_dir(cfg: dict, override=None) -> Path:
    sec = cfg.get("output", {})
    d = Path(override or sec.get("directory", "latticetrap_out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


class OutputLock:
    """Guards one output directory against concurrent writers."""

    def __init__(self, directory: Path):
        self.path = Path(directory) / ".lock"
        self.fd = None

    def __enter__(self):
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LatticeTrapError(
                f"output directory is locked by another run ({self.path}); "
                "remove the stale .lock file if no run is active") from None
        os.write(self.fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        if self.fd is not None:
            os.close(self.fd)
            self.path.unlink(missing_ok=True)
        return False


def _rasterized(cfg, opts):
    stack = stack_from_mapping(_section(cfg, "geometry"))
    return rasterize(stack, spacing=opts["spacing"], margin=opts["margin"],
                     max_nodes=opts["max_nodes"])


def _site_nulls(phi: ScalarField3D):
    """Field-null height above every lattice site, from |E|^2 minima."""
    stack = phi.metadata["stack"]
    grad = gradient(phi)
    e2 = ScalarField3D(origin=phi.origin, spacing=phi.spacing,
                       values=grad.magnitude_squared(), free=phi.free,
                       metadata=dict(phi.metadata))
    nulls = {}
    nx, ny = stack.lattice_dims
    for i in range(nx):
        for j in range(ny):
            try:
                nulls[(i, j)] = _find_minimum_on_field(e2, (i, j))
            except NoMinimumError:
                nulls[(i, j)] = None
    return nulls


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    opts = solver_options(cfg, spacing_override=args.spacing)
    out = output_dir(cfg, args.out)
    with OutputLock(out):
        grid = _rasterized(cfg, opts)
        phi = solve_laplace(grid, tol=opts["tol"], max_iter=opts["max_iter"])
        save_field(phi, field_path(out, "rf"), problem="rf")
        if args.vtk or cfg.get("output", {}).get("vtk", False):
            export_vtk(phi, out / "phi_rf.vtk")
        summary = {
            "geometry_hash": grid.geometry_hash,
            "extents": list(grid.extents),
            "spacing_m": grid.spacing[0],
            "rf": {"residual": phi.metadata["residual"],
                   "iterations": phi.metadata["iterations"]},
        }
        if grid.stack.top_plate_z is not None:
            phib = solve_laplace(grid.with_potentials(TOP_BIAS_PROBLEM),
                                 tol=opts["tol"], max_iter=opts["max_iter"])
            save_field(phib, field_path(out, "bias"), problem="top_bias")
            summary["bias"] = {"residual": phib.metadata["residual"],
                               "iterations": phib.metadata["iterations"]}
        nulls = _site_nulls(phi)
        summary["site_nulls"] = [
            {"site": list(site), "null_m": (list(pos) if pos is not None else None)}
            for site, pos in sorted(nulls.items())]
        with open(out / "solve_summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
    print(f"rf solve residual {summary['rf']['residual']:.3e} "
          f"({summary['rf']['iterations']} iterations)")
    shown = 0
    for site, pos in sorted(nulls.items()):
        if pos is not None and shown < 4:
            print(f"  site {site}: null at z = {pos[2] * 1e3:.4f} mm")
            shown += 1
    print(f"wrote {field_path(out, 'rf')} and solve_summary.json")
    return 0


def _load_field_checked(path, grid) -> ScalarField3D:
    fld = load_field(path)
    if fld.metadata.get("geometry_hash") != grid.geometry_hash:
        log.warning("field file %s was solved for a different geometry/spacing "
                    "(hash %s != %s); results may be stale", path,
                    fld.metadata.get("geometry_hash"), grid.geometry_hash)
    fld.free = grid.free_mask
    fld.metadata["stack"] = grid.stack
    return fld


def _parse_sites(arg, stack):
    if arg:
        sites = []
        for part in arg.split(";"):
            i, j = part.split(",")
            sites.append((int(i), int(j)))
        return sites
    nx, ny = stack.lattice_dims
    return [((nx - 1) // 2, (ny - 1) // 2)]


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    opts = solver_options(cfg)
    out = output_dir(cfg, args.out)
    field_dir = Path(args.field) if args.field else out
    grid = _rasterized(cfg, opts)
    phi = _load_field_checked(field_path(field_dir, "rf"), grid)
    bias_path = field_path(field_dir, "bias")
    phib = _load_field_checked(bias_path, grid) if bias_path.exists() else None

    ion = ion_from_config(cfg)
    drive = drive_from_config(cfg)
    sites = _parse_sites(args.site, grid.stack)
    nulls = _site_nulls(phi)

    grad = gradient(phi)
    records = []
    for site in sites:
        null = nulls.get(tuple(site))
        if null is None:
            log.warning("site %s has no confined null; skipping", site)
            continue
        ts = fit_multipole(phi, site, null_hint=null[2])
        if phib is not None:
            z1, z1_err = fit_z1(phib, site, ts.minimum_position[2])
            ts.z1, ts.z1_err = z1, z1_err
        psi = pseudopotential(grad, ion, drive,
                              z0=ts.minimum_position[2], z1=ts.z1)
        mn = find_site_minimum(psi, site)
        ts.depth_ev = trap_depth(psi, mn)
        w_r_curv, w_z_curv = curvature_frequencies(phi, mn, ion,
                                                   DriveConfig(V=drive.V, Omega=drive.Omega))
        w_r_fit, w_z_fit = secular_frequencies(ion, drive, ts.r1)
        rec = ts.as_record()
        rec.update({
            "pseudopotential_minimum_m": list(mn),
            "omega_r_curvature_rad_s": w_r_curv,
            "omega_z_curvature_rad_s": w_z_curv,
            "omega_r_from_fit_rad_s": w_r_fit,
            "omega_z_from_fit_rad_s": w_z_fit,
            "f_r_curvature_Hz": w_r_curv / (2 * math.pi),
            "f_z_curvature_Hz": w_z_curv / (2 * math.pi),
            "f_r_from_fit_Hz": w_r_fit / (2 * math.pi),
            "f_z_from_fit_Hz": w_z_fit / (2 * math.pi),
        })
        records.append(rec)
        print(f"site {tuple(site)}: r1 = {ts.r1 * 1e3:.3f} mm, alpha = {ts.alpha:.2f}, "
              f"z1 = {ts.z1 * 1e3 if ts.z1 else float('nan'):.2f} mm, "
              f"depth = {ts.depth_ev:.4f} eV")
        print(f"  omega_r/2pi: curvature {w_r_curv / 2e3 / math.pi:.1f} kHz | "
              f"fit-analytic {w_r_fit / 2e3 / math.pi:.1f} kHz")

    if not records:
        raise LatticeTrapError("no site produced an analysis record")
    with open(out / "trap_sites.json", "w") as fh:
        json.dump(records, fh, indent=2)
    keys = list(records[0].keys())
    with open(out / "trap_sites.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for rec in records:
            w.writerow({k: rec.get(k) for k in keys})
    print(f"wrote {out / 'trap_sites.json'} and trap_sites.csv")
    return 0


def cmd_traj(args) -> int:
    cfg = load_config(args.config)
    sec = _section(cfg, "trajectory")
    ion = ion_from_config(cfg)
    drive = drive_from_config(cfg)
    out = output_dir(cfg, args.out)

    mode = sec.get("field", "analytic")
    x0 = [float(v) for v in sec.get("x0_m", [1e-5, 0.0, 0.0])]
    v0 = [float(v) for v in sec.get("v0_m_s", [0.0, 0.0, 0.0])]
    duration = _get(sec, "duration_s", required=True)
    z1 = _length(sec, "z1", None)
    tickle = None
    if "tickle_amplitude_V" in sec:
        tickle = (_get(sec, "tickle_amplitude_V"),
                  2.0 * math.pi * _get(sec, "tickle_freq_Hz", required=True))
    dt = _get(sec, "dt_s", None)

    if mode == "analytic":
        field = AnalyticField(r1=_length(sec, "r1", required=True),
                              alpha=_get(sec, "alpha", 0.0))
        start = x0
    elif mode == "solved":
        opts = solver_options(cfg)
        field_dir = Path(args.field) if args.field else out
        grid = _rasterized(cfg, opts)
        phi = _load_field_checked(field_path(field_dir, "rf"), grid)
        site = tuple(int(v) for v in sec.get("site", [0, 0]))
        grad = gradient(phi)
        nulls = _site_nulls(phi)
        null = nulls.get(site)
        if null is None:
            raise LatticeTrapError(f"site {site} has no confined null")
        halfwidth = _length(sec, "window_halfwidth", 0.45 * grid.stack.hole_pitch)
        field = FieldWindow.from_vector_field(grad, null, halfwidth)
        start = null + np.asarray(x0)
    else:
        raise ConfigError(f"[trajectory] field must be 'analytic' or 'solved', got {mode!r}")

    traj = integrate_trajectory(field, ion, drive, start, v0, duration,
                                tickle=tickle, z1=z1, dt=dt)
    path = out / "trajectory.csv"
    trajectory_to_csv(traj, path)
    msg = f"wrote {path} ({len(traj.t)} samples"
    msg += ", escaped)" if traj.escaped else ")"
    print(msg)
    for axis in ("x", "y", "z"):
        try:
            w = extract_secular_frequency(traj, axis)
            print(f"  secular {axis}: {w / (2 * math.pi) / 1e3:.2f} kHz")
        except NoPeakError:
            pass
    return 0


def cmd_stability(args) -> int:
    cfg = load_config(args.config)
    sec = cfg.get("stability", {})
    out = output_dir(cfg, args.out)
    a_vals = np.linspace(_get(sec, "a_min", 0.0), _get(sec, "a_max", 0.0),
                         _get(sec, "a_steps", 1, kind=int))
    q_vals = np.linspace(_get(sec, "q_min", 0.05), _get(sec, "q_max", 1.2),
                         _get(sec, "q_steps", 24, kind=int))
    drag = _get(sec, "drag_gamma_over_Omega", 0.0)
    rows = stability_map(a_vals, q_vals, drag)
    path = out / "stability.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "q", "stable", "floquet_exponent"])
        for a, q, stable, mu in rows:
            w.writerow([f"{a:.9g}", f"{q:.9g}", int(stable), f"{mu:.9e}"])
    print(f"wrote {path} ({len(rows)} points)")
    return 0


def cmd_repulsion(args) -> int:
    cfg = load_config(args.config)
    sec = _section(cfg, "repulsion")
    out = output_dir(cfg, args.out)
    geom = _section(cfg, "geometry")
    d = _length(sec, "separation", None) or _length(geom, "hole_pitch", required=True)
    ion1 = ion_from_units(_get(sec, "ion1_charge_e", required=True),
                          _get(sec, "ion1_mass_amu", required=True))
    ion2 = ion_from_units(_get(sec, "ion2_charge_e", required=True),
                          _get(sec, "ion2_mass_amu", required=True))
    pair = IonPair(ion1, ion2, d=d, height=_length(sec, "height", 0.25e-3),
                   screening=_get(sec, "screening", None))
    r1 = _length(sec, "r1", required=True)
    v = _get(sec, "rf_amplitude_V", None) or drive_from_config(cfg).V
    freqs = np.linspace(_get(sec, "freq_min_Hz", required=True),
                        _get(sec, "freq_max_Hz", required=True),
                        _get(sec, "steps", 16, kind=int))
    rows = []
    for f in freqs:
        drive = DriveConfig(V=v, Omega=2.0 * math.pi * f)
        try:
            cl = two_ion_displacement_closed(pair, drive, r1)
            rows.append((f, cl.x1, cl.x2, cl.screening, "closed_form"))
        except RegimeError:
            log.info("closed form out of regime at %.0f Hz", f)
        eq = two_ion_equilibrium(pair, AnalyticConfinement(r1=r1), drive)
        rows.append((f, eq.x1, eq.x2, eq.screening, "equilibrium"))
    path = out / "repulsion.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Omega_Hz", "x1_m", "x2_m", "s", "method"])
        for row in rows:
            w.writerow([f"{row[0]:.6f}", f"{row[1]:.9e}", f"{row[2]:.9e}",
                        f"{row[3]:.6f}", row[4]])
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_scaling(args) -> int:
    cfg = load_config(args.config)
    sec = _section(cfg, "scaling")
    out = output_dir(cfg, args.out)
    ion = ion_from_config(cfg)
    drive = drive_from_config(cfg)
    d_vals = np.geomspace(_length(sec, "d_min", required=True),
                          _length(sec, "d_max", required=True),
                          _get(sec, "steps", 25, kind=int))
    constraint = ScalingConstraint(
        q_target=_get(sec, "q_target", 0.3),
        depth_min_ev=_get(sec, "depth_min_eV", 0.1),
        v_max=_get(sec, "V_max", None))
    rows = scaling_scan(
        ion, drive,
        base_r1=_length(sec, "base_r1", required=True),
        base_d=_length(sec, "base_d", None) or _length(_section(cfg, "geometry"),
                                                       "hole_pitch", required=True),
        base_depth_ev=_get(sec, "base_depth_eV", required=True),
        d_values=d_vals, constraint=constraint,
        F=_get(sec, "F_N", required=True),
        wavelength=_length(sec, "wavelength", 532e-9),
        v_post_load_scale=_get(sec, "v_post_load_scale", 1.0))
    path = out / "scaling.csv"
    scan_to_csv(rows, path)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_qm_fit(args) -> int:
    cfg = load_config(args.config)
    sec = _section(cfg, "qmfit")
    out = output_dir(cfg, args.out)
    data_path = Path(args.data or sec.get("data_csv", ""))
    if not data_path.exists():
        raise ConfigError(f"qm-fit data file {data_path} not found")
    data = []
    with open(data_path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None or "Omega_Hz" not in rd.fieldnames \
                or "omega_z_Hz" not in rd.fieldnames:
            raise ConfigError("qm-fit CSV needs 'Omega_Hz' and 'omega_z_Hz' columns")
        for row in rd:
            data.append((2 * math.pi * float(row["Omega_Hz"]),
                         2 * math.pi * float(row["omega_z_Hz"])))
    drive = drive_from_config(cfg)
    rho, err = fit_charge_to_mass(
        data, drive,
        r1=_length(sec, "r1", required=True),
        alpha=_get(sec, "alpha", required=True),
        z1=_length(sec, "z1", required=True),
        U=_get(sec, "U_V", 0.0))
    e_per_amu = rho / (ELEMENTARY_CHARGE / 1.66053906660e-27)
    result = {"q_over_m_C_per_kg": rho, "q_over_m_stderr_C_per_kg": err,
              "q_over_m_e_per_amu": e_per_amu, "n_points": len(data)}
    path = out / "qm_fit.json"
    with open(path, "w") as fh:
        json.dump(result, fh, indent=2)
    print(f"Q/m = {rho:.4e} C/kg = {e_per_amu:.3e} e/amu (stderr {err:.1e})")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="latticetrap",
        description="Layered planar rf lattice ion trap simulator")
    p.add_argument("--version", action="store_true",
                   help="print version and the canonical geometry baseline")
    sub = p.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--config", required=True, help="TOML run configuration")
        sp.add_argument("--out", default=None, help="output directory override")

    sp = sub.add_parser("solve", help="rasterize the geometry and solve the fields")
    common(sp)
    sp.add_argument("--spacing", type=float, default=None,
                    help="grid spacing override (m)")
    sp.add_argument("--vtk", action="store_true", help="also write VTK exports")

    sp = sub.add_parser("analyze", help="fit trap constants from solved fields")
    common(sp)
    sp.add_argument("--field", default=None, help="directory holding the field files")
    sp.add_argument("--site", default=None,
                    help="lattice sites 'i,j[;i,j...]' (default: center site)")

    sp = sub.add_parser("traj", help="integrate an ion trajectory")
    common(sp)
    sp.add_argument("--field", default=None, help="directory holding the field files")

    sp = sub.add_parser("stability", help="Floquet stability map over (a, q)")
    common(sp)

    sp = sub.add_parser("repulsion", help="two-ion repulsion vs drive frequency")
    common(sp)

    sp = sub.add_parser("scaling", help="coupling-rate scan vs lattice spacing")
    common(sp)

    sp = sub.add_parser("qm-fit", help="fit Q/m from measured omega_z(Omega) data")
    common(sp)
    sp.add_argument("--data", default=None, help="CSV with Omega_Hz, omega_z_Hz columns")
    return p


_COMMANDS = {
    "solve": cmd_solve,
    "analyze": cmd_analyze,
    "traj": cmd_traj,
    "stability": cmd_stability,
    "repulsion": cmd_repulsion,
    "scaling": cmd_scaling,
    "qm-fit": cmd_qm_fit,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LATTICETRAP_LOGLEVEL", "INFO"),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        print(f"latticetrap {__version__}")
        print(json.dumps(CANONICAL_BASELINE, indent=2))
        return 0
    if not args.command:
        parser.print_help()
        return 2
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LatticeTrapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
