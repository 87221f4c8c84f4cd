"""Configuration, command line interface, CSV tables, and VTK export.

Config files are flat ``key=value`` text; command-line flags override file
values.  Subcommands:

    solve    assemble and solve one refinement level, optionally emitting
             VTK/CSV artifacts
    study    run a refinement study and emit the convergence table
    verify   check the reference-element properties (degree-of-freedom
             duality, curl inclusion, tangential traces, curl identity)
    oracle   compare the reduced solution path against a dense solve of the
             full saddle system on a small grid

Exit codes: 0 success, 2 configuration/validation error, 3 solver or
verification failure.
"""

from __future__ import annotations

import os

# Thread count is controlled by a single environment variable; it must be
# propagated to the BLAS pools before numpy is first loaded.
_threads = os.environ.get("MSMFE_NUM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import METHODS, assemble_system
from .harness import (
    COLUMNS,
    conservation_residual,
    convergence_study,
    error_norms,
    example_one,
    format_study,
    make_case,
    solve_case,
    weak_symmetry_residual,
)
from .linsolve import ConvergenceError, NegativeCurvatureError, saddle_oracle_solve
from .mesh import build_mesh, unit_box
from .reduction import eliminate_rotation, eliminate_stress, recover_fields
from .ref_elements import Ert0Basis, ThetaBasis, sxi_identity_residual

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

EXAMPLES = ("1", "2", "3", "custom")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """One experiment: method, manufactured case, levels, and output flags."""

    method: str = ""
    example: str = "1"
    levels: tuple[int, ...] = ()
    lam: float | None = None
    mu: float | None = None
    young: float | None = None
    nu_exponent: int | None = None
    kappa: float | None = None
    tol: float = 1.0e-10
    maxit: int | None = None
    outdir: str = "."
    emit_vtk: bool = False
    emit_csv: bool = False
    check_oracle: bool = False

    def validated(self) -> "RunConfig":
        cfg = dataclasses.replace(self)
        if cfg.example not in EXAMPLES:
            raise ConfigError(f"example must be one of {EXAMPLES}, got {cfg.example!r}")
        if not cfg.method:
            cfg.method = "msmfe1" if cfg.example == "3" else "msmfe0"
        if cfg.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {cfg.method!r}")
        if not cfg.levels:
            raise ConfigError("levels required")
        if any(n < 1 for n in cfg.levels):
            raise ConfigError("levels must be positive cell counts per direction")
        if cfg.tol <= 0:
            raise ConfigError("tol must be positive")
        if cfg.maxit is not None and cfg.maxit < 1:
            raise ConfigError("maxit must be positive")
        if cfg.example == "3":
            if cfg.nu_exponent is None:
                cfg.nu_exponent = 5
            if cfg.young is None:
                cfg.young = 1.0e5
        if cfg.example == "custom" and (cfg.lam is None or cfg.mu is None):
            raise ConfigError("custom example requires lam and mu")
        return cfg


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "levels":
        try:
            return tuple(int(tok) for tok in raw.split(",") if tok.strip())
        except ValueError:
            raise ConfigError(f"levels must be a comma-separated int list, got {raw!r}")
    if key in ("method", "example", "outdir"):
        return raw
    if key in ("emit_vtk", "emit_csv", "check_oracle"):
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {raw!r}")
    if key in ("maxit", "nu_exponent"):
        if low_none(raw):
            return None
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}")
    if key in ("lam", "mu", "young", "kappa", "tol"):
        if low_none(raw):
            return None
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {raw!r}")
    raise ConfigError(f"unknown key {key!r}")


def low_none(raw: str) -> bool:
    return raw.lower() in ("none", "")


def parse_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read a flat key=value file, apply overrides, and validate.

    Unknown keys are rejected with the offending key and line number.
    """
    data: dict = {}
    if path is not None:
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, _, raw = stripped.partition("=")
            key = key.strip().replace("-", "_")
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            data[key] = _parse_value(key, raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown key {key!r}")
        data[key] = value
    return RunConfig(**data).validated()


def serialize_config(cfg: RunConfig) -> str:
    """Inverse of parse_config: parse(serialize(cfg)) == cfg."""
    lines = []
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            rendered = "none"
        elif f.name == "levels":
            rendered = ",".join(str(n) for n in value)
        elif isinstance(value, bool):
            rendered = "true" if value else "false"
        else:
            rendered = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{f.name}={rendered}")
    return "\n".join(lines) + "\n"


def build_case(cfg: RunConfig):
    if cfg.example == "custom":
        return example_one(cfg.method, lam=cfg.lam, mu=cfg.mu)
    params: dict = {}
    if cfg.example == "1":
        if cfg.lam is not None:
            params["lam"] = cfg.lam
        if cfg.mu is not None:
            params["mu"] = cfg.mu
    elif cfg.example == "2":
        if cfg.kappa is not None:
            params["kappa"] = cfg.kappa
    else:
        params["nu_exponent"] = cfg.nu_exponent
        params["E"] = cfg.young
    return make_case(int(cfg.example), cfg.method, **params)


# ----------------------------------------------------------------------
# artifact writers
# ----------------------------------------------------------------------


def write_csv(rows, path: str | Path) -> None:
    """Convergence table with the error and rate of all five field groups.

    Numbers use the 4-significant-digit scientific format of the reference
    tables; output is deterministic for identical inputs.
    """
    heads = {"sigma": "sigma", "div_sigma": "div_sigma", "u": "u", "qu": "qu", "gamma": "gamma"}
    header = ["h"]
    for key in COLUMNS:
        header += [f"{heads[key]}_error", f"{heads[key]}_rate"]
    lines = [",".join(header)]
    for row in rows:
        cells = [f"1/{row.n}"]
        for key in COLUMNS:
            cells.append("%.3E" % row.errors[key])
            cells.append("" if row.rates is None else "%.2f" % row.rates[key])
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def _cell_average_stress(asm, sigma_dofs):
    """Per-cell average stress tensors, (ncells, 3, 3)."""
    dm = asm.dofmap
    mesh = asm.mesh
    vals = sigma_dofs[dm.cell_sdof] * dm.ref_sign[None, :, None]  # (nc, 24, 3)
    avg = np.einsum("njr,ja->nra", vals, asm.basis.component_integrals)
    avg *= mesh.h[None, None, :] / mesh.jacobian_det
    return avg


def write_vtk(asm, fields, path: str | Path) -> None:
    """Legacy ASCII rectilinear-grid export.

    Cell data: displacement vector, the cellwise rotation (constant-rotation
    method), and the cell-averaged stress rows.  Point data: vertex rotation
    for the trilinear-rotation methods.  Pass fields=None to write geometry
    only.
    """
    mesh = asm.mesh
    nx, ny, nz = mesh.n
    lines = [
        "# vtk DataFile Version 3.0",
        "multipoint stress mixed finite element output",
        "ASCII",
        "DATASET RECTILINEAR_GRID",
        f"DIMENSIONS {nx + 1} {ny + 1} {nz + 1}",
    ]
    for name, count, axis in (("X_COORDINATES", nx + 1, 0), ("Y_COORDINATES", ny + 1, 1), ("Z_COORDINATES", nz + 1, 2)):
        coords = mesh.box.lo[axis] + mesh.h[axis] * np.arange(count)
        lines.append(f"{name} {count} double")
        lines.append(" ".join("%.9g" % c for c in coords))

    def vec_block(title, arr):
        out = [f"VECTORS {title} double"]
        out += [" ".join("%.9g" % x for x in row) for row in arr]
        return out

    if fields is not None:
        lines.append(f"CELL_DATA {mesh.ncells}")
        lines += vec_block("displacement", fields.u.reshape(-1, 3))
        if fields.method == "msmfe0":
            lines += vec_block("rotation", fields.gamma.reshape(-1, 3))
        avg = _cell_average_stress(asm, fields.sigma)
        for r in range(3):
            lines += vec_block(f"stress_row_{r}", avg[:, r, :])
        if fields.method != "msmfe0":
            lines.append(f"POINT_DATA {mesh.nverts}")
            name = "rotation_scaled" if fields.method == "msmfe1-scaled" else "rotation"
            lines += vec_block(name, fields.gamma.reshape(-1, 3))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as err:
        raise OSError(f"failed to write VTK file {path}: {err}") from None


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def _cmd_solve(cfg: RunConfig) -> int:
    case = build_case(cfg)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for n in cfg.levels:
        res = solve_case(case, n, tol=cfg.tol, maxit=cfg.maxit)
        errs = error_norms(res.asm, res.fields, case)
        cons = conservation_residual(res)
        wsym = weak_symmetry_residual(res)
        print(f"level 1/{n}: {res.report.iterations} iterations, "
              f"{res.wall_time:.2f}s, conservation {cons:.2e}, weak symmetry {wsym:.2e}")
        print("  " + "  ".join(f"{k}={errs[k]:.3E}" for k in COLUMNS))
        if cfg.check_oracle:
            rc = _oracle_check(case, n)
            if rc != EXIT_OK:
                return rc
        if cfg.emit_vtk:
            write_vtk(res.asm, res.fields, outdir / f"{case.name}-{case.method}-n{n}.vtk")
    return EXIT_OK


def _cmd_study(cfg: RunConfig) -> int:
    case = build_case(cfg)
    rows = convergence_study(case, cfg.levels, tol=cfg.tol, maxit=cfg.maxit)
    print(format_study(rows))
    if cfg.emit_csv:
        outdir = Path(cfg.outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        path = outdir / f"{case.name}-{case.method}.csv"
        write_csv(rows, path)
        print(f"wrote {path}")
    return EXIT_OK


def stress_duality_residual(stress: Ert0Basis) -> float:
    """Max deviation from the identity of the dual basis at its own dofs."""
    vals = stress.eval_many(stress.dof_points)  # (24 pts, 24 basis, 3)
    idx = np.arange(24)
    mat = stress.dof_sign[:, None] * vals[idx[:, None], idx[None, :], stress.dof_axis[:, None]]
    return float(np.abs(mat - np.eye(24)).max())


def curl_duality_residual(theta: ThetaBasis) -> float:
    vals = theta.eval_many(theta.dof_points)  # (48 pts, 48 basis, 3)
    idx = np.arange(48)
    mat = vals[idx[:, None], idx[None, :], theta.dof_component[:, None]]
    return float(np.abs(mat - np.eye(48)).max())


def tangential_trace_residual(theta: ThetaBasis) -> float:
    """Max tangential component on faces where a basis function has no dofs.

    Sampled on a 3x3 grid per face; a conforming basis function whose dofs on
    a face all vanish has zero tangential trace there.
    """
    grid = np.array([0.25, 0.5, 0.75])
    gg = np.stack(np.meshgrid(grid, grid, indexing="ij"), axis=-1).reshape(-1, 2)
    worst = 0.0
    for axis in range(3):
        tang = [a for a in range(3) if a != axis]
        for coord in (0.0, 1.0):
            pts = np.zeros((9, 3))
            pts[:, axis] = coord
            pts[:, tang[0]] = gg[:, 0]
            pts[:, tang[1]] = gg[:, 1]
            on_face = np.abs(theta.dof_points[:, axis] - coord) < 1e-14
            vals = theta.eval_many(pts)  # (9, 48, 3)
            t = np.abs(vals[:, ~on_face][:, :, tang]).max() if (~on_face).any() else 0.0
            worst = max(worst, float(t))
    return worst


def curl_identity_residual(theta: ThetaBasis, rng, nsamples=100) -> float:
    q = theta.random_field(rng)
    w = np.zeros((3, 3))
    w[0, 1], w[1, 0] = 1.3, -1.3
    w[1, 2], w[2, 1] = -0.7, 0.7
    w[2, 0], w[0, 2] = 0.4, -0.4
    pts = rng.random((nsamples, 3))
    return float(sxi_identity_residual(q, w, pts).max())


def reference_element_checks(seed: int = 0):
    """(name, value, bound) triples plus the curl coefficient-matrix rank."""
    stress = Ert0Basis()
    theta = ThetaBasis(stress)
    rng = np.random.default_rng(seed)
    checks = [
        ("stress dof duality residual", stress_duality_residual(stress), 1e-12),
        ("curl-space dof duality residual", curl_duality_residual(theta), 1e-12),
        ("curl inclusion residual", float(theta.curl_residual), 1e-12),
        ("tangential trace residual", tangential_trace_residual(theta), 1e-12),
        ("curl identity residual", curl_identity_residual(theta, rng), 1e-12),
    ]
    rank = int(np.linalg.matrix_rank(theta.curl_coeffs, tol=1e-9))
    return checks, rank


def _cmd_verify(_cfg: RunConfig) -> int:
    checks, rank = reference_element_checks()
    ok = True
    for name, value, bound in checks:
        status = "ok" if value < bound else "FAIL"
        ok = ok and value < bound
        print(f"{name:40s} {value:.3e}  (< {bound:g})  {status}")
    print(f"{'curl coefficient-matrix rank':40s} {rank}")
    return EXIT_OK if ok else EXIT_SOLVER


def _oracle_check(case, n: int, rtol: float = 1.0e-8) -> int:
    if n > 4:
        print(f"oracle check skipped for n={n} (dense oracle limited to 4^3)")
        return EXIT_OK
    mesh = build_mesh(unit_box(), (n, n, n))
    asm = assemble_system(mesh, case.material, case.method, case.body_force, case.displacement)
    sig_o, u_o, gam_o = saddle_oracle_solve(asm)
    red = eliminate_stress(asm)
    if case.method != "msmfe0":
        red = eliminate_rotation(red)
    from .linsolve import cg_solve

    x, _ = cg_solve(red.matrix, red.rhs, tol=1e-14)
    f = recover_fields(asm, red, x)
    scale = max(np.abs(sig_o).max(), 1.0)
    ds = np.abs(f.sigma - sig_o).max() / scale
    du = np.abs(f.u.ravel() - u_o).max() / max(np.abs(u_o).max(), 1.0)
    dg = np.abs(f.gamma.ravel() - gam_o).max() / max(np.abs(gam_o).max(), 1.0)
    worst = max(ds, du, dg)
    status = "ok" if worst < rtol else "FAIL"
    print(f"oracle n={n} {case.method}: sigma {ds:.2e}  u {du:.2e}  gamma {dg:.2e}  {status}")
    return EXIT_OK if worst < rtol else EXIT_SOLVER


def _cmd_oracle(cfg: RunConfig) -> int:
    case = build_case(cfg)
    for n in cfg.levels:
        if n > 4:
            print(f"error: oracle subcommand requires levels <= 4, got {n}", file=sys.stderr)
            return EXIT_CONFIG
        rc = _oracle_check(case, n)
        if rc != EXIT_OK:
            return rc
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msmfe",
        description="Multipoint stress mixed finite element solvers for 3D elasticity",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "solve one or more levels and emit fields"),
        ("study", "run a refinement study and print/emit the table"),
        ("verify", "reference-element property suite"),
        ("oracle", "compare reduced path against the dense saddle solve"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--method", choices=METHODS)
        p.add_argument("--example", choices=EXAMPLES)
        p.add_argument("--levels", help="comma-separated cells per direction, e.g. 2,4,8,16")
        p.add_argument("--lam", type=float, help="first Lame parameter override")
        p.add_argument("--mu", type=float, help="shear modulus override")
        p.add_argument("--young", type=float, help="Young modulus (example 3)")
        p.add_argument("--nu-exponent", type=int, dest="nu_exponent",
                       help="Poisson ratio 0.5 - 10^-k (example 3)")
        p.add_argument("--kappa", type=float, help="inclusion stiffness contrast (example 2)")
        p.add_argument("--tol", type=float, help="CG relative tolerance")
        p.add_argument("--maxit", type=int, help="CG iteration cap")
        p.add_argument("--outdir", help="artifact output directory")
        p.add_argument("--emit-vtk", action="store_true", default=None, dest="emit_vtk")
        p.add_argument("--emit-csv", action="store_true", default=None, dest="emit_csv")
        p.add_argument("--check-oracle", action="store_true", default=None, dest="check_oracle")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, key)
        for key in _FIELD_TYPES
        if hasattr(args, key) and getattr(args, key, None) is not None
    }
    if "levels" in overrides:
        overrides["levels"] = _parse_value("levels", overrides["levels"])
    if args.command == "verify" and "levels" not in overrides and args.config is None:
        overrides["levels"] = (2,)  # unused by verify, satisfies validation
    try:
        cfg = parse_config(args.config, overrides)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "solve":
            return _cmd_solve(cfg)
        if args.command == "study":
            return _cmd_study(cfg)
        if args.command == "verify":
            return _cmd_verify(cfg)
        return _cmd_oracle(cfg)
    except (ConvergenceError, NegativeCurvatureError, np.linalg.LinAlgError) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
