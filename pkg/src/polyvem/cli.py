"""Command-line driver: single runs, refinement studies following the
simultaneous space-time halving protocol, mesh utilities, and the
verification suites.

Configuration comes from a flat key=value file plus flag overrides; the
defaults reproduce the headline experiment (extended Fisher-Kolmogorov
problem, clamped BCs, Morley-type space, k = 2).  The effective
configuration is embedded in every report so runs are reproducible from
their outputs alone.
"""

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import assembly, postproc, timestepper, verify
from .element import DofLayout
from .families import DOMAINS, KINDS, MeshFamily, generate
from .mesh import PolygonalMesh
from .problems import make_problem
from .postproc import ErrorContext, ErrorReport, StepRecord, emit_report

DEFAULTS = {
    "problem": "test1_cp",
    "space": "morley",
    "order": 2,
    "mesh": "triangular",
    "res": 4,
    "dt": 0.25,
    "bc": "",               # empty = take the problem's own BC
    "tol": 1e-8,
    "max_iter": 25,
    "seed": 0,
    "levels": 5,
    "base_res": 4,
    "dt0": 0.25,
    "diagonal": True,
    "grid": False,
    "error_norm": "full",
    "format": "table_text",
    "out": "",
}


class ConfigError(ValueError):
    pass


def load_config_file(path):
    out = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key] = value
    return out


def _coerce(key, value):
    kind = type(DEFAULTS[key])
    if kind is bool:
        if isinstance(value, bool):
            return value
        return str(value).lower() in ("1", "true", "yes", "on")
    return kind(value)


def effective_config(file_values=None, overrides=None):
    cfg = dict(DEFAULTS)
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key in DEFAULTS:
                cfg[key] = _coerce(key, value)
            else:
                cfg[key] = value     # custom_* passthrough keys
    return cfg


def _custom_kwargs(cfg):
    kwargs = {}
    if "custom_coeffs" in cfg:
        rows = []
        for chunk in str(cfg["custom_coeffs"]).split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            i, j, c = chunk.replace(",", " ").split()
            rows.append((int(i), int(j), float(c)))
        n = max(i for i, _, _ in rows) + 1
        m = max(j for _, j, _ in rows) + 1
        C = np.zeros((n, m))
        for i, j, c in rows:
            C[i, j] = c
        kwargs["space_coeffs"] = C
    if "custom_time" in cfg:
        kwargs["time_coeffs"] = [float(v) for v in str(cfg["custom_time"]).split(",")]
    for key, target in (("custom_alpha1", "alpha1"), ("custom_alpha2", "alpha2"),
                        ("custom_T", "T_final")):
        if key in cfg:
            kwargs[target] = float(cfg[key])
    if "custom_bc" in cfg:
        kwargs["bc"] = str(cfg["custom_bc"])
    if "custom_domain" in cfg:
        kwargs["domain"] = str(cfg["custom_domain"])
    if "custom_nonlinearity" in cfg:
        kwargs["nonlinearity"] = str(cfg["custom_nonlinearity"])
    return kwargs


def _resolve_problem(cfg):
    try:
        spec, sol = make_problem(cfg["problem"], **(_custom_kwargs(cfg)
                                                    if cfg["problem"] == "custom" else {}))
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["bc"]:
        spec = dataclasses.replace(spec, bc=cfg["bc"])
    return spec, sol


def _stage(label, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, KeyboardInterrupt):
        raise
    except Exception as exc:
        raise RuntimeError(f"[{label}] {exc}") from exc


def run_single(cfg, reuse=None):
    """Execute mesh -> assemble -> advance -> postproc; returns ErrorReport.

    reuse optionally carries (mesh, table) from a previous run on the same
    mesh/space/order so BC variants share the element computations.
    """
    spec, sol = _resolve_problem(cfg)
    layout = DofLayout(cfg["space"], cfg["order"])
    if reuse is None:
        family = MeshFamily(cfg["mesh"], cfg["res"], seed=cfg["seed"])
        mesh = _stage("mesh", generate, family, spec.domain)
        table = _stage("element", assembly.ElementTable, mesh, layout)
    else:
        mesh, table = reuse
    dofmap = _stage("assembly", assembly.GlobalDofMap, mesh, layout, spec.bc,
                    numbering=table.numbering)
    system = _stage("assembly", timestepper.TransientSystem, mesh, layout,
                    dofmap, table, spec, sol)
    dt = cfg["dt"]
    n_steps = int(round(spec.T_final / dt))
    if abs(n_steps * dt - spec.T_final) > 1e-9 * spec.T_final or n_steps < 1:
        raise ConfigError(f"dt = {dt} does not divide T = {spec.T_final}")
    grid = timestepper.TimeGrid(t_final=spec.T_final, n_steps=n_steps)
    newton = timestepper.NewtonConfig(tol=cfg["tol"], max_iter=cfg["max_iter"])
    v0, g0 = sol.at_time(0.0)
    U0 = _stage("assembly", timestepper.interpolate_initial, mesh, layout,
                dofmap, v0, g0)
    full_norm = cfg["error_norm"] == "full"
    ctx = _stage("postproc", ErrorContext, table,
                 singular_points=sol.singular_points)
    report = ErrorReport(config={k: cfg[k] for k in sorted(cfg)},
                         h=mesh.h, dof_count=dofmap.n_free, dt=grid.dt,
                         full_norm=full_norm,
                         diagnostics=mesh.diagnostics())

    def on_step(n, t, U, iters):
        sq = ctx.seminorms(U, sol, t)
        h2 = float(np.sqrt(sq.sum())) if full_norm else float(np.sqrt(sq[2]))
        report.steps.append(StepRecord(t=t, err_l2=float(np.sqrt(sq[0])),
                                       err_h1=float(np.sqrt(sq[1])),
                                       err_h2=h2, newton_iterations=iters))

    _stage("advance", timestepper.advance, system, grid, U0, newton,
           on_step=on_step)
    report.finalize()
    return report


def _study_levels(cfg):
    levels = []
    for i in range(cfg["levels"]):
        level = dict(cfg)
        level["res"] = cfg["base_res"] * 2 ** i
        level["dt"] = cfg["dt0"] / 2 ** i if cfg["diagonal"] else cfg["dt"]
        levels.append(level)
    return levels


def run_study(cfg):
    """Refinement study; returns (RateTable, per-level reports)."""
    if cfg["levels"] < 2:
        raise ConfigError("a study needs at least 2 refinement levels")
    levels = _study_levels(cfg)
    workers = int(os.environ.get("POLYVEM_THREADS", "1") or "1")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run_single, levels))
    else:
        reports = [run_single(level) for level in levels]
    table = postproc.rate_table([(r.h, r.dof_count, r.e2) for r in reports])
    return table, reports


def run_grid(cfg):
    """Full (h, dt) refinement matrix mirroring the tables' layout."""
    rows = []
    for i in range(cfg["levels"]):
        row = []
        for j in range(cfg["levels"]):
            level = dict(cfg)
            level["res"] = cfg["base_res"] * 2 ** i
            level["dt"] = cfg["dt0"] / 2 ** j
            report = run_single(level)
            row.append(report)
        rows.append(row)
    return rows


def _grid_text(rows, cfg):
    lines = ["dofs".rjust(8) + "h".rjust(14)
             + "".join(f"dt0/{2**j}".rjust(16) for j in range(cfg["levels"]))]
    for row in rows:
        line = f"{row[0].dof_count:8d}{row[0].h:14.6e}"
        line += "".join(f"{r.e2:16.6e}" for r in row)
        lines.append(line)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--problem")
    p.add_argument("--space", choices=("morley", "c0nc"))
    p.add_argument("--order", type=int)
    p.add_argument("--mesh", choices=KINDS)
    p.add_argument("--bc", choices=("cp", "nc", "ch"))
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--error-norm", dest="error_norm", choices=("full", "seminorm"))
    p.add_argument("--out")
    p.add_argument("--format", choices=("table_text", "delimited_values",
                                        "structured_json"))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="polyvem",
        description="nonconforming virtual element solver for fourth-order "
                    "semilinear parabolic problems on polygonal meshes")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single space-time run")
    _add_common(p_run)
    p_run.add_argument("--res", type=int)
    p_run.add_argument("--dt", type=float)

    p_study = sub.add_parser("study", help="refinement study with rate table")
    _add_common(p_study)
    p_study.add_argument("--levels", type=int)
    p_study.add_argument("--base-res", dest="base_res", type=int)
    p_study.add_argument("--dt", type=float, help="fixed time step (disables the diagonal)")
    p_study.add_argument("--dt0", type=float, help="initial time step of the diagonal")
    p_study.add_argument("--diagonal", action="store_true", default=None,
                         help="halve h and dt together (default unless --dt is given)")
    p_study.add_argument("--grid", action="store_true", default=None,
                         help="also run the full (h, dt) matrix")

    p_verify = sub.add_parser("verify", help="self-check suites")
    p_verify.add_argument("suites", nargs="*", default=["all"],
                          choices=sorted(verify.SUITES) + ["all"],
                          help="suites to run (default: all)")
    p_verify.add_argument("--out", help="write a JSON summary here")

    p_mesh = sub.add_parser("mesh", help="mesh utilities")
    mesh_sub = p_mesh.add_subparsers(dest="mesh_command", required=True)
    p_gen = mesh_sub.add_parser("gen", help="generate a mesh file")
    p_gen.add_argument("--family", choices=KINDS, required=True)
    p_gen.add_argument("--res", type=int, required=True)
    p_gen.add_argument("--domain", choices=DOMAINS, default="unit_square")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_info = mesh_sub.add_parser("info", help="print mesh statistics")
    p_info.add_argument("path")
    return parser


def _gather_overrides(args, keys):
    return {key: getattr(args, key, None) for key in keys}


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args):
    if args.command == "run":
        file_values = load_config_file(args.config) if args.config else {}
        cfg = effective_config(file_values, _gather_overrides(
            args, ("problem", "space", "order", "mesh", "res", "dt", "bc",
                   "tol", "max_iter", "seed", "error_norm", "format", "out")))
        report = run_single(cfg)
        _emit(emit_report(report, cfg["format"]), cfg["out"])
        return 0

    if args.command == "study":
        file_values = load_config_file(args.config) if args.config else {}
        overrides = _gather_overrides(
            args, ("problem", "space", "order", "mesh", "levels", "base_res",
                   "dt0", "bc", "tol", "max_iter", "seed", "error_norm",
                   "format", "out", "grid"))
        if args.dt is not None:
            overrides["dt"] = args.dt
            overrides["diagonal"] = False
        if args.diagonal:
            overrides["diagonal"] = True
        cfg = effective_config(file_values, overrides)
        table, _reports = run_study(cfg)
        _emit(emit_report(table, cfg["format"]), cfg["out"])
        if cfg["out"]:
            root, _ = os.path.splitext(cfg["out"])
            postproc.emit_plot_script(root + "_plot.py")
        if cfg["grid"]:
            rows = run_grid(cfg)
            grid_text = _grid_text(rows, cfg)
            _emit(grid_text, (cfg["out"] + ".grid.txt") if cfg["out"] else "")
        return 0

    if args.command == "verify":
        results, ok = verify.run_verify(args.suites)
        for r in results:
            print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}: {r['details']}")
        if args.out:
            with open(args.out, "w") as fh:
                json.dump({"results": results, "passed": ok}, fh, indent=2,
                          sort_keys=True)
                fh.write("\n")
        return 0 if ok else 1

    if args.command == "mesh":
        if args.mesh_command == "gen":
            mesh = generate(MeshFamily(args.family, args.res, seed=args.seed),
                            domain=args.domain)
            mesh.save(args.out)
            print(f"wrote {args.out}: {mesh.n_vertices} vertices, "
                  f"{mesh.n_cells} cells, h = {mesh.h:.6g}")
            return 0
        mesh = PolygonalMesh.load(args.path)
        diag = mesh.diagnostics()
        print(f"vertices: {mesh.n_vertices}")
        print(f"edges:    {mesh.n_edges} ({int(mesh.boundary_edge.sum())} on the boundary)")
        print(f"cells:    {mesh.n_cells}")
        print(f"euler:    {mesh.euler_characteristic()}")
        print(f"area:     {mesh.areas.sum():.12g}")
        print(f"h:        {diag['h']:.12g}")
        print(f"min edge / cell diameter: {diag['min_edge_ratio']:.6g}")
        print(f"quasi-uniformity:         {diag['quasi_uniformity_ratio']:.6g}")
        return 0
    raise ConfigError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
