"""Command-line interface: ``rmplate <subcommand> [options]``.

Exit codes: 0 success, 1 validation failure, 2 numerical failure, 64 usage.
"""

import argparse
import sys

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from . import __version__
from .config import (
    MATERIAL_DEFAULTS,
    TOLERANCE_DEFAULTS,
    ConfigError,
    RunConfig,
    build_boundary_functions,
    build_interior_loads,
    build_material,
    read_sections,
)
from .fem import BoundaryData, BoundaryDataError, field_norms
from .geometry import MeshError, make_disk_mesh, make_rect_mesh, mesh_validate, read_mesh, refine, write_mesh
from .linalg import FactorError
from .material import MaterialError, check_tensor_symmetries, ellipticity_constants, verify_ellipticity
from .neumann import DATA_NORM_CAVEAT, IncompatibleDataError, SolverError, stability_ratio
from .regprobe import ChartError
from .report import Plot, ReportError, Series, Table, plain, tau_trend_plot, to_json, write_report
from .uc import TAU_CAVEAT, ThreeSpheresError

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 64

VALIDATION_ERRORS = (MeshError, MaterialError, IncompatibleDataError, ChartError, ThreeSpheresError,
                     BoundaryDataError, ReportError)
NUMERICAL_ERRORS = (SolverError, FactorError, scipy.linalg.LinAlgError, spla.ArpackNoConvergence,
                    spla.ArpackError, FloatingPointError)


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# subcommand options: (flag, section, key, type, default, help)

COMMON = [
    ("--seed", "run", "seed", int, "0", "random seed recorded in every report"),
    ("--report", "output", "report", str, None, "JSON summary path (default: stdout)"),
]
MATERIAL_FLAGS = [
    ("--material", "material", "kind", str, None, "isotropic (iso) | orthotropic | tabulated"),
    ("--lambda", "material", "lambda", str, None, "Lame lambda (number or expression in x, y)"),
    ("--mu", "material", "mu", str, None, "Lame mu (number or expression in x, y)"),
    ("--h", "material", "h", str, None, "plate thickness"),
    ("--rho0", "material", "rho0", str, None, "length scale"),
]
DOMAIN_FLAGS = [
    ("--mesh", "run", "mesh", str, None, "mesh file (ASCII format)"),
    ("--domain", "options", "domain", str, "square", "built-in domain when no mesh: square | disk"),
    ("--refine", "options", "refine", int, "2", "refinements of the built-in domain"),
]

SUBCOMMANDS = {
    "mesh": [
        ("--kind", "options", "kind", str, "rect", "rect | disk"),
        ("--a", "options", "a", float, "0.5", "rectangle half-width"),
        ("--b", "options", "b", float, "0.5", "rectangle half-height"),
        ("--n", "options", "n", int, "2", "rectangle subdivisions (2n x 2n cells)"),
        ("--center", "options", "center", str, "0,0", "centre x,y"),
        ("--radius", "options", "radius", float, "1", "disk radius"),
        ("--circles", "options", "circles", str, "", "comma separated marked radii"),
        ("--n-angular", "options", "n_angular", int, "16", "vertices per circle"),
        ("--refine", "options", "refine", int, "0", "uniform refinements"),
        ("--validate", "options", "validate", str, "", "validate an existing mesh file instead"),
        ("--out", "output", "out", str, None, "mesh file to write"),
    ],
    "solve": DOMAIN_FLAGS + MATERIAL_FLAGS + [
        ("--material-config", None, "material_config", str, None, "INI file with a [material] section"),
        ("--data-config", None, "data_config", str, None, "INI file with a [data] section"),
        ("--Q", "data", "Q", str, None, "transversal force Q(x, y, n1, n2)"),
        ("--M1", "data", "M1", str, None, "couple component M1(x, y, n1, n2)"),
        ("--M2", "data", "M2", str, None, "couple component M2(x, y, n1, n2)"),
        ("--tol", "tolerances", "tol", float, None, "compatibility tolerance"),
        ("--project", "options", "project", "flag", "false", "shift data onto the compatible subspace"),
        ("--field-out", "output", "field", str, None, "JSON file with the nodal solution"),
        ("--out", "output", "out", str, None, "JSON report path"),
    ],
    "korn": DOMAIN_FLAGS[:2] + MATERIAL_FLAGS[4:] + [
        ("--kind", "options", "kind", str, "generalized", "poincare | korn2 | generalized | gobert"),
        ("--refinements", "options", "refinements", int, "2", "number of refinement levels"),
        ("--trials", "options", "trials", int, "100", "random samples for the inequality check"),
        ("--out", "output", "out", str, None, "CSV path (level, eigenvalue, constant)"),
    ],
    "three-spheres": [
        ("--mesh", "run", "mesh", str, None, "mesh file with marked circles"),
        ("--solution", "options", "solution", str, "const-w", "const-w | neumann"),
        ("--index", "options", "index", int, "0", "which random traction solution (neumann)"),
        ("--center", "options", "center", str, "0,0", "centre x,y"),
        ("--radii", "options", "radii", str, "1,0.5,0.25", "R1,R2,R3[,R3',...] (extra values give a trend)"),
        ("--outer", "options", "outer", float, None, "outer radius of the generated disk mesh"),
        ("--n-angular", "options", "n_angular", int, "16", "vertices per circle"),
        ("--refine", "options", "refine", int, "1", "refinements of the generated mesh"),
        ("--out", "output", "out", str, None, "CSV path"),
        ("--svg", "output", "svg", str, None, "SVG plot of tau_emp against 1/|log R3|"),
    ] + MATERIAL_FLAGS,
    "regularity": [
        ("--profile", "options", "profile", str, "circle:1", "flat | parabola:eps | cosine:eps | circle:R"),
        ("--levels", "options", "levels", int, "2", "refinements (levels + 1 meshes)"),
        ("--n", "options", "n", int, "2", "base mesh resolution"),
        ("--sigma", "options", "sigma", float, "0.25", "half-disk radius for difference quotients"),
        ("--data-config", None, "data_config", str, None, "INI [data] section (default: exact smooth solution)"),
        ("--out", "output", "out", str, None, "CSV path"),
    ] + MATERIAL_FLAGS,
    "check-tensors": MATERIAL_FLAGS + [
        ("--material-config", None, "material_config", str, None, "INI file with a [material] section"),
        ("--trials", "options", "trials", int, "100", "random points for the symmetry checks"),
        ("--ellipticity-trials", "options", "ellipticity_trials", int, "1000", "random matrices for the bounds"),
        ("--out", "output", "out", str, None, "JSON report path"),
    ],
    "convergence": MATERIAL_FLAGS[3:] + [
        ("--solution", "options", "solution", str, "smooth", "smooth | homogeneous"),
        ("--levels", "options", "levels", int, "3", "refinements"),
        ("--n", "options", "n", int, "2", "base square resolution"),
        ("--min-rate", "options", "min_rate", float, None, "fail when a final H1 rate is below this"),
        ("--out", "output", "out", str, None, "CSV path"),
        ("--svg", "output", "svg", str, None, "SVG error plot"),
    ],
}


def build_parser():
    p = Parser(prog="rmplate", description="Reissner-Mindlin plate laboratory")
    p.add_argument("--version", action="version", version=f"rmplate {__version__}")
    sub = p.add_subparsers(dest="subcommand", metavar="subcommand", parser_class=Parser)
    sub.required = True
    for name, specs in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=f"{name} experiment")
        sp.add_argument("--config", help="INI run configuration")
        for flag, _sec, key, typ, default, hlp in COMMON + specs:
            if typ == "flag":
                sp.add_argument(flag, dest=key, action="store_const", const="true", default=None, help=hlp)
            else:
                sp.add_argument(flag, dest=key, type=typ, default=None,
                                help=hlp + (f" [{default}]" if default not in (None, "") else ""))
    return p


def make_config(ns):
    """Defaults, then the --config file, then explicit flags."""
    name = ns.subcommand
    specs = COMMON + SUBCOMMANDS[name]
    base = RunConfig(name, material=dict(MATERIAL_DEFAULTS), tolerances=dict(TOLERANCE_DEFAULTS)).echo()
    for _flag, sec, key, _typ, default, _h in specs:
        if sec and sec != "run" and default is not None:
            base[sec].setdefault(key, default)
    if ns.config:
        loaded = read_sections(ns.config)
        for sec, vals in loaded.items():
            if sec not in base:
                raise ConfigError(f"unknown section [{sec}] in {ns.config}")
            base[sec].update(vals)
    if getattr(ns, "material_config", None):
        base["material"].update(read_sections(ns.material_config).get("material", {}))
    if getattr(ns, "data_config", None):
        base["data"].update(read_sections(ns.data_config).get("data", {}))
    for _flag, sec, key, _typ, _d, _h in specs:
        v = getattr(ns, key, None)
        if sec is None or v is None:
            continue
        base[sec][key] = str(v)
    if base["run"].get("subcommand") != name:
        base["run"]["subcommand"] = name
    for k in ("mesh", "seed"):
        if k in base["run"] and base["run"][k] in (None, "None"):
            base["run"][k] = ""
    cfg = RunConfig.from_echo(base)
    cfg.check_paths()
    return cfg


# ---------------------------------------------------------------------------
# helpers


def _floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _bool(text):
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _meta(cfg):
    return {"tool": "rmplate", "version": __version__, "seed": cfg.seed, "config": cfg.echo()}


def _load_mesh(cfg):
    if cfg.mesh:
        mesh = read_mesh(cfg.mesh)
    else:
        dom = cfg.options.get("domain", "square")
        if dom == "square":
            mesh = make_rect_mesh(0.5, 0.5, 2)
        elif dom == "disk":
            mesh = make_disk_mesh((0.0, 0.0), 1.0, [1.0], 16, 0)
        else:
            raise ConfigError(f"unknown domain {dom!r}")
        mesh = refine(mesh, int(cfg.options.get("refine", 0)))
    mesh_validate(mesh, strict=True)
    return mesh


def _emit(cfg, results):
    doc = {**_meta(cfg), "results": plain(results)}
    path = cfg.output.get("report")
    if path:
        write_report(doc, "json", path)
    else:
        sys.stdout.write(to_json(doc))
    return doc


# ---------------------------------------------------------------------------
# subcommands


def cmd_mesh(cfg):
    o = cfg.options
    if o.get("validate"):
        mesh = read_mesh(o["validate"])
    else:
        c = tuple(_floats(o["center"]))
        if o["kind"] == "rect":
            mesh = make_rect_mesh(float(o["a"]), float(o["b"]), int(o["n"]), c)
        elif o["kind"] == "disk":
            r = float(o["radius"])
            circles = sorted(set(_floats(o["circles"]) + [r]))
            mesh = make_disk_mesh(c, r, circles, int(o["n_angular"]), 0)
        else:
            raise ConfigError(f"unknown mesh kind {o['kind']!r}")
        mesh = refine(mesh, int(o["refine"]))
    diag = mesh_validate(mesh)
    if cfg.output.get("out") and diag.ok:
        write_mesh(mesh, cfg.output["out"])
    res = {"diagnostics": diag.as_dict(), "area": mesh.area, "perimeter": mesh.perimeter,
           "circles": [[list(c), r] for c, r in mesh.circle_markers]}
    _emit(cfg, res)
    return EXIT_OK if diag.ok else EXIT_VALIDATION


def cmd_solve(cfg):
    from .neumann import solve_problem

    mesh = _load_mesh(cfg)
    material = build_material(cfg.material, mesh.quad_points.reshape(-1, 2))
    Q, M = build_boundary_functions(cfg.data)
    f, g = build_interior_loads(cfg.data)
    data = BoundaryData.from_functions(mesh, Q, M)
    tol = float(cfg.tolerances["tol"])
    res = {"caveat": DATA_NORM_CAVEAT, "n_triangles": mesh.n_triangles}
    try:
        sol = solve_problem(mesh, material, data, f, g, tol=tol, project=_bool(cfg.options.get("project", "false")))
    except IncompatibleDataError as exc:
        res.update(status="incompatible", message=str(exc), compatibility=exc.report.as_dict())
        _write_json_out(cfg, res)
        sys.stderr.write(f"rmplate: {exc}\n")
        return EXIT_VALIDATION
    norms = field_norms(sol.field, material.rho0)
    res.update(
        status="solved",
        compatibility=sol.compatibility.as_dict(),
        norms=norms.as_dict(),
        stability_ratio=stability_ratio(sol, sol.data, material.rho0) if sum(sol.data.l2_norms()) > 0 else None,
        residual=sol.residual_norm,
        normalization_residual=sol.normalization_residual,
        notes=sol.notes,
    )
    if cfg.output.get("field"):
        sp = sol.field.space
        write_report({**_meta(cfg), "dof_coords": sp.dof_coords, "phi": sol.field.phi, "w": sol.field.w},
                     "json", cfg.output["field"])
    _write_json_out(cfg, res)
    return EXIT_OK


def _write_json_out(cfg, res):
    if cfg.output.get("out"):
        write_report({**_meta(cfg), "results": plain(res)}, "json", cfg.output["out"])
    _emit(cfg, res)


def cmd_korn(cfg):
    from .korn import KINDS, constant_sequence, verify_inequality

    kind = cfg.options["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown constant kind {kind!r}; choose from {', '.join(KINDS)}")
    if cfg.mesh:
        base = read_mesh(cfg.mesh)
    else:
        base = make_rect_mesh(0.5, 0.5, 2) if cfg.options.get("domain", "square") == "square" else make_disk_mesh()
    mesh_validate(base, strict=True)
    rho0 = float(cfg.material.get("rho0", 1))
    reports = constant_sequence(kind, base, int(cfg.options["refinements"]), rho0)
    table = Table(["level", "n_triangles", "eigenvalue", "constant"], meta=_meta(cfg))
    fine = refine(base, int(cfg.options["refinements"]))
    for rep, lev in zip(reports, range(len(reports))):
        table.add(level=lev, n_triangles=base.n_triangles * 4**lev, eigenvalue=rep.eigenvalue, constant=rep.best_constant)
    check = verify_inequality(reports[-1], fine, int(cfg.options["trials"]), cfg.seed)
    if cfg.output.get("out"):
        write_report(table, "csv", cfg.output["out"])
    rel = None
    if len(reports) > 1:
        rel = abs(reports[-1].best_constant - reports[-2].best_constant) / reports[-1].best_constant
    _emit(cfg, {"kind": kind, "rows": table.rows, "relative_change": rel, "inequality": check.as_dict()})
    return EXIT_OK if check.passed else EXIT_VALIDATION


def cmd_three_spheres(cfg):
    from .uc import const_w_field, neumann_disk_solutions, three_spheres

    o = cfg.options
    center = tuple(_floats(o["center"]))
    radii = _floats(o["radii"])
    if len(radii) < 3:
        raise ConfigError("--radii needs R1,R2,R3")
    R1, R2, R3s = radii[0], radii[1], radii[2:]
    if cfg.mesh:
        mesh = read_mesh(cfg.mesh)
    else:
        outer = float(o["outer"]) if o.get("outer") not in (None, "") else max(radii)
        mesh = make_disk_mesh(center, outer, sorted(set(radii + [outer])), int(o["n_angular"]), int(o["refine"]))
    mesh_validate(mesh, strict=True)
    material = build_material(cfg.material)
    rho0 = material.rho0
    from .fem import P2Space

    if o["solution"] == "const-w":
        fld = const_w_field(P2Space.of(mesh), rho0)
    elif o["solution"] == "neumann":
        idx = int(o.get("index", 0))
        fld = neumann_disk_solutions(mesh, material, idx + 1, cfg.seed)[idx].field
    else:
        raise ConfigError(f"unknown solution {o['solution']!r}")
    table = Table(["R1", "R2", "R3", "N1", "N2", "N3", "tau_emp", "inv_log_R3"], meta={**_meta(cfg), "caveat": TAU_CAVEAT})
    rows = []
    for r3 in R3s:
        s = three_spheres(fld, center, R1, R2, r3, rho0)
        x = 1.0 / abs(np.log(r3)) if r3 != 1 else float("inf")
        table.add(R1=R1, R2=R2, R3=r3, N1=s.N[0], N2=s.N[1], N3=s.N[2], tau_emp=s.tau_emp, inv_log_R3=x)
        rows.append((r3, s.tau_emp, x))
    from .uc import TauTrend

    t = np.array([r[1] for r in rows])
    x = np.array([r[2] for r in rows])
    slope = float(x @ t / (x @ x))
    corr = float(np.corrcoef(x, t)[0, 1]) if len(rows) >= 3 and np.ptp(t) > 0 and np.ptp(x) > 0 else float("nan")
    trend = TauTrend(rows, slope, corr)
    if cfg.output.get("out"):
        write_report(table, "csv", cfg.output["out"])
    if cfg.output.get("svg"):
        write_report(tau_trend_plot(trend, _meta(cfg)), "svg", cfg.output["svg"])
    _emit(cfg, {"rows": table.rows, "trend": trend.as_dict(), "caveat": TAU_CAVEAT})
    return EXIT_OK


def cmd_regularity(cfg):
    from .mms import homogeneous_solution
    from .regprobe import boundary_chart, check_pushforward, difference_quotient_norms, h2_ratio, probe_domain

    o = cfg.options
    material = build_material(cfg.material)
    meshes, anchor = probe_domain(o["profile"], int(o["n"]), int(o["levels"]))
    if any(k in cfg.data for k in ("Q", "M1", "M2")):
        Q, M = build_boundary_functions(cfg.data)
        source = "configured data"
    else:
        ms = homogeneous_solution(material.h, float(cfg.material.get("lambda", 1)), float(cfg.material.get("mu", 1)), material.rho0)
        Q, M = ms.boundary_functions()
        source = "tractions of an exact smooth load-free solution"
    sigma = float(o["sigma"])
    fmap = boundary_chart(o["profile"], max(2 * sigma, 0.5))
    push = check_pushforward(material, fmap, seed=cfg.seed, origin=anchor)
    table, sol = h2_ratio(meshes, material, Q, M)
    quot = difference_quotient_norms(sol.field, fmap=fmap, origin=anchor, sigma=sigma)
    out = Table(["level", "n_triangles", "h2_phi", "h2_w", "data_M", "data_Q", "ratio"], meta={**_meta(cfg), "caveat": table.caveat})
    for r in table.rows:
        out.add(**r.as_dict())
    if cfg.output.get("out"):
        write_report(out, "csv", cfg.output["out"])
    _emit(cfg, {"data": source, "h2": table.as_dict(), "pushforward": push.as_dict(),
                "difference_quotients": quot.as_dict(), "chart": {"c1": fmap.c1, "c2": fmap.c2}})
    ok = push.passed and table.growth <= table.growth_limit
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_check_tensors(cfg):
    material = build_material(cfg.material)
    sym = check_tensor_symmetries(material, int(cfg.options["trials"]), cfg.seed)
    res = {"kind": material.kind, "symmetry": sym.as_dict()}
    ok = sym.passed
    try:
        c = ellipticity_constants(material)
        ell = verify_ellipticity(material, int(cfg.options["ellipticity_trials"]), cfg.seed)
        res["constants"] = {"sigma0": c.sigma0, "sigma1": c.sigma1, "xi0": c.xi0, "xi1": c.xi1}
        res["ellipticity"] = ell
        ok = ok and ell.passed and ell.shear_passed
    except MaterialError as exc:
        res["ellipticity"] = {"skipped": str(exc)}
    if material.kind == "isotropic":
        pts = np.random.default_rng(cfg.seed).uniform(-1, 1, (100, 2))
        S = material.shear(pts)
        hmu = material.h * material.lame.mu(pts)
        res["shear_minus_h_mu"] = float(np.abs(S - hmu[:, None, None] * np.eye(2)).max())
    if cfg.output.get("out"):
        write_report({**_meta(cfg), "results": plain(res)}, "json", cfg.output["out"])
    _emit(cfg, res)
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_convergence(cfg):
    from .mms import convergence_study, default_solution, homogeneous_solution, observed_rates

    o = cfg.options
    mat = cfg.material
    make = {"smooth": default_solution, "homogeneous": homogeneous_solution}.get(o["solution"])
    if make is None:
        raise ConfigError(f"unknown solution {o['solution']!r}")
    ms = make(h=float(mat.get("h", 0.1)), rho0=float(mat.get("rho0", 1)))
    rows = convergence_study(make_rect_mesh(0.5, 0.5, int(o["n"])), int(o["levels"]), ms)
    keys = ["phi_L2", "phi_H1", "w_L2", "w_H1"]
    table = Table(["level", "mesh_size", "ndof"] + keys, [r.as_dict() for r in rows], _meta(cfg))
    rates = {k: observed_rates(rows, k) for k in keys}
    if cfg.output.get("out"):
        write_report(table, "csv", cfg.output["out"])
    if cfg.output.get("svg"):
        hs = [r.mesh_size for r in rows]
        plot = Plot("manufactured solution errors", "mesh size", "error",
                    [Series(k, hs, [getattr(r, k) for r in rows]) for k in keys], True, True, _meta(cfg))
        write_report(plot, "svg", cfg.output["svg"])
    _emit(cfg, {"rows": table.rows, "rates": rates})
    lim = o.get("min_rate")
    if lim not in (None, "") and len(rows) > 1:
        if min(rates["phi_H1"][-1], rates["w_H1"][-1]) < float(lim):
            return EXIT_VALIDATION
    return EXIT_OK


HANDLERS = {
    "mesh": cmd_mesh,
    "solve": cmd_solve,
    "korn": cmd_korn,
    "three-spheres": cmd_three_spheres,
    "regularity": cmd_regularity,
    "check-tensors": cmd_check_tensors,
    "convergence": cmd_convergence,
}


def run(argv=None):
    """Parse ``argv``, run the subcommand and return the exit code."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        cfg = make_config(ns)
        return HANDLERS[cfg.subcommand](cfg)
    except ConfigError as exc:
        sys.stderr.write(f"rmplate: {exc}\n")
        return EXIT_USAGE
    except VALIDATION_ERRORS as exc:
        sys.stderr.write(f"rmplate: validation failure: {exc}\n")
        return EXIT_VALIDATION
    except NUMERICAL_ERRORS as exc:
        sys.stderr.write(f"rmplate: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except ValueError as exc:
        sys.stderr.write(f"rmplate: invalid input: {exc}\n")
        return EXIT_VALIDATION


def main():
    sys.exit(run())
