"""INI run configurations and builders for materials and boundary data.

A configuration is a flat key-value file with sections::

    [run]        subcommand, mesh, seed
    [material]   kind = isotropic | orthotropic | tabulated, plus parameters
    [data]       Q, M1, M2 (and optionally f1, f2, g) as expressions
    [tolerances] tol, rtol
    [output]     out, svg, report
    [options]    subcommand specific values

Expressions are parsed with sympy in the variables ``x``, ``y`` and, for
boundary data, the outward normal ``n1``, ``n2``.
"""

import configparser
import io
import os
from dataclasses import dataclass, field

import numpy as np
import sympy

from .material import LameField, MaterialError, isotropic_plate, orthotropic_plate, tabulated_plate
from .material import EllipticityConstants

SECTIONS = ("run", "material", "data", "tolerances", "output", "options")
MATERIAL_DEFAULTS = {"kind": "isotropic", "lambda": "1", "mu": "1", "h": "0.1", "rho0": "1"}
TOLERANCE_DEFAULTS = {"tol": "1e-8", "rtol": "1e-10"}

SYMBOLS = {name: sympy.Symbol(name, real=True) for name in ("x", "y", "n1", "n2")}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    mesh: str = ""
    seed: int = 0
    material: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.seed = int(self.seed)
        for name in ("material", "data", "tolerances", "output", "options"):
            setattr(self, name, {str(k): str(v) for k, v in getattr(self, name).items()})
        for k, v in self.tolerances.items():
            try:
                ok = float(v) > 0
            except ValueError:
                ok = False
            if not ok:
                raise ConfigError(f"tolerance {k} = {v!r} must be a positive number")

    def echo(self):
        """Nested dict of strings, the form stored in reports."""
        return {
            "run": {"subcommand": self.subcommand, "mesh": self.mesh, "seed": str(self.seed)},
            "material": dict(self.material),
            "data": dict(self.data),
            "tolerances": dict(self.tolerances),
            "output": dict(self.output),
            "options": dict(self.options),
        }

    @classmethod
    def from_echo(cls, echo):
        run = echo.get("run", {})
        if "subcommand" not in run:
            raise ConfigError("[run] section needs a subcommand")
        return cls(
            run["subcommand"], run.get("mesh", ""), int(run.get("seed", 0)),
            *(dict(echo.get(s, {})) for s in SECTIONS[1:]),
        )

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for sec, vals in self.echo().items():
            cp[sec] = {k: vals[k] for k in sorted(vals)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed configuration: {exc}") from exc
        unknown = set(cp.sections()) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown sections {sorted(unknown)}")
        return cls.from_echo({s: dict(cp[s]) for s in cp.sections()})

    def check_paths(self):
        """Raise if an input path does not exist or an output directory is missing."""
        if self.mesh and not os.path.exists(self.mesh):
            raise ConfigError(f"mesh file {self.mesh!r} not found")
        for k, p in self.output.items():
            d = os.path.dirname(os.path.abspath(p))
            if p and not os.path.isdir(d):
                raise ConfigError(f"output directory for {k} = {p!r} does not exist")


def read_sections(path):
    """All sections of an INI file as dicts (missing file -> ConfigError)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration {path}: {exc}") from exc
    return {s: dict(cp[s]) for s in cp.sections()}


# ---------------------------------------------------------------------------
# expressions


def parse_expr(text, allowed=("x", "y")):
    try:
        expr = sympy.sympify(text, locals={k: SYMBOLS[k] for k in SYMBOLS})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse expression {text!r}") from exc
    extra = {str(s) for s in expr.free_symbols} - set(allowed)
    if extra:
        raise ConfigError(f"expression {text!r} uses unknown symbols {sorted(extra)}")
    return expr


def compile_expr(text, allowed=("x", "y")):
    """Vectorised callable of the allowed symbols."""
    expr = parse_expr(text, allowed)
    fn = sympy.lambdify([SYMBOLS[k] for k in allowed], expr, "numpy")

    def call(*args):
        args = [np.asarray(a, dtype=float) for a in args]
        n = max(a.size for a in args) if args else 1
        return np.broadcast_to(np.asarray(fn(*args), dtype=float), (n,)).copy()

    return call


def spatial(text):
    f = compile_expr(text, ("x", "y"))
    return lambda p: f(np.asarray(p, dtype=float).reshape(-1, 2)[:, 0], np.asarray(p, dtype=float).reshape(-1, 2)[:, 1])


def _float(sec, key, default=None):
    v = sec.get(key, default)
    if v is None:
        raise ConfigError(f"missing material parameter {key!r}")
    try:
        return float(v)
    except ValueError as exc:
        raise ConfigError(f"material parameter {key} = {v!r} is not a number") from exc


def build_material(section, sample_points=None):
    """PlateMaterial from a [material] section."""
    sec = {**MATERIAL_DEFAULTS, **section}
    kind = sec["kind"].strip().lower()
    h, rho0 = _float(sec, "h"), _float(sec, "rho0")
    try:
        if kind in ("isotropic", "iso"):
            lam_s, mu_s = sec["lambda"], sec["mu"]
            le, me = parse_expr(lam_s), parse_expr(mu_s)
            if not le.free_symbols and not me.free_symbols:
                return isotropic_plate(LameField.uniform(float(le), float(me)), h, rho0)
            pts = sample_points
            if pts is None:
                g = np.linspace(-1, 1, 41)
                pts = np.array(np.meshgrid(g, g)).reshape(2, -1).T
            lam, mu = spatial(lam_s), spatial(mu_s)
            lv, mv = lam(pts), mu(pts)
            a0 = _float(sec, "alpha0", mv.min())
            g0 = _float(sec, "gamma0", (2 * mv + 3 * lv).min())
            a1 = _float(sec, "alpha1", 2.0 * (np.abs(lv).max() + np.abs(mv).max()) + 10.0)
            return isotropic_plate(LameField(lam, mu, a0, a1, g0), h, rho0, pts)
        if kind == "orthotropic":
            get = lambda k: _float(sec, k) if k in sec else None
            return orthotropic_plate(_float(sec, "E1"), _float(sec, "E2"), _float(sec, "nu12"),
                                     _float(sec, "G12"), h, rho0, get("G13"), get("G23"))
        if kind == "tabulated":
            P = np.array(sec["P"].split(), dtype=float)
            S = np.array(sec["S"].split(), dtype=float)
            consts = None
            if all(k in sec for k in ("sigma0", "sigma1", "xi0", "xi1")):
                consts = EllipticityConstants(*(_float(sec, k) for k in ("sigma0", "sigma1", "xi0", "xi1")))
            return tabulated_plate(P, S, h, rho0, consts)
    except MaterialError:
        raise
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad material section: {exc}") from exc
    raise ConfigError(f"unknown material kind {kind!r}")


def build_boundary_functions(section):
    """(Q(x, n), M(x, n)) from a [data] section; missing entries are zero."""
    allowed = ("x", "y", "n1", "n2")
    fq = compile_expr(section.get("Q", "0"), allowed)
    f1 = compile_expr(section.get("M1", "0"), allowed)
    f2 = compile_expr(section.get("M2", "0"), allowed)

    def Q(x, n):
        return fq(x[:, 0], x[:, 1], n[:, 0], n[:, 1])

    def M(x, n):
        return np.column_stack([f(x[:, 0], x[:, 1], n[:, 0], n[:, 1]) for f in (f1, f2)])

    return Q, M


def build_interior_loads(section):
    """(f, g) callables, or (None, None) when the section has no loads."""
    if not any(k in section for k in ("f1", "f2", "g")):
        return None, None
    a, b = spatial(section.get("f1", "0")), spatial(section.get("f2", "0"))
    g = spatial(section.get("g", "0"))
    return (lambda p: np.column_stack([a(p), b(p)])), g
