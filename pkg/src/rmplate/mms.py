"""Manufactured solutions for isotropic plates, built symbolically with sympy.

Given (phi, w) and Lame moduli as expressions in ``x`` and ``y``, the loads
that make (phi, w) an exact solution are

    f = -div(P grad phi) + S (phi + grad w),   g = -div(S (phi + grad w)),
    Q = S (phi + grad w) . n,                  M = (P grad phi) n.
"""

from dataclasses import dataclass, field

import numpy as np
import sympy

from .fem import BoundaryData, PlateField
from .geometry import refine
from .material import LameField, isotropic_plate

X, Y = sympy.symbols("x y", real=True)


def _lambdify(expr):
    fn = sympy.lambdify((X, Y), expr, "numpy")

    def call(pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        return np.broadcast_to(np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float), (len(pts),)).copy()

    return call


def _stack(fns):
    def call(pts):
        return np.stack([f(pts) for f in fns], axis=-1)

    return call


@dataclass
class ManufacturedSolution:
    phi1: sympy.Expr
    phi2: sympy.Expr
    w: sympy.Expr
    lam: object = 1
    mu: object = 1
    h: float = 0.1
    rho0: float = 1.0
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        sym = lambda e: sympy.sympify(e, locals={"x": X, "y": Y})
        self.phi1, self.phi2, self.w = sym(self.phi1), sym(self.phi2), sym(self.w)
        self.lam, self.mu = sym(self.lam), sym(self.mu)

    # -- symbolic pieces -------------------------------------------------
    @property
    def constant_moduli(self):
        return self.lam.free_symbols == set() and self.mu.free_symbols == set()

    def _symbolic(self):
        if "sym" in self._cache:
            return self._cache["sym"]
        lam, mu, h = self.lam, self.mu, sympy.nsimplify(self.h)
        E = mu * (2 * mu + 3 * lam) / (mu + lam)
        nu = lam / (2 * (mu + lam))
        B = E * h**3 / (12 * (1 - nu**2))
        S = h * mu
        phi = sympy.Matrix([self.phi1, self.phi2])
        grad_phi = phi.jacobian([X, Y])
        div_phi = grad_phi.trace()
        sym_grad = (grad_phi + grad_phi.T) / 2
        Mt = B * ((1 - nu) * sym_grad + nu * div_phi * sympy.eye(2))
        shear = S * (phi + sympy.Matrix([sympy.diff(self.w, X), sympy.diff(self.w, Y)]))
        div_M = sympy.Matrix([sympy.diff(Mt[i, 0], X) + sympy.diff(Mt[i, 1], Y) for i in range(2)])
        f = -div_M + shear
        g = -(sympy.diff(shear[0], X) + sympy.diff(shear[1], Y))
        out = dict(Mt=Mt, shear=shear, f=f, g=g, grad_phi=grad_phi)
        self._cache["sym"] = out
        return out

    # -- numeric callables --------------------------------------------------
    def _fn(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def phi(self):
        return self._fn("phi", lambda: _stack([_lambdify(self.phi1), _lambdify(self.phi2)]))

    @property
    def w_fn(self):
        return self._fn("w", lambda: _lambdify(self.w))

    @property
    def grad_phi(self):
        def build():
            G = self._symbolic()["grad_phi"]
            fns = [[_lambdify(G[i, j]) for j in range(2)] for i in range(2)]
            return lambda p: np.stack([np.stack([fns[i][j](p) for j in range(2)], -1) for i in range(2)], -2)

        return self._fn("grad_phi", build)

    @property
    def grad_w(self):
        return self._fn("grad_w", lambda: _stack([_lambdify(sympy.diff(self.w, X)), _lambdify(sympy.diff(self.w, Y))]))

    @property
    def f(self):
        return self._fn("f", lambda: _stack([_lambdify(e) for e in self._symbolic()["f"]]))

    @property
    def g(self):
        return self._fn("g", lambda: _lambdify(self._symbolic()["g"]))

    def is_homogeneous(self, tol=1e-12):
        s = self._symbolic()
        return all(sympy.simplify(e) == 0 for e in list(s["f"]) + [s["g"]])

    def boundary_functions(self):
        """Callables Q(x, n) and M(x, n) of the exact tractions."""
        s = self._symbolic()
        shear = [_lambdify(e) for e in s["shear"]]
        Mt = [[_lambdify(s["Mt"][i, j]) for j in range(2)] for i in range(2)]

        def Q(x, n):
            return shear[0](x) * n[:, 0] + shear[1](x) * n[:, 1]

        def M(x, n):
            return np.column_stack([Mt[i][0](x) * n[:, 0] + Mt[i][1](x) * n[:, 1] for i in range(2)])

        return Q, M

    def boundary_data(self, mesh):
        return BoundaryData.from_functions(mesh, *self.boundary_functions())

    def material(self, sample_points=None):
        if self.constant_moduli:
            lame = LameField.uniform(float(self.lam), float(self.mu))
        else:
            lam_f, mu_f = _lambdify(self.lam), _lambdify(self.mu)
            pts = sample_points if sample_points is not None else np.random.default_rng(0).uniform(-1, 1, (400, 2))
            lv, mv = lam_f(pts), mu_f(pts)
            lame = LameField(lam_f, mu_f, alpha0=mv.min(), alpha1=10 * (abs(lv).max() + abs(mv).max()) + 10,
                             gamma0=(2 * mv + 3 * lv).min())
        return isotropic_plate(lame, self.h, self.rho0, sample_points)

    def interpolate(self, space):
        return PlateField.interpolate(space, self.phi, self.w_fn)

    def normalized_exact(self, mesh):
        """(a, b) such that (phi - b, w + b.x + a) has zero means on ``mesh``."""
        x = mesh.quad_points.reshape(-1, 2)
        qw = mesh.quad_weights.ravel()
        area = qw.sum()
        b = qw @ self.phi(x) / area
        a = -(qw @ (self.w_fn(x) + x @ b)) / area
        return a, b


def default_solution(h=0.1, lam=1, mu=1, rho0=1.0):
    """Smooth non-polynomial pair used for convergence studies."""
    pi = sympy.pi
    return ManufacturedSolution(
        sympy.sin(pi * X) * sympy.cos(pi * Y / 2),
        sympy.exp(X) * sympy.sin(pi * Y),
        sympy.cos(pi * X) * sympy.exp(Y / 2) + X**2 * Y,
        lam, mu, h, rho0, name="smooth",
    )


def homogeneous_solution(h=0.1, lam=1, mu=1, rho0=1.0, eps=1.0):
    """Exact solution of the load-free system with constant moduli.

    With g harmonic and Delta p = (S/B) g, the pair phi = grad p, w = g - p
    satisfies both equations (S = h mu, B the bending stiffness).
    Here g = eps e^x cos y and p = (S/B) eps x e^x cos(y) / 2.
    """
    lam_s, mu_s = sympy.nsimplify(lam), sympy.nsimplify(mu)
    hs = sympy.nsimplify(h)
    E = mu_s * (2 * mu_s + 3 * lam_s) / (mu_s + lam_s)
    nu = lam_s / (2 * (mu_s + lam_s))
    B = E * hs**3 / (12 * (1 - nu**2))
    ratio = hs * mu_s / B
    e = sympy.nsimplify(eps)
    g = e * sympy.exp(X) * sympy.cos(Y)
    p = ratio * e * X * sympy.exp(X) * sympy.cos(Y) / 2
    # scale so that phi and w are of comparable size
    p_scale = 1 / ratio
    return ManufacturedSolution(
        sympy.diff(p, X) * p_scale, sympy.diff(p, Y) * p_scale, (g - p) * p_scale,
        lam, mu, h, rho0, name="homogeneous",
    )


@dataclass
class ErrorRow:
    level: int
    mesh_size: float
    ndof: int
    phi_L2: float
    phi_H1: float
    w_L2: float
    w_H1: float

    def as_dict(self):
        return dict(self.__dict__)


def max_edge_length(mesh):
    e = mesh.edges
    return float(np.hypot(*(mesh.nodes[e[:, 0]] - mesh.nodes[e[:, 1]]).T).max())


def solution_errors(sol_field, ms):
    """L2 and rho0-scaled H1 errors against the normalised exact pair."""
    space = sol_field.space
    mesh = space.mesh
    a, b = ms.normalized_exact(mesh)
    x = mesh.quad_points.reshape(-1, 2)
    m = mesh.n_triangles
    qw = mesh.quad_weights
    phi_e = (ms.phi(x) - b).reshape(m, 7, 2)
    gphi_e = ms.grad_phi(x).reshape(m, 7, 2, 2)
    w_e = (ms.w_fn(x) + x @ b + a).reshape(m, 7)
    gw_e = (ms.grad_w(x) + b).reshape(m, 7, 2)
    dphi = space.values(sol_field.phi) - phi_e
    dgphi = space.gradients(sol_field.phi) - gphi_e
    dw = space.values(sol_field.w) - w_e
    dgw = space.gradients(sol_field.w) - gw_e
    integ = lambda v: float((qw * v).sum())
    rho0 = ms.rho0
    pl2, pg = integ((dphi**2).sum(-1)), integ((dgphi**2).sum((-1, -2)))
    wl2, wg = integ(dw**2), integ((dgw**2).sum(-1))
    return tuple(float(np.sqrt(v)) for v in (pl2, pl2 + rho0**2 * pg, wl2, wl2 + rho0**2 * wg))


def solve_manufactured(mesh, ms, material=None):
    from .neumann import solve_problem

    material = material or ms.material()
    data = ms.boundary_data(mesh)
    f = None if ms.name == "homogeneous" else ms.f
    g = None if ms.name == "homogeneous" else ms.g
    return solve_problem(mesh, material, data, f=f, g=g, force=True)


def convergence_study(base_mesh, levels, ms, material=None):
    """Errors on ``base_mesh`` refined 0..levels times, with observed rates."""
    material = material or ms.material()
    rows = []
    for lev in range(levels + 1):
        mesh = base_mesh if lev == 0 else refine(base_mesh, lev)
        sol = solve_manufactured(mesh, ms, material)
        e = solution_errors(sol.field, ms)
        rows.append(ErrorRow(lev, max_edge_length(mesh), 3 * sol.field.space.ndof, *e))
    return rows


def observed_rates(rows, key):
    out = []
    for a, b in zip(rows[:-1], rows[1:]):
        out.append(float(np.log(getattr(a, key) / getattr(b, key)) / np.log(a.mesh_size / b.mesh_size)))
    return out
