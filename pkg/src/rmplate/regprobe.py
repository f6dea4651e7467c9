"""Boundary flattening charts, transformed coefficients, difference quotients
and discrete H2 ratio checks."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import quadrature as quad
from .fem import BoundaryData, p2_basis_grad
from .geometry import Mesh, make_disk_mesh, make_rect_mesh, mesh_validate, refine


class ChartError(ValueError):
    pass


# ---------------------------------------------------------------------------
# boundary profiles and charts


@dataclass(frozen=True)
class Profile:
    """Graph x2 = psi(x1) with psi(0) = psi'(0) = 0."""

    name: str
    psi: Callable
    dpsi: Callable
    ddpsi: Callable


def parse_profile(spec):
    """``flat``, ``parabola:eps``, ``cosine:eps`` or ``circle:R``."""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    try:
        p = float(arg) if arg else None
    except ValueError as exc:
        raise ChartError(f"bad profile parameter in {spec!r}") from exc
    if kind == "flat":
        z = lambda t: np.zeros_like(np.asarray(t, dtype=float))
        return Profile("flat", z, z, z)
    if p is None:
        raise ChartError(f"profile {kind!r} needs a parameter, e.g. {kind}:0.1")
    if kind == "parabola":
        return Profile(spec, lambda t: p * np.asarray(t) ** 2, lambda t: 2 * p * np.asarray(t),
                       lambda t: np.full_like(np.asarray(t, dtype=float), 2 * p))
    if kind == "cosine":
        return Profile(spec, lambda t: p * (1 - np.cos(t)), lambda t: p * np.sin(t), lambda t: p * np.cos(t))
    if kind == "circle":
        if p <= 0:
            raise ChartError("circle radius must be positive")
        R = p
        return Profile(
            spec,
            lambda t: R - np.sqrt(R**2 - np.asarray(t) ** 2),
            lambda t: np.asarray(t) / np.sqrt(R**2 - np.asarray(t) ** 2),
            lambda t: R**2 / (R**2 - np.asarray(t) ** 2) ** 1.5,
        )
    raise ChartError(f"unknown profile {spec!r}")


@dataclass
class FlatteningMap:
    """y = T(x) = (x1, x2 - psi(x1)) on the box |x1| < sigma, |x2| < sigma.

    L = dT/dx = [[1, 0], [-psi', 1]], iota = |det L| = 1 and
    iota* = sqrt(1 + psi'^2) (arc-length factor of the boundary).
    """

    profile: Profile
    sigma: float
    c1: float
    c2: float

    def T(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        return np.column_stack([x[:, 0], x[:, 1] - self.profile.psi(x[:, 0])])

    def T_inv(self, y):
        y = np.asarray(y, dtype=float).reshape(-1, 2)
        return np.column_stack([y[:, 0], y[:, 1] + self.profile.psi(y[:, 0])])

    def L(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        out = np.zeros((len(x), 2, 2))
        out[:, 0, 0] = out[:, 1, 1] = 1.0
        out[:, 1, 0] = -self.profile.dpsi(x[:, 0])
        return out

    def iota(self, x):
        return np.abs(np.linalg.det(self.L(x)))

    def iota_star(self, x):
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        return np.sqrt(1.0 + self.profile.dpsi(x[:, 0]) ** 2)


def boundary_chart(profile, sigma=0.5, samples=401):
    """Chart flattening {x2 > psi(x1)} near the origin."""
    if isinstance(profile, str):
        profile = parse_profile(profile)
    if not sigma > 0:
        raise ChartError("sigma must be positive")
    if abs(float(profile.psi(0.0))) > 1e-14 or abs(float(profile.dpsi(0.0))) > 1e-14:
        raise ChartError("profile must satisfy psi(0) = 0 and psi'(0) = 0")
    t = np.linspace(-sigma, sigma, samples)
    with np.errstate(invalid="ignore", divide="ignore"):
        psi = profile.psi(t)
        dpsi = profile.dpsi(t)
    if not (np.isfinite(psi).all() and np.isfinite(dpsi).all()):
        raise ChartError("profile undefined on the chart interval")
    if np.abs(psi).max() >= sigma:
        raise ChartError(f"|psi| reaches {np.abs(psi).max():.3g}, outside the chart box of half-size {sigma}")
    istar = np.sqrt(1 + dpsi**2)
    return FlatteningMap(profile, float(sigma), float(min(1.0, istar.min())), float(max(1.0, istar.max())))


# ---------------------------------------------------------------------------
# transformed coefficients


@dataclass
class Pushforward:
    P: np.ndarray  # (n, 2, 2, 2, 2)
    S: np.ndarray  # (n, 2, 2)
    points: np.ndarray  # y

    def apply(self, A):
        return np.einsum("nilrk,nrk->nil", self.P, A)


def pushforward_tensors(material, fmap, y, origin=(0.0, 0.0)):
    """P~_ilrk(y) = sum P_ijrs(x) L_ks L_lj / iota and S~ = S(x) / iota, x = T^-1(y).

    ``origin`` shifts the chart to a boundary point of the physical domain.
    """
    y = np.asarray(y, dtype=float).reshape(-1, 2)
    xl = fmap.T_inv(y)
    x = xl + np.asarray(origin, dtype=float)
    L = fmap.L(xl)
    io = fmap.iota(xl)
    P = np.asarray(material.bending(x), dtype=float)
    S = np.asarray(material.shear(x), dtype=float)
    Pt = np.einsum("nijrs,nks,nlj->nilrk", P, L, L) / io[:, None, None, None, None]
    return Pushforward(Pt, S / io[:, None, None], y)


def transform_data(fmap, Q=None, M=None, origin=(0.0, 0.0)):
    """Q~(y) = Q(T^-1 y) iota*, M~(y) = M(T^-1 y) iota* (as callables of y)."""
    o = np.asarray(origin, dtype=float)

    def wrap(fn):
        if fn is None:
            return None

        def out(y):
            xl = fmap.T_inv(y)
            s = fmap.iota_star(xl)
            v = np.asarray(fn(xl + o), dtype=float)
            return v * (s if v.ndim == 1 else s[:, None])

        return out

    return wrap(Q), wrap(M)


@dataclass
class PushforwardReport:
    major_symmetry_error: float
    kappa0: float
    worst_pair: tuple
    identity_exact: bool
    passed: bool

    def as_dict(self):
        return {
            "major_symmetry_error": self.major_symmetry_error,
            "kappa0": self.kappa0,
            "worst_pair": [list(map(float, v)) for v in self.worst_pair],
            "identity_exact": self.identity_exact,
            "pass": self.passed,
        }


def check_pushforward(material, fmap, trials=100, pairs=1000, seed=0, origin=(0.0, 0.0), tol=1e-12):
    """Major symmetry P~A.B = A.P~B and sampled rank-one ellipticity of P~."""
    rng = np.random.default_rng(seed)
    s = fmap.sigma
    y = np.column_stack([rng.uniform(-s / 2, s / 2, trials), rng.uniform(0, s / 2, trials)])
    pf = pushforward_tensors(material, fmap, y, origin)
    A = rng.standard_normal((trials, 2, 2))
    B = rng.standard_normal((trials, 2, 2))
    lhs = np.einsum("nil,nil->n", pf.apply(A), B)
    rhs = np.einsum("nil,nil->n", A, pf.apply(B))
    scale = np.einsum("nilrk->n", np.abs(pf.P)) * np.abs(A).max() * np.abs(B).max()
    sym_err = float((np.abs(lhs - rhs) / scale).max())

    yp = np.column_stack([rng.uniform(-s / 2, s / 2, pairs), rng.uniform(0, s / 2, pairs)])
    pfp = pushforward_tensors(material, fmap, yp, origin)
    a = rng.standard_normal((pairs, 2))
    b = rng.standard_normal((pairs, 2))
    a /= np.linalg.norm(a, axis=1)[:, None]
    b /= np.linalg.norm(b, axis=1)[:, None]
    ab = np.einsum("ni,nl->nil", a, b)
    vals = np.einsum("nil,nil->n", pfp.apply(ab), ab)
    i = int(np.argmin(vals))

    ident = boundary_chart("flat", s)
    pid = pushforward_tensors(material, ident, y, origin)
    x = y + np.asarray(origin, dtype=float)
    exact = np.array_equal(pid.P, np.asarray(material.bending(x), dtype=float)) and np.array_equal(
        pid.S, np.asarray(material.shear(x), dtype=float)
    )
    return PushforwardReport(sym_err, float(vals[i]), (a[i], b[i]), exact, sym_err <= tol and vals[i] > 0)


# ---------------------------------------------------------------------------
# tangential difference quotients


def tangential_difference(f, s, support=None):
    """(tau_{1,s} f)(y) = (f(y + s e1) - f(y)) / s, with f extended by zero off ``support``."""
    if s == 0 or abs(s) > 1.0 / 16.0:
        raise ValueError("step must satisfy 0 < |s| <= 1/16")

    def fz(y):
        y = np.asarray(y, dtype=float).reshape(-1, 2)
        v = np.asarray(f(y), dtype=float)
        if support is not None:
            mask = np.asarray(support(y), dtype=bool)
            v = np.where(mask.reshape((-1,) + (1,) * (v.ndim - 1)), v, 0.0)
        return v

    def out(y):
        y = np.asarray(y, dtype=float).reshape(-1, 2)
        return (fz(y + np.array([s, 0.0])) - fz(y)) / s

    return out


def field_function(fld, origin=(0.0, 0.0), fmap=None):
    """Callable y -> (phi_1, phi_2, w) of a P2 field, optionally through a chart."""
    space = fld.space
    coeffs = np.column_stack([fld.phi, fld.w])
    o = np.asarray(origin, dtype=float)

    def fn(y):
        y = np.asarray(y, dtype=float).reshape(-1, 2)
        x = (fmap.T_inv(y) if fmap is not None else y) + o
        return space.evaluate(coeffs, x, nearest=True)

    return fn


def half_disk_quadrature(sigma, n_r=8, n_t=16):
    """Points and weights on B_sigma^+ = {|y| < sigma, y2 > 0}."""
    r, wr = quad.gauss_legendre(n_r, 0.0, sigma)
    t, wt = quad.gauss_legendre(n_t, 0.0, np.pi)
    R, Tt = np.meshgrid(r, t, indexing="ij")
    W = np.outer(wr * r, wt)
    pts = np.column_stack([(R * np.cos(Tt)).ravel(), (R * np.sin(Tt)).ravel()])
    return pts, W.ravel()


@dataclass
class QuotientNorms:
    steps: list
    norms: list
    derivative_norm: float
    spread: float

    def as_dict(self):
        return dict(self.__dict__)


def difference_quotient_norms(fld, steps=(1 / 16, 1 / 32, 1 / 64), fmap=None, origin=(0.0, 0.0), sigma=0.25):
    """L2(B_sigma^+) norms of tau_{1,s}(u o T^-1) for u = (phi, w).

    ``spread`` is max/min of the norms over the steps; ``derivative_norm`` is
    the L2 norm of the y1-derivative, the s -> 0 limit.
    """
    fmap = fmap or boundary_chart("flat", max(sigma, 1e-3) * 2)
    pts, w = half_disk_quadrature(sigma)
    fn = field_function(fld, origin, fmap)
    norms = []
    for s in steps:
        v = tangential_difference(fn, s)(pts)
        norms.append(float(np.sqrt(w @ (v**2).sum(-1))))
    eps = 1e-6
    d = (fn(pts + [eps, 0.0]) - fn(pts - [eps, 0.0])) / (2 * eps)
    dn = float(np.sqrt(w @ (d**2).sum(-1)))
    return QuotientNorms(list(map(float, steps)), norms, dn, max(norms) / max(min(norms), 1e-300))


# ---------------------------------------------------------------------------
# discrete H2 norms and ratios


def interior_edge_jumps(space, coeffs):
    """sum_e |e|^-1 int_e [d_n u]^2 over interior edges (u scalar P2)."""
    mesh = space.mesh
    et = mesh.edge_triangles
    inner = np.flatnonzero(et[:, 1] >= 0)
    e = mesh.edges[inner]
    a, b = mesh.nodes[e[:, 0]], mesh.nodes[e[:, 1]]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    nrm = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    pts = quad.segment_points(a, b)  # (ne, 3, 2)
    grads = []
    for side in (0, 1):
        tris = np.repeat(et[inner, side], 3)
        flat = pts.reshape(-1, 2)
        lam = space.barycentric(flat, tris)
        G = p2_basis_grad(lam[:, None, :], space.grad_lambda[tris])[:, 0]
        grads.append(np.einsum("nad,na->nd", G, coeffs[space.elem_dofs[tris]]).reshape(-1, 3, 2))
    jump = np.einsum("egd,ed->eg", grads[0] - grads[1], nrm)
    total = (quad.EDGE_WEIGHTS[None, :] * jump**2).sum(1)  # |e| (int / |e|) / |e|
    return float(total.sum())


def discrete_h2_norm(space, coeffs, rho0=1.0):
    """(||u||^2 + rho0^2 ||grad u||^2 + rho0^4 (broken ||D^2 u||^2 + jump term))^(1/2)."""
    mesh = space.mesh
    qw = mesh.quad_weights
    v = space.values(coeffs)
    g = space.gradients(coeffs)
    Hs = space.hessians(coeffs)  # (m, 2, 2)
    l2 = float((qw * v**2).sum())
    h1 = float((qw * (g**2).sum(-1)).sum())
    h2 = float((mesh.areas * (Hs**2).sum((-1, -2))).sum())
    jumps = interior_edge_jumps(space, coeffs)
    return float(np.sqrt(l2 + rho0**2 * h1 + rho0**4 * (h2 + jumps)))


@dataclass
class H2Row:
    level: int
    n_triangles: int
    h2_phi: float
    h2_w: float
    data_M: float
    data_Q: float
    ratio: float
    jump_Q: float
    jump_M: float

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class H2Table:
    rows: list
    growth: float
    in_hypothesis: bool
    growth_limit: float = 1.2
    reason: str = ""
    caveat: str = "data norms are edgewise H1(boundary) surrogates for H^1/2(boundary)"

    @property
    def flagged(self):
        return (not self.in_hypothesis) or self.growth > self.growth_limit

    def as_dict(self):
        return {
            "rows": [r.as_dict() for r in self.rows],
            "growth": self.growth,
            "in_hypothesis": self.in_hypothesis,
            "flagged": self.flagged,
            "growth_limit": self.growth_limit,
            "reason": self.reason,
            "caveat": self.caveat,
        }


def h2_quotient(sol, data, rho0):
    space = sol.field.space
    hp = np.hypot(discrete_h2_norm(space, sol.field.phi[:, 0], rho0), discrete_h2_norm(space, sol.field.phi[:, 1], rho0))
    hw = discrete_h2_norm(space, sol.field.w, rho0)
    nq, nm = data.h1_norms(rho0)
    return hp, hw, nm, nq, (hp + hw / rho0) / (nm + rho0 * nq)


def refined_sequence(base_mesh, levels):
    """``base_mesh`` refined 0..levels times."""
    return [base_mesh] + [refine(base_mesh, k) for k in range(1, levels + 1)]


def graph_domain_mesh(profile, n=2):
    """Unit square whose bottom side is bent to x2 = -1/2 + psi(x1).

    Nodes move vertically by psi(x1) (1/2 - x2), so the top side is fixed and
    the bottom boundary vertices lie on the graph.  The chart anchor is
    (0, -1/2).
    """
    if isinstance(profile, str):
        profile = parse_profile(profile)
    base = make_rect_mesh(0.5, 0.5, n)
    x = base.nodes.copy()
    with np.errstate(invalid="ignore"):
        x[:, 1] += profile.psi(x[:, 0]) * (0.5 - x[:, 1])
    if not np.isfinite(x).all():
        raise ChartError(f"profile {profile.name} undefined on [-1/2, 1/2]")
    mesh = Mesh(x, base.triangles, base.boundary_edges, base.boundary_tags)
    mesh_validate(mesh, strict=True)
    return mesh


GRAPH_ANCHOR = (0.0, -0.5)


def probe_domain(profile, n=2, levels=2):
    """Mesh sequence and chart anchor for a regularity probe.

    ``circle:R`` uses the disk of radius R (anchor at its lowest point);
    other profiles use the bent unit square of ``graph_domain_mesh``, whose
    corners put it outside the smooth-boundary setting.
    """
    if isinstance(profile, str):
        profile = parse_profile(profile)
    if profile.name.startswith("circle"):
        R = float(profile.name.split(":")[1])
        base = make_disk_mesh((0.0, 0.0), R, [R], 8 * n, 0)
        return refined_sequence(base, levels), (0.0, -R)
    return [graph_domain_mesh(profile, n * 2**k) for k in range(levels + 1)], GRAPH_ANCHOR


def h2_ratio(meshes, material, Q=None, M=None, scale=1.0, jump_tol=1e-6):
    """Discrete H2 quotients over a sequence of meshes.

    ``Q(x, n)`` and ``M(x, n)`` are projected onto compatible data on every
    mesh.  ``growth`` is the ratio of the last two quotients.  The run is
    out of hypothesis when the data jump at boundary vertices and the jumps do
    not shrink under refinement.
    """
    from .neumann import project_compatible, solve_problem

    meshes = list(meshes)
    if len(meshes) < 3:
        raise ValueError("h2_ratio needs at least three meshes")
    rho0 = material.rho0
    rows = []
    for lev, mesh in enumerate(meshes):
        data = BoundaryData.from_functions(mesh, Q, M).scaled(scale)
        data = project_compatible(mesh, data)
        sol = solve_problem(mesh, material, data)
        hp, hw, nm, nq, r = h2_quotient(sol, data, rho0)
        jq, jm = data.vertex_jumps()
        rows.append(H2Row(lev, mesh.n_triangles, *map(float, (hp, hw, nm, nq, r, jq, jm))))
    growth = rows[-1].ratio / rows[-2].ratio
    size = max(max(abs(r.data_M), abs(r.data_Q)) for r in rows)
    first = max(rows[0].jump_Q, rows[0].jump_M)
    last = max(rows[-1].jump_Q, rows[-1].jump_M)
    rough = last > jump_tol * max(size, 1e-300) and last > 0.6 * first
    reason = "boundary data jump at vertices and the jumps persist under refinement (corners or rough data)" if rough else ""
    return H2Table(rows, float(growth), not rough, reason=reason), sol
