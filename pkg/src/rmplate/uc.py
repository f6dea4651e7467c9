"""Unique-continuation laboratory for isotropic plates.

Auxiliary reduction to a Laplacian-principal system, its discrete residuals,
three-spheres measurements and vanishing-order diagnostics.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .fem import PlateField
from .geometry import Region

TAU_CAVEAT = "empirical exponent, C=1 normalization"


class ThreeSpheresError(ValueError):
    pass


# ---------------------------------------------------------------------------
# auxiliary coefficients and variable


@dataclass(frozen=True)
class AuxCoeffs:
    """a = (2mu+3lambda)/(4(lambda+mu)) and b = 4(lambda+mu)/(2mu+lambda) as fields."""

    a: Callable
    b: Callable

    def identity_defect(self, points):
        """max |a + 1/b - 1| over the points."""
        return float(np.abs(self.a(points) + 1.0 / self.b(points) - 1.0).max())


def auxiliary_coeffs(lame):
    def a(x):
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        lam, mu = lame.lam(x), lame.mu(x)
        return (2 * mu + 3 * lam) / (4 * (lam + mu))

    def b(x):
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        lam, mu = lame.lam(x), lame.mu(x)
        return 4 * (lam + mu) / (2 * mu + lam)

    return AuxCoeffs(a, b)


def auxiliary_field(fld, coeffs):
    """v = b div(phi) at the quadrature points, shape (m, 7)."""
    space = fld.space
    g = space.gradients(fld.phi)
    div = g[..., 0, 0] + g[..., 1, 1]
    b = coeffs.b(space.mesh.quad_points.reshape(-1, 2)).reshape(div.shape)
    return b * div


def project_continuous(space, qvals):
    """L2 projection of quadrature-point values onto continuous P2."""
    mesh = space.mesh
    loc = np.einsum("mq,mq,qa->ma", mesh.quad_weights, qvals, space.N)
    rhs = np.bincount(space.elem_dofs.ravel(), loc.ravel(), minlength=space.ndof)
    M = space.__dict__.get("_mass_lu")
    if M is None:
        M = spla.splu(space.mass().tocsc())
        space.__dict__["_mass_lu"] = M
    return M.solve(rhs)


# ---------------------------------------------------------------------------
# residuals of the transformed system


@dataclass
class ResidualReport:
    r1: float
    r2: float
    r3: float
    reference: float
    drop_coefficient_gradients: bool

    def as_tuple(self):
        return (self.r1, self.r2, self.r3)

    def as_dict(self):
        return dict(self.__dict__)


def boundary_dofs(space):
    mesh = space.mesh
    be = mesh.boundary_edges
    return np.unique(np.concatenate([be.ravel(), space.nv + mesh.edge_ids(be)]))


def transformed_residuals(fld, lame, rho0, h, drop_coefficient_gradients=False):
    """Discrete dual norms of the residuals of the auxiliary system.

    With w~ = w, phi~ = rho0 phi and v~ = rho0^2 b div(phi) (L2-projected onto
    continuous P2), each equation is tested against P2 functions vanishing on
    the boundary, after moving one derivative of every second-order term onto
    the test function.  The dual norm is sqrt(r^T G^-1 r) with G the Gram
    matrix of ||z||^2 + rho0^2 ||grad z||^2.  ``reference`` is the same norm of
    the shear term alone, for scale.
    """
    space = fld.space
    mesh = space.mesh
    pts = mesh.quad_points.reshape(-1, 2)
    shape = mesh.quad_weights.shape
    qw = mesh.quad_weights
    lam = lame.lam(pts).reshape(shape)
    mu = lame.mu(pts).reshape(shape)
    if drop_coefficient_gradients:
        gmu = np.zeros(shape + (2,))
    else:
        gmu = lame.gradients(pts)[1].reshape(shape + (2,))
    lmu = gmu / mu[..., None]  # grad(mu)/mu = grad(S)/S

    phit = rho0 * space.values(fld.phi)
    gphit = rho0 * space.gradients(fld.phi)  # [comp, dir]
    gwt = space.gradients(fld.w)
    div = gphit[..., 0, 0] + gphit[..., 1, 1]
    coeffs = auxiliary_coeffs(lame)
    a = coeffs.a(pts).reshape(shape)
    b = coeffs.b(pts).reshape(shape)
    vt_coef = project_continuous(space, rho0 * b * div)
    vt = space.values(vt_coef)
    gvt = space.gradients(vt_coef)

    sym2 = gphit + np.swapaxes(gphit, -1, -2)
    grad_inv_mu = -gmu / mu[..., None] ** 2
    Gt = np.einsum("mqij,mqj->mqi", sym2, lmu) - (
        lmu + (mu * (2 * mu + 3 * lam) / (2 * mu + lam))[..., None] * grad_inv_mu
    ) * div[..., None]
    shear = phit + rho0 * gwt
    c1 = (2 * mu + lam) / (4 * rho0**2 * (lam + mu))
    k = 12.0 / h**2

    N, G = space.N, space.G
    dofs = space.elem_dofs.ravel()

    def assemble(val, grad):
        """sum_q w (val N_a + grad . grad N_a)."""
        loc = np.einsum("mq,mq,qa->ma", qw, val, N) + np.einsum("mq,mqd,mqad->ma", qw, grad, G)
        return np.bincount(dofs, loc.ravel(), minlength=space.ndof)

    r1 = assemble(c1 * vt + (lmu * phit).sum(-1) / rho0 + (lmu * gwt).sum(-1), -gwt)
    r2 = []
    for i in range(2):
        grad_term = -gphit[..., i, :]
        grad_term = grad_term - (a / rho0 * vt)[..., None] * np.eye(2)[i]
        r2.append(assemble(Gt[..., i] - k * shear[..., i], grad_term))
    r3 = assemble(k * rho0 * (lmu * shear).sum(-1), -gvt - rho0 * Gt)
    ref = [assemble(-k * shear[..., i], np.zeros(shape + (2,))) for i in range(2)]

    interior = np.setdiff1d(np.arange(space.ndof), boundary_dofs(space))
    gram = (space.mass() + rho0**2 * space.stiffness())[interior][:, interior].tocsc()
    lu = spla.splu(gram)

    def dual(*vecs):
        return float(np.sqrt(sum(v[interior] @ lu.solve(v[interior]) for v in vecs)))

    return ResidualReport(dual(r1), dual(*r2), dual(r3), dual(*ref), drop_coefficient_gradients)


# ---------------------------------------------------------------------------
# three spheres


@dataclass
class SphereNorms:
    center: tuple
    radii: tuple
    N: tuple
    tau_emp: float
    caveat: str = TAU_CAVEAT

    def as_dict(self):
        return {
            "center": list(self.center),
            "R1": self.radii[0],
            "R2": self.radii[1],
            "R3": self.radii[2],
            "N1": self.N[0],
            "N2": self.N[1],
            "N3": self.N[2],
            "tau_emp": self.tau_emp,
            "caveat": self.caveat,
        }


def disk_norm(fld, center, radius, rho0):
    """int over the marked disk of |phi|^2 + rho0^-2 |w|^2."""
    mesh = fld.mesh
    try:
        idx = mesh.marker_index(center, radius)
    except ValueError as exc:
        raise ThreeSpheresError(f"radius {radius} is not a marked circle about {tuple(center)}") from exc
    return fld.energy_density_integral(rho0, Region.disk(idx).triangles(mesh))


def three_spheres(fld, center, R1, R2, R3, rho0=1.0):
    """tau_emp = log(N1/N2) / log(N1/N3), the exponent giving equality with C = 1."""
    if not 0 < R3 < R2 < R1:
        raise ThreeSpheresError(f"need 0 < R3 < R2 < R1, got {R1}, {R2}, {R3}")
    N1, N2, N3 = (disk_norm(fld, center, r, rho0) for r in (R1, R2, R3))
    if N1 <= 0:
        raise ThreeSpheresError("all disk norms vanish")
    if N3 <= 0 < N2:
        raise ThreeSpheresError("N3 = 0 while N2 > 0: possible unique-continuation violation")
    if N1 == N3:
        raise ThreeSpheresError("N1 = N3: exponent undefined")
    tau = float(np.log(N1 / N2) / np.log(N1 / N3))
    return SphereNorms(tuple(map(float, center)), (R1, R2, R3), (N1, N2, N3), tau)


@dataclass
class TauTrend:
    rows: list  # (R3, tau_emp, 1/|log R3|)
    slope: float
    correlation: float
    caveat: str = TAU_CAVEAT

    def as_dict(self):
        return {
            "rows": [{"R3": r, "tau_emp": t, "inv_log_R3": x} for r, t, x in self.rows],
            "slope": self.slope,
            "correlation": self.correlation,
            "caveat": self.caveat,
        }


def tau_trend(fld, center, R1, R2, r3_sequence, rho0=1.0):
    """tau_emp against 1/|log R3|: least-squares slope through 0 and Pearson r."""
    r3s = list(r3_sequence)
    if len(r3s) < 3:
        raise ThreeSpheresError("tau_trend needs at least three R3 values")
    rows = []
    for r3 in r3s:
        if r3 == 1.0:
            raise ThreeSpheresError("R3 = 1 gives 1/|log R3| = inf")
        s = three_spheres(fld, center, R1, R2, r3, rho0)
        rows.append((float(r3), s.tau_emp, float(1.0 / abs(np.log(r3)))))
    t = np.array([r[1] for r in rows])
    x = np.array([r[2] for r in rows])
    slope = float(x @ t / (x @ x))
    corr = float(np.corrcoef(x, t)[0, 1]) if np.ptp(t) > 0 and np.ptp(x) > 0 else float("nan")
    return TauTrend(rows, slope, corr)


@dataclass
class VanishingReport:
    radii: list
    N: list
    slopes: list
    threshold: float
    bounded: bool

    def as_dict(self):
        return dict(self.__dict__)


def vanishing_order(fld, center, r_sequence, rho0=1.0, threshold=20.0):
    """Slopes d log N / d log r between consecutive radii (decreasing)."""
    radii = sorted(map(float, r_sequence), reverse=True)
    N = [disk_norm(fld, center, r, rho0) for r in radii]
    if N[0] <= 0:
        raise ThreeSpheresError("N vanishes at the largest radius")
    slopes = []
    for (ra, na), (rb, nb) in zip(zip(radii, N), zip(radii[1:], N[1:])):
        slopes.append(float(np.log(na / nb) / np.log(ra / rb)) if nb > 0 else float("inf"))
    return VanishingReport(radii, N, slopes, threshold, bool(max(slopes) < threshold))


# ---------------------------------------------------------------------------
# fields for experiments


def const_w_field(space, rho0=1.0):
    """phi = 0, w = rho0: an exact solution of the load-free system."""
    return PlateField(space, np.zeros((space.ndof, 2)), np.full(space.ndof, float(rho0)))


def neumann_disk_solutions(mesh, material, count=10, seed=0, degree=2):
    """Solutions of random compatible traction problems on ``mesh``."""
    from .fem import assemble_boundary_load, assemble_system
    from .neumann import SaddleSolver, random_compatible_data, solve_neumann

    rng = np.random.default_rng(seed)
    system = assemble_system(mesh, material)
    solver = SaddleSolver(system)
    out = []
    for _ in range(count):
        data = random_compatible_data(mesh, rng, degree)
        out.append(solve_neumann(system, assemble_boundary_load(mesh, data), data=data, solver=solver))
    return out
