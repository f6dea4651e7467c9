"""Compatibility, normalised solution, rigid family and kernel of the traction problem."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (
    BoundaryData,
    PlateField,
    assemble_boundary_load,
    assemble_interior_load,
    assemble_system,
    field_integrals,
    field_norms,
)
from .linalg import BlockSolver, FactorError

DATA_NORM_CAVEAT = (
    "data norms are L2(boundary) surrogates for the H^-1/2(boundary) norms; "
    "ratios are empirical and only comparable across runs using the same convention"
)


class SolverError(RuntimeError):
    """Numerical failure: singular system or residual above the contract."""


class IncompatibleDataError(ValueError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# compatibility


@dataclass
class CompatibilityReport:
    r0: float
    r1: np.ndarray
    scale0: float
    scale1: float
    tol: float
    passed: bool

    def as_dict(self):
        return {
            "r0": self.r0,
            "r1": [float(v) for v in self.r1],
            "scale0": self.scale0,
            "scale1": self.scale1,
            "tol": self.tol,
            "pass": self.passed,
        }


def _moments(mesh, data, f=None, g=None):
    """Signed total force and moment vectors, plus their absolute scales."""
    pts, w, q, m = data.at_gauss()
    force = float((w * q).sum())
    moment = np.einsum("eg,egc->c", w, q[..., None] * pts - m)
    scale0 = float((w * np.abs(q)).sum())
    scale1 = float((w * (np.abs(q) * np.hypot(pts[..., 0], pts[..., 1]) + np.hypot(m[..., 0], m[..., 1]))).sum())
    if f is not None or g is not None:
        x = mesh.quad_points.reshape(-1, 2)
        qw = mesh.quad_weights.ravel()
        if g is not None:
            gv = np.asarray(g(x), dtype=float).reshape(-1)
            force += float(qw @ gv)
            moment = moment + (qw * gv) @ x
            scale0 += float(qw @ np.abs(gv))
            scale1 += float(qw @ (np.abs(gv) * np.hypot(x[:, 0], x[:, 1])))
        if f is not None:
            fv = np.asarray(f(x), dtype=float).reshape(-1, 2)
            moment = moment - qw @ fv
            scale1 += float(qw @ np.hypot(fv[:, 0], fv[:, 1]))
    return force, moment, scale0, scale1


def check_compatibility(mesh, data, tol=1e-8, f=None, g=None):
    """Total force and moment of the data (interior loads optional).

    ``r0 = |int Q + int g|`` and ``r1 = |int (Q x - M) + int (g x - f)|``
    componentwise; the data pass when both are below ``tol`` times the
    corresponding integral of absolute values.
    """
    force, moment, s0, s1 = _moments(mesh, data, f, g)
    r0, r1 = abs(force), np.abs(moment)
    ok = bool(r0 <= tol * s0 and (r1 <= tol * s1).all())
    return CompatibilityReport(r0, r1, s0, s1, tol, ok)


def project_compatible(mesh, data, f=None, g=None):
    """Make the data compatible by shifting Q and M by constants.

    This modifies the data: the returned object carries a note saying so.
    """
    length = mesh.perimeter
    force, _, _, _ = _moments(mesh, data, f, g)
    Q = data.Q - force / length
    shifted = BoundaryData(mesh, Q, data.M)
    _, moment, _, _ = _moments(mesh, shifted, f, g)
    M = data.M + moment[None, None, :] / length
    note = f"projected: Q shifted by {-force / length:.6g}, M shifted by {(moment / length).tolist()}"
    return BoundaryData(mesh, Q, M, note)


# ---------------------------------------------------------------------------
# saddle solver


class SaddleSolver:
    """Factorised [A C^T; C 0] for repeated solves with the same system.

    A is factorised with the rigid family pinned out (see ``linalg``), which
    keeps the sparse factor free of the dense constraint rows.
    """

    def __init__(self, system, rtol=1e-10, max_refine=5):
        A = system.matrix
        C = system.constraint_rows
        self.n = A.shape[0]
        self.k = C.shape[0]
        a_scale = abs(A.diagonal()).max()
        c_norm = np.linalg.norm(C, axis=1)
        if not (a_scale > 0 and (c_norm > 0).all()):
            raise SolverError("degenerate system: empty stiffness or constraint row")
        self.row_scale = a_scale / c_norm
        Cs = C * self.row_scale[:, None]
        kernel = np.column_stack([k.vector() for k in kernel_fields(system.space)])
        self.rtol = rtol
        self.max_refine = max_refine
        try:
            self.block = BlockSolver(A, Cs, kernel)
        except FactorError as exc:
            raise SolverError(f"saddle factorisation failed: {exc}") from exc

    def _residual(self, f, g, x, m):
        rf, rg = self.block.matvec(x, m)
        return f - rf, g - rg

    def solve(self, load, constraint_values=None):
        """Return (x, multipliers, relative residual)."""
        f = np.asarray(load, dtype=float)
        g = np.zeros(self.k) if constraint_values is None else np.asarray(constraint_values, float) * self.row_scale
        nrm = np.sqrt(f @ f + g @ g)
        if nrm == 0:
            return np.zeros(self.n), np.zeros(self.k), 0.0
        x, m = self.block.solve(f, g)
        rf, rg = self._residual(f, g, x, m)
        res = np.sqrt(rf @ rf + rg @ rg) / nrm
        for _ in range(self.max_refine):
            if res <= self.rtol * 1e-2:
                break
            dx, dm = self.block.solve(rf, rg)
            x, m = x + dx, m + dm
            rf, rg = self._residual(f, g, x, m)
            res = np.sqrt(rf @ rf + rg @ rg) / nrm
        if not np.isfinite(res) or res > self.rtol:
            raise SolverError(f"saddle solve residual {res:.3e} above {self.rtol:.1e}")
        return x, m * self.row_scale, float(res)


# ---------------------------------------------------------------------------
# solving


@dataclass
class NeumannSolution:
    field: PlateField
    data: Optional[BoundaryData]
    residual_norm: float
    normalization_residual: float
    multipliers: np.ndarray
    compatibility: Optional[CompatibilityReport] = None
    rho0: float = 1.0
    notes: list = field(default_factory=list)


def kernel_fields(space):
    """The rigid family basis {(-e1, x1), (-e2, x2), (0, 1)} as P2 fields."""
    x = space.dof_coords
    one, zero = np.ones(space.ndof), np.zeros(space.ndof)
    return [
        PlateField(space, np.column_stack([-one, zero]), x[:, 0]),
        PlateField(space, np.column_stack([zero, -one]), x[:, 1]),
        PlateField(space, np.column_stack([zero, zero]), one),
    ]


def load_compatibility(system, load):
    """Relative size of the load tested against the three rigid fields."""
    out = []
    for k in kernel_fields(system.space):
        kv = k.vector()
        scale = float(np.abs(load) @ np.abs(kv))
        out.append(abs(float(load @ kv)) / scale if scale > 0 else 0.0)
    return np.array(out)


def solve_neumann(system, load, tol=1e-8, force=False, data=None, solver=None, rtol=1e-10):
    """Normalised solution with int phi = 0 and int w = 0.

    Unless ``force`` is set, a load that does not annihilate the rigid family
    (relative tolerance ``tol``) raises ``IncompatibleDataError``.  With
    ``force`` the multipliers absorb the incompatible part as constant loads.
    """
    load = np.asarray(load, dtype=float)
    if load.shape != (system.n,):
        raise ValueError(f"load has shape {load.shape}, expected ({system.n},)")
    rel = load_compatibility(system, load)
    if not force and (rel > tol).any():
        raise IncompatibleDataError(f"load not compatible: relative rigid-field residuals {rel.tolist()}")
    solver = solver or SaddleSolver(system, rtol=rtol)
    x, mult, res = solver.solve(load)
    fld = PlateField.from_vector(system.space, x)
    ints = system.constraint_rows @ x
    rho0 = getattr(system.material, "rho0", 1.0)
    notes = [] if not force or (rel <= tol).all() else ["forced solve: incompatible part absorbed by multipliers"]
    return NeumannSolution(fld, data, res, float(np.abs(ints).sum()), mult, None, rho0, notes)


def solve_problem(mesh, material, data, f=None, g=None, tol=1e-8, project=False, force=False, system=None):
    """Assemble, check, optionally project, and solve in one call."""
    notes = []
    if project:
        data = project_compatible(mesh, data, f, g)
        notes.append(data.note)
    report = check_compatibility(mesh, data, tol, f, g)
    if not report.passed and not force:
        raise IncompatibleDataError(
            f"incompatible data: r0={report.r0:.3e}, r1={report.r1.tolist()}", report
        )
    system = system or assemble_system(mesh, material)
    load = assemble_boundary_load(mesh, data)
    if f is not None or g is not None:
        load = load + assemble_interior_load(mesh, f, g)
    sol = solve_neumann(system, load, tol=max(tol, 1e-12), force=True, data=data)
    sol.compatibility = report
    sol.notes = notes + sol.notes
    return sol


# ---------------------------------------------------------------------------
# rigid family


def shift_solution(sol, a, b):
    """(phi - b, w + b.x + a)."""
    fld = sol.field if isinstance(sol, NeumannSolution) else sol
    b = np.asarray(b, dtype=float).reshape(2)
    x = fld.space.dof_coords
    return PlateField(fld.space, fld.phi - b[None, :], fld.w + x @ b + a)


def normalize(fld):
    """Member of the rigid class of ``fld`` with zero means of phi and w."""
    area = fld.mesh.area
    ints = field_integrals(fld)
    b = ints[:2] / area
    shifted = shift_solution(fld, 0.0, b)
    return shift_solution(shifted, -field_integrals(shifted)[2] / area, np.zeros(2))


# ---------------------------------------------------------------------------
# kernel


def h_gram(space, rho0=1.0):
    """Gram matrix of ||phi||_H1^2 + rho0^-2 ||w||_H1^2 on stacked coefficients."""
    G = space.mass() + rho0**2 * space.stiffness()
    return sp.block_diag([G, G, G / rho0**2], format="csr")


def coercivity_scale(material):
    """h^3 min(xi0/12, sigma0 (rho0/h)^2): the natural size of the energy."""
    c = material.constants
    if c is None:
        return None
    h, rho0 = material.h, material.rho0
    return h**3 * min(c.xi0 / 12.0, c.sigma0 * (rho0 / h) ** 2)


def smallest_generalized(A, M, k, shift, dense_limit=1500, v0_seed=0):
    """k smallest eigenpairs of A x = lam M x (A semidefinite, M definite)."""
    n = A.shape[0]
    if n <= dense_limit:
        vals, vecs = sla.eigh(A.toarray(), M.toarray(), subset_by_index=[0, k - 1])
        return vals, vecs
    v0 = np.random.default_rng(v0_seed).standard_normal(n)
    vals, vecs = spla.eigsh(A.tocsc(), k=k, M=M.tocsc(), sigma=-abs(shift), which="LM", v0=v0, tol=1e-12)
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


@dataclass
class KernelReport:
    dim: int
    eigenvalues: np.ndarray
    matrix_norm: float
    zero_threshold: float
    basis_residuals: np.ndarray
    coercivity_scale: Optional[float]
    fourth_normalized: Optional[float]

    def as_dict(self):
        return {
            "dim": self.dim,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "matrix_norm": self.matrix_norm,
            "zero_threshold": self.zero_threshold,
            "basis_residuals": [float(v) for v in self.basis_residuals],
            "coercivity_scale": self.coercivity_scale,
            "fourth_normalized": self.fourth_normalized,
        }


def kernel_check(system, rel_zero=1e-9, dense_limit=1500):
    """Rigid-family residuals and the four smallest eigenvalues of A.

    Eigenvalues are taken relative to the H-type Gram matrix so that they
    do not scale with the mesh size; a value counts as zero when it is below
    ``rel_zero * ||A||_inf``.  The fourth eigenvalue is also reported
    divided by ``coercivity_scale`` of the material.
    """
    A = system.matrix
    space = system.space
    material = system.material
    rho0 = getattr(material, "rho0", 1.0)
    norm_A = float(spla.norm(A, np.inf))
    res = []
    for k in kernel_fields(space):
        kv = k.vector()
        res.append(np.linalg.norm(A @ kv) / (norm_A * np.linalg.norm(kv)))
    scale = coercivity_scale(material)
    shift = 1e-2 * (scale if scale else norm_A * 1e-6)
    try:
        vals, _ = smallest_generalized(A, h_gram(space, rho0), 4, shift, dense_limit)
    except (np.linalg.LinAlgError, spla.ArpackError, RuntimeError) as exc:
        raise SolverError(f"eigen solve failed: {exc}") from exc
    thr = rel_zero * norm_A
    dim = int((np.abs(vals) < thr).sum())
    fourth = float(vals[3] / scale) if scale else None
    return KernelReport(dim, vals, norm_A, thr, np.array(res), scale, fourth)


# ---------------------------------------------------------------------------
# stability


def stability_ratio(sol, data=None, rho0=None):
    """(||phi||_H1 + ||w||_H1 / rho0) / (||M||_L2(bdry) + rho0 ||Q||_L2(bdry)).

    See ``DATA_NORM_CAVEAT`` for the norm convention.
    """
    data = data if data is not None else sol.data
    if data is None:
        raise ValueError("stability_ratio needs boundary data")
    rho0 = sol.rho0 if rho0 is None else rho0
    nq, nm = data.l2_norms()
    den = nm + rho0 * nq
    num = field_norms(sol.field, rho0).H_norm
    if not den > 1e-300:
        raise ValueError("stability ratio undefined for zero data")
    return num / den


def random_polynomial(rng, degree=2):
    """Random polynomial in (x, y) of total degree <= ``degree`` with N(0,1) coefficients."""
    powers = [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    coef = rng.standard_normal(len(powers))

    def p(x):
        return sum(c * x[:, 0] ** i * x[:, 1] ** j for c, (i, j) in zip(coef, powers))

    return p


def random_compatible_data(mesh, rng, degree=2):
    """Random quadratic Q and M projected onto the compatible subspace."""
    q = random_polynomial(rng, degree)
    m1, m2 = random_polynomial(rng, degree), random_polynomial(rng, degree)
    data = BoundaryData.from_functions(mesh, lambda x, n: q(x), lambda x, n: np.column_stack([m1(x), m2(x)]))
    return project_compatible(mesh, data)


def stability_sweep(mesh, material, n_data=20, seed=0, degree=2):
    """Stability ratios for ``n_data`` random compatible data sets on one mesh.

    The data polynomials depend only on the seed, so sweeps on refined meshes
    use the same continuous data.
    """
    rng = np.random.default_rng(seed)
    system = assemble_system(mesh, material)
    solver = SaddleSolver(system)
    ratios = []
    for _ in range(n_data):
        data = random_compatible_data(mesh, rng, degree)
        load = assemble_boundary_load(mesh, data)
        sol = solve_neumann(system, load, data=data, solver=solver)
        ratios.append(stability_ratio(sol, data, material.rho0))
    return np.array(ratios)


__all__ = [
    "DATA_NORM_CAVEAT",
    "CompatibilityReport",
    "IncompatibleDataError",
    "KernelReport",
    "NeumannSolution",
    "SaddleSolver",
    "SolverError",
    "check_compatibility",
    "coercivity_scale",
    "h_gram",
    "kernel_check",
    "kernel_fields",
    "normalize",
    "project_compatible",
    "random_compatible_data",
    "shift_solution",
    "solve_neumann",
    "solve_problem",
    "stability_ratio",
    "stability_sweep",
]
