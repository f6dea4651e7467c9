"""Discrete best constants of Poincare/Korn-type inequalities.

Each inequality is written as a Rayleigh quotient num(x)/den(x) on a
subspace {C x = 0} of P2 coefficient vectors.  The smallest quotient
``lam`` gives the best constant ``lam ** -0.5`` of the Hilbertian
(sum-of-squares) form of the inequality.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import P2Space, PlateField, field_norms, shear_operator
from .geometry import Region, refine
from .linalg import BlockSolver, FactorError, PinnedFactor
from .neumann import SolverError

KINDS = ("poincare", "korn2", "generalized", "gobert")


# ---------------------------------------------------------------------------
# quadratic forms


def _sym_operator(space, nloc=12):
    """Symmetric gradient of the first two components, shape (m, q, nloc, 4)."""
    G = space.G
    m = G.shape[0]
    B = np.zeros((m, 7, nloc, 2, 2))
    B[:, :, 0:6, 0, :] = G
    B[:, :, 6:12, 1, :] = G
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    return B.reshape(m, 7, nloc, 4)


def _full_grad_operator(space, nloc=12):
    G = space.G
    m = G.shape[0]
    B = np.zeros((m, 7, nloc, 2, 2))
    B[:, :, 0:6, 0, :] = G
    B[:, :, 6:12, 1, :] = G
    return B.reshape(m, 7, nloc, 4)


def _value_operator(space, nloc=12):
    m = space.mesh.n_triangles
    B = np.zeros((m, 7, nloc, 2))
    B[:, :, 0:6, 0] = space.N
    B[:, :, 6:12, 1] = space.N
    return B


def grad_integrals(space):
    """Vectors int d_1 N_a and int d_2 N_a."""
    w = space.mesh.quad_weights
    loc = np.einsum("mq,mqad->mad", w, space.G)
    d = space.elem_dofs.ravel()
    return [np.bincount(d, loc[..., k].ravel(), minlength=space.ndof) for k in range(2)]


@dataclass
class QuotientForms:
    kind: str
    num: sp.csr_matrix
    den: sp.csr_matrix
    constraints: np.ndarray
    ncomp: int
    kernel: np.ndarray  # columns span the null space of num


def quotient_forms(kind, mesh, rho0=1.0, region=None, w_free=True):
    """Numerator, denominator and constraint rows for ``kind``.

    poincare: rho0^2 ||grad u||^2 / ||u||^2 with int u = 0.
    korn2: ||sym grad u||^2 / ||grad u||^2 with int u = 0 and zero mean curl.
    generalized: (||sym grad phi||^2 + rho0^-2 ||phi + grad w||^2) / ||grad phi||^2
        with int_E phi = 0 (E = ``region``, default whole domain) and int w = 0;
        ``w_free=False`` freezes w = 0.
    gobert: (||u||^2 + rho0^2 ||sym grad u||^2) / (||u||^2 + rho0^2 ||grad u||^2), no constraints.
    """
    space = P2Space.of(mesh)
    n = space.ndof
    c = space.basis_integrals()
    x = space.dof_coords
    one, zero = np.ones(n), np.zeros(n)
    rigid2 = np.column_stack([np.r_[one, zero], np.r_[zero, one], np.r_[x[:, 1], -x[:, 0]]])
    if kind == "poincare":
        return QuotientForms(kind, rho0**2 * space.stiffness(), space.mass(), c[None, :], 1, one[:, None])
    dm2 = space.vector_dofmap(2)
    if kind in ("korn2", "gobert"):
        sym = space.gram(_sym_operator(space), dm2, 2 * n)
        grad = space.gram(_full_grad_operator(space), dm2, 2 * n)
        if kind == "korn2":
            g1, g2 = grad_integrals(space)
            C = np.zeros((3, 2 * n))
            C[0, :n] = c
            C[1, n:] = c
            C[2, :n], C[2, n:] = g2, -g1
            return QuotientForms(kind, sym, grad, C, 2, rigid2)
        mass = space.gram(_value_operator(space), dm2, 2 * n)
        return QuotientForms(kind, mass + rho0**2 * sym, mass + rho0**2 * grad, np.zeros((0, 2 * n)), 2, np.zeros((2 * n, 0)))
    if kind == "generalized":
        tris = (region or Region.whole()).triangles(mesh)
        cE = space.basis_integrals(tris)
        dm3 = space.vector_dofmap(3)
        m = mesh.n_triangles
        Bsym = np.zeros((m, 7, 18, 4))
        Bsym[:, :, :12] = _sym_operator(space)
        Bgrad = np.zeros((m, 7, 18, 4))
        Bgrad[:, :, :12] = _full_grad_operator(space)
        Bsh = shear_operator(space)
        num = space.gram(Bsym, dm3, 3 * n) + space.gram(Bsh, dm3, 3 * n) / rho0**2
        den = space.gram(Bgrad, dm3, 3 * n)
        C = np.zeros((3, 3 * n))
        C[0, :n] = cE
        C[1, n : 2 * n] = cE
        C[2, 2 * n :] = c
        if not w_free:
            # w = 0: keep only the phi block
            idx = np.arange(2 * n)
            return QuotientForms(kind, num[idx][:, idx], den[idx][:, idx], C[:2, : 2 * n], 2, np.zeros((2 * n, 0)))
        rigid3 = np.column_stack([np.r_[-one, zero, x[:, 0]], np.r_[zero, -one, x[:, 1]], np.r_[zero, zero, one]])
        return QuotientForms(kind, num, den, C, 3, rigid3)
    raise ValueError(f"unknown inequality kind {kind!r}; expected one of {KINDS}")


# ---------------------------------------------------------------------------
# constrained eigenproblem


def null_space_basis(C, n):
    """Orthonormal basis of {x : C x = 0} (dense)."""
    if C.shape[0] == 0:
        return np.eye(n)
    Q, R, _ = sla.qr(C.T, pivoting=True)
    rank = int((np.abs(np.diag(R)) > 1e-12 * np.abs(R[0, 0])).sum())
    return Q[:, rank:]


def _dense_max_ratio(den, num, C):
    n = num.shape[0]
    Z = null_space_basis(C, n)
    Nz = Z.T @ (num @ Z)
    Dz = Z.T @ (den @ Z)
    vals, vecs = sla.eigh(Dz, Nz, subset_by_index=[len(Nz) - 1, len(Nz) - 1])
    return float(vals[-1]), Z @ vecs[:, -1]


def _sparse_max_ratio(den, num, C, kernel, v0_seed=0):
    """Largest den/num ratio on ker C by Lanczos.

    Uses the definite form Mreg = num + Cs^T Cs, which equals num on ker C,
    and the Mreg-orthogonal projector P onto ker C: the pencil
    (P^T den P, Mreg) has the constrained eigenpairs plus zeros.
    Mreg^-1 is applied as the block system [num Cs^T; Cs -I].
    """
    n = num.shape[0]
    k = C.shape[0]
    scale = abs(num.diagonal()).max()
    try:
        if k:
            Cs = C * (np.sqrt(scale) / np.linalg.norm(C, axis=1))[:, None]
            block = BlockSolver(num, Cs, kernel, D=-np.eye(k))
            minv = lambda z: block.solve(z)[0]
        else:
            fac = PinnedFactor(num)
            minv = fac.solve
    except FactorError as exc:
        raise SolverError(f"numerator form is singular on the constrained space: {exc}") from exc

    if k:
        W = minv(Cs.T)
        S_inv = np.linalg.inv(Cs @ W)

        def proj(x):
            return x - W @ (S_inv @ (Cs @ x))

        def proj_t(y):
            return y - Cs.T @ (S_inv @ (W.T @ y))

        A = spla.LinearOperator((n, n), matvec=lambda x: proj_t(den @ proj(x)), dtype=float)
        M = spla.LinearOperator((n, n), matvec=lambda x: num @ x + Cs.T @ (Cs @ x), dtype=float)
    else:
        proj = lambda x: x
        A, M = den, num
    Minv = spla.LinearOperator((n, n), matvec=minv, dtype=float)
    v0 = np.random.default_rng(v0_seed).standard_normal(n)
    try:
        vals, vecs = spla.eigsh(A, k=3, M=M, Minv=Minv, which="LA", v0=v0, tol=1e-13, ncv=min(n - 1, 40))
    except spla.ArpackNoConvergence as exc:
        raise SolverError(f"eigen iteration did not converge: {exc}") from exc
    i = int(np.argmax(vals))
    x = proj(vecs[:, i])
    return float(vals[i]), x / np.linalg.norm(x)


def constrained_min_quotient(num, den, C, kernel=None, dense_limit=1500, v0_seed=0):
    """min num(x)/den(x) over {C x = 0}; returns (value, minimiser).

    ``kernel`` spans the null space of ``num`` (needed by the sparse path).
    """
    n = num.shape[0]
    kernel = np.zeros((n, 0)) if kernel is None else kernel
    if n <= dense_limit:
        mu, x = _dense_max_ratio(den.toarray(), num.toarray(), C)
    else:
        mu, x = _sparse_max_ratio(den.tocsr(), num.tocsr(), C, kernel, v0_seed)
    if not mu > 0:
        raise SolverError("denominator vanishes on the constrained space")
    return 1.0 / mu, x


# ---------------------------------------------------------------------------
# reports


@dataclass
class ConstantReport:
    kind: str
    best_constant: float
    eigenvalue: float
    mesh_level: int
    rho0: float
    minimiser: np.ndarray = field(repr=False)
    params: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "kind": self.kind,
            "best_constant": self.best_constant,
            "eigenvalue": self.eigenvalue,
            "mesh_level": self.mesh_level,
            "rho0": self.rho0,
            "params": dict(self.params),
        }


def best_constant(kind, mesh, rho0=1.0, region=None, w_free=True, mesh_level=0, dense_limit=1500):
    """Smallest constrained Rayleigh quotient and the implied constant."""
    forms = quotient_forms(kind, mesh, rho0, region, w_free)
    lam, x = constrained_min_quotient(forms.num, forms.den, forms.constraints, forms.kernel, dense_limit)
    params = {"w_free": w_free} if kind == "generalized" else {}
    if region is not None:
        params["region"] = region.kind if region.kind != "disk" else f"disk:{region.index}"
    return ConstantReport(kind, lam**-0.5, lam, mesh_level, rho0, x, params)


def constant_sequence(kind, mesh, levels, rho0=1.0, **kw):
    """Reports on ``mesh`` and ``levels`` successive uniform refinements."""
    out = []
    for lev in range(levels + 1):
        m = mesh if lev == 0 else refine(mesh, lev)
        out.append(best_constant(kind, m, rho0, mesh_level=lev, **kw))
    return out


def quotient_value(kind, mesh, x, rho0=1.0, region=None, w_free=True):
    """num(x)/den(x) for a coefficient vector in the layout of ``quotient_forms``."""
    forms = quotient_forms(kind, mesh, rho0, region, w_free)
    return float(x @ (forms.num @ x)) / float(x @ (forms.den @ x))


# ---------------------------------------------------------------------------
# inequality checks on samples


def _vector_field_norms(space, u):
    """||u||, ||grad u||, ||sym grad u|| for (ndof, 2) coefficients."""
    w = space.mesh.quad_weights
    vals = space.values(u)
    g = space.gradients(u)
    sym = 0.5 * (g + np.swapaxes(g, -1, -2))
    f = lambda a: float(np.sqrt((w * a).sum()))
    return f((vals**2).sum(-1)), f((g**2).sum((-1, -2))), f((sym**2).sum((-1, -2)))


def inequality_sides(kind, space, sample, rho0=1.0):
    """(lhs, rhs_without_constant) of the stated (non-squared) inequality."""
    mesh = space.mesh
    if kind == "poincare":
        u = sample - (space.basis_integrals() @ sample) / mesh.area
        nrm = field_norms(PlateField(space, np.zeros((space.ndof, 2)), u), rho0)
        return nrm.L2_w, rho0 * nrm.grad_w
    if kind == "korn2":
        g1, g2 = grad_integrals(space)
        omega = 0.5 * (g2 @ sample[:, 0] - g1 @ sample[:, 1]) / mesh.area
        x = space.dof_coords
        u = sample - omega * np.column_stack([x[:, 1], -x[:, 0]])
        _, grad, sym = _vector_field_norms(space, u)
        return grad, sym
    if kind == "gobert":
        l2, grad, sym = _vector_field_norms(space, sample)
        return np.sqrt(l2**2 + rho0**2 * grad**2), l2 + rho0 * sym
    if kind == "generalized":
        nrm = field_norms(sample, rho0)
        return nrm.grad_phi, nrm.symgrad_phi + nrm.shear / rho0
    raise ValueError(f"unknown inequality kind {kind!r}")


def random_sample(kind, space, rng):
    n = space.ndof
    if kind == "poincare":
        return rng.standard_normal(n)
    if kind == "generalized":
        return PlateField(space, rng.standard_normal((n, 2)), rng.standard_normal(n))
    return rng.standard_normal((n, 2))


@dataclass
class InequalityCheck:
    kind: str
    trials: int
    violations: int
    max_quotient: float
    best_constant: float
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


def verify_inequality(report, mesh, trials=100, seed=0, samples=None):
    """lhs <= best_constant (1 + 1e-8) rhs on random discrete samples."""
    space = P2Space.of(mesh)
    rng = np.random.default_rng(seed)
    samples = samples if samples is not None else [random_sample(report.kind, space, rng) for _ in range(trials)]
    bound = report.best_constant * (1 + 1e-8)
    worst, bad = 0.0, 0
    for s in samples:
        lhs, rhs = inequality_sides(report.kind, space, s, report.rho0)
        if rhs <= 0:
            if lhs > 1e-12:
                bad += 1
            continue
        q = lhs / rhs
        worst = max(worst, q)
        bad += q > bound
    return InequalityCheck(report.kind, len(samples), int(bad), worst, report.best_constant, bad == 0)


# ---------------------------------------------------------------------------
# rigid rotations and gradient projection


def rigid_rotation(alpha, x0, space):
    """r(x) = (alpha (x - x0)_2, -alpha (x - x0)_1) as the phi part of a field."""
    d = space.dof_coords - np.asarray(x0, dtype=float)
    return PlateField(space, alpha * np.column_stack([d[:, 1], -d[:, 0]]), np.zeros(space.ndof))


@dataclass
class GradientProjection:
    w: np.ndarray
    grad_norm: float
    phi_norm: float
    distance: float
    orthogonality_residual: float


def project_onto_gradients(phi, mesh, tol=1e-10):
    """L2 projection of ``phi`` onto {grad w : w in P2, int w = 0}.

    ``phi`` is a PlateField (its phi part is used) or (ndof, 2) coefficients.
    The orthogonality residual is max_a |<phi - grad w, grad N_a>| / ||grad N_a||
    relative to ||phi||.
    """
    space = P2Space.of(mesh)
    coeffs = phi.phi if isinstance(phi, PlateField) else np.asarray(phi, dtype=float)
    K = space.stiffness()
    pv = space.values(coeffs)
    w = mesh.quad_weights
    loc = np.einsum("mq,mqd,mqad->ma", w, pv, space.G)
    rhs = np.bincount(space.elem_dofs.ravel(), loc.ravel(), minlength=space.ndof)
    c = space.basis_integrals()
    block = BlockSolver(K, c[None, :], np.ones((space.ndof, 1)))
    wbar = block.solve(rhs)[0]
    for _ in range(2):
        wbar = wbar + block.solve(rhs - K @ wbar, -c @ wbar)[0]
    gw = space.gradients(wbar)
    phi_norm = float(np.sqrt((w * (pv**2).sum(-1)).sum()))
    grad_norm = float(np.sqrt((w * (gw**2).sum(-1)).sum()))
    dist = float(np.sqrt((w * ((pv - gw) ** 2).sum(-1)).sum()))
    r = rhs - K @ wbar
    diagK = np.sqrt(np.maximum(K.diagonal(), 1e-300))
    orth = float(np.abs(r / diagK).max() / phi_norm) if phi_norm > 0 else 0.0
    if orth > tol:
        raise SolverError(f"gradient projection residual {orth:.3e} above {tol:.1e}")
    return GradientProjection(wbar, grad_norm, phi_norm, dist, orth)


@dataclass
class GammaReport:
    gamma: float
    gamma_discrete: float
    second_moment: float
    disk_moment: float
    annulus_ratio: Optional[float]

    def as_dict(self):
        return dict(self.__dict__)


def gamma_constant(mesh, s0, rho0, x0):
    """gamma = 1 - (pi/2) (s0 rho0)^4 / int_Omega |x - x0|^2.

    ``gamma`` uses the exact disk moment; ``gamma_discrete`` the quadrature
    over the triangles inside the marked circle of radius s0 rho0 (so it is
    0 when the domain is that disk).  The annulus ratio
    int_{B \\ B_half} |r|^2 / int_B |r|^2 is computed when the half-radius
    circle is marked too.
    """
    from .geometry import DomainSpec

    r = s0 * rho0
    x0 = np.asarray(x0, dtype=float)
    try:
        mesh.marker_index(x0, r)
        marked = True
    except ValueError:
        marked = False
    # a marked circle stands for its polygonal disk, which need not contain the exact one
    problems = [] if marked else DomainSpec(rho0=rho0, M0=1.0, M1=np.inf, s0=s0, x0=tuple(x0)).check(mesh)
    if problems:
        raise ValueError(f"gamma_constant: {problems[0]}")
    pts = mesh.quad_points
    dist2 = ((pts - x0) ** 2).sum(-1)
    moment = float((mesh.quad_weights * dist2).sum())

    def disk_moment(radius):
        tris = mesh.disk_triangles(mesh.marker_index(x0, radius))
        return float((mesh.quad_weights[tris] * dist2[tris]).sum())

    exact = 0.5 * np.pi * r**4
    try:
        dm = disk_moment(r)
    except ValueError:
        dm = exact
    try:
        ratio = (dm - disk_moment(0.5 * r)) / dm
    except ValueError:
        ratio = None
    return GammaReport(1 - exact / moment, 1 - dm / moment, moment, dm, ratio)


@dataclass
class RotationCandidate:
    quotient: float
    lower_bound: float
    gamma: float
    projection_ratio: float

    def as_dict(self):
        return dict(self.__dict__)


def rotation_candidate(mesh, rho0, s0, x0, alpha=1.0):
    """Generalized quotient of the pair (r, w_bar) with w_bar from the gradient projection.

    Since sym grad r = 0 and grad w_bar is an orthogonal projection,
    quotient = rho0^-2 (||r||^2 - ||grad w_bar||^2) / ||grad r||^2, which is at least
    rho0^-2 (1 - sqrt(gamma))^2 ||r||^2 / ||grad r||^2.
    """
    space = P2Space.of(mesh)
    r = rigid_rotation(alpha, x0, space)
    proj = project_onto_gradients(r, mesh)
    pair = PlateField(space, r.phi, -proj.w)
    nrm = field_norms(pair, rho0)
    q = (nrm.symgrad_phi**2 + nrm.shear**2 / rho0**2) / nrm.grad_phi**2
    g = gamma_constant(mesh, s0, rho0, x0).gamma
    bound = (1 - np.sqrt(max(g, 0.0))) ** 2 * proj.phi_norm**2 / (rho0**2 * nrm.grad_phi**2)
    return RotationCandidate(q, bound, g, proj.grad_norm / proj.phi_norm)
