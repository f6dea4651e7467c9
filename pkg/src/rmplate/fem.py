"""P2 Lagrange discretisation of the Reissner-Mindlin bilinear form.

Unknowns are stacked as [phi_1 (ndof), phi_2 (ndof), w (ndof)], each block
ordered by P2 node index: mesh vertices first, then edge midpoints in the
order of ``Mesh.edges``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import os

import numpy as np
import scipy.sparse as sp

from . import quadrature as quad
from .geometry import Region

# local P2 node ordering: vertices 0, 1, 2 then midpoints of (0,1), (1,2), (2,0)
_EDGE_PAIRS = ((0, 1), (1, 2), (2, 0))


def worker_count():
    """Worker threads for element loops, capped by RM_PLATE_THREADS."""
    env = os.environ.get("RM_PLATE_THREADS")
    n = os.cpu_count() or 1
    if env:
        try:
            n = max(1, min(n, int(env)))
        except ValueError:
            pass
    return n


def p2_basis(lam):
    """P2 basis values at barycentric points ``lam`` (..., 3) -> (..., 6)."""
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0],
        axis=-1,
    )


def p2_basis_grad(lam, glam):
    """Basis gradients.

    ``lam`` has shape (m, q, 3), ``glam`` (the constant barycentric gradients)
    (m, 3, 2); returns (m, q, 6, 2).
    """
    g = glam[:, None, :, :]
    L = lam[..., None]
    out = [(4 * L[:, :, i] - 1) * g[:, :, i] for i in range(3)]
    out += [4 * (L[:, :, j] * g[:, :, i] + L[:, :, i] * g[:, :, j]) for i, j in _EDGE_PAIRS]
    return np.stack(out, axis=2)


class P2Space:
    """Scalar continuous P2 space on a mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.nv = mesh.n_nodes
        self.ne = len(mesh.edges)
        self.ndof = self.nv + self.ne
        self.elem_dofs = np.hstack([mesh.triangles, self.nv + mesh.triangle_edges])
        mids = 0.5 * (mesh.nodes[mesh.edges[:, 0]] + mesh.nodes[mesh.edges[:, 1]])
        self.dof_coords = np.vstack([mesh.nodes, mids])
        v = mesh.vertices
        jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)  # columns
        self.jac_inv = np.linalg.inv(jac)
        g12 = self.jac_inv  # rows: grad lambda_1, grad lambda_2
        self.grad_lambda = np.stack([-(g12[:, 0] + g12[:, 1]), g12[:, 0], g12[:, 1]], axis=1)
        self.N = p2_basis(quad.TRI_BARY)
        lam = np.broadcast_to(quad.TRI_BARY, (mesh.n_triangles, 7, 3))
        self.G = p2_basis_grad(lam, self.grad_lambda)

    @classmethod
    def of(cls, mesh):
        space = mesh.__dict__.get("_p2_space")
        if space is None:
            space = cls(mesh)
            mesh.__dict__["_p2_space"] = space
        return space

    # -- evaluation -------------------------------------------------------
    def _tris(self, tris):
        return slice(None) if tris is None else tris

    def values(self, coeffs, tris=None):
        """Values at quadrature points, (m, 7) or (m, 7, k)."""
        c = coeffs[self.elem_dofs[self._tris(tris)]]
        return np.einsum("qa,ma...->mq...", self.N, c)

    def gradients(self, coeffs, tris=None):
        """Gradients at quadrature points, (m, 7, 2) or (m, 7, k, 2)."""
        t = self._tris(tris)
        c = coeffs[self.elem_dofs[t]]
        return np.einsum("mqad,ma...->mq...d", self.G[t], c)

    @property
    def hessian_basis(self):
        """Constant Hessians of the six local basis functions, (m, 6, 2, 2)."""
        H = self.__dict__.get("_hess")
        if H is None:
            g = self.grad_lambda
            outer = lambda a, b: np.einsum("mi,mj->mij", a, b)
            H = [4 * outer(g[:, i], g[:, i]) for i in range(3)]
            H += [4 * (outer(g[:, i], g[:, j]) + outer(g[:, j], g[:, i])) for i, j in _EDGE_PAIRS]
            H = np.stack(H, axis=1)
            self.__dict__["_hess"] = H
        return H

    def hessians(self, coeffs):
        c = coeffs[self.elem_dofs]
        return np.einsum("maij,ma...->m...ij", self.hessian_basis, c)

    def barycentric(self, points, tris):
        v0 = self.mesh.vertices[tris, 0]
        l12 = np.einsum("nij,nj->ni", self.jac_inv[tris], points - v0)
        return np.column_stack([1 - l12.sum(1), l12])

    def evaluate(self, coeffs, points, nearest=True, grad=False):
        """Point values (and gradients) of a P2 field at arbitrary points."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        tris = self.mesh.locate(pts, nearest=nearest)
        if (tris < 0).any():
            raise ValueError("points outside the mesh")
        lam = self.barycentric(pts, tris)
        c = coeffs[self.elem_dofs[tris]]
        vals = np.einsum("na,na...->n...", p2_basis(lam), c)
        if not grad:
            return vals
        G = p2_basis_grad(lam[:, None, :], self.grad_lambda[tris])[:, 0]
        return vals, np.einsum("nad,na...->n...d", G, c)

    def interpolate(self, fn):
        return np.asarray(fn(self.dof_coords), dtype=float)

    # -- integrals ---------------------------------------------------------
    def basis_integrals(self, tris=None):
        """Vector of int N_a over the selected triangles."""
        t = np.arange(self.mesh.n_triangles) if tris is None else np.asarray(tris)
        w = self.mesh.quad_weights[t]
        loc = np.einsum("mq,qa->ma", w, self.N)
        return np.bincount(self.elem_dofs[t].ravel(), loc.ravel(), minlength=self.ndof)

    def gram(self, B, dofmap, n, weights=None):
        """Assemble sum_q w B_a . B_b for an operator B of shape (m, q, L, k)."""
        w = self.mesh.quad_weights if weights is None else weights
        Ke = np.einsum("mq,mqak,mqbk->mab", w, B, B)
        return _scatter(Ke, dofmap, n)

    def mass(self):
        B = np.broadcast_to(self.N[None, :, :, None], (self.mesh.n_triangles, 7, 6, 1))
        return self.gram(B, self.elem_dofs, self.ndof)

    def stiffness(self):
        return self.gram(self.G, self.elem_dofs, self.ndof)

    def vector_dofmap(self, ncomp):
        return np.hstack([self.elem_dofs + k * self.ndof for k in range(ncomp)])


def _scatter(Ke, dofmap, n):
    L = dofmap.shape[1]
    rows = np.repeat(dofmap, L, axis=1).ravel()
    cols = np.tile(dofmap, (1, L)).ravel()
    A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


# ---------------------------------------------------------------------------
# fields


@dataclass
class PlateField:
    """Discrete pair (phi, w) of P2 nodal coefficients."""

    space: P2Space
    phi: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float).reshape(self.space.ndof, 2)
        self.w = np.asarray(self.w, dtype=float).reshape(self.space.ndof)

    @property
    def mesh(self):
        return self.space.mesh

    @classmethod
    def zeros(cls, space):
        return cls(space, np.zeros((space.ndof, 2)), np.zeros(space.ndof))

    @classmethod
    def interpolate(cls, space, phi_fn=None, w_fn=None):
        x = space.dof_coords
        phi = np.zeros((space.ndof, 2)) if phi_fn is None else np.asarray(phi_fn(x), dtype=float)
        w = np.zeros(space.ndof) if w_fn is None else np.asarray(w_fn(x), dtype=float)
        return cls(space, phi, w)

    @classmethod
    def from_vector(cls, space, x):
        n = space.ndof
        x = np.asarray(x, dtype=float)
        return cls(space, np.column_stack([x[:n], x[n : 2 * n]]), x[2 * n : 3 * n])

    def vector(self):
        return np.concatenate([self.phi[:, 0], self.phi[:, 1], self.w])

    def __add__(self, other):
        return PlateField(self.space, self.phi + other.phi, self.w + other.w)

    def __sub__(self, other):
        return PlateField(self.space, self.phi - other.phi, self.w - other.w)

    def __mul__(self, alpha):
        return PlateField(self.space, alpha * self.phi, alpha * self.w)

    __rmul__ = __mul__

    def energy_density_integral(self, rho0, tris=None):
        """int |phi|^2 + rho0^-2 |w|^2 over the given triangles."""
        t = np.arange(self.mesh.n_triangles) if tris is None else tris
        phi = self.space.values(self.phi, t)
        w = self.space.values(self.w, t)
        dens = (phi**2).sum(-1) + w**2 / rho0**2
        return float((self.mesh.quad_weights[t] * dens).sum())


# ---------------------------------------------------------------------------
# operators at quadrature points


def bending_operator(space, tris=None):
    """B[m, q, a, i, j] = d_j (phi_i) for the 18 local (phi1, phi2, w) dofs."""
    G = space.G if tris is None else space.G[tris]
    m = G.shape[0]
    B = np.zeros((m, 7, 18, 2, 2))
    B[:, :, 0:6, 0, :] = G
    B[:, :, 6:12, 1, :] = G
    return B


def shear_operator(space, tris=None):
    """B[m, q, a, i] = (phi + grad w)_i for the 18 local dofs."""
    G = space.G if tris is None else space.G[tris]
    m = G.shape[0]
    B = np.zeros((m, 7, 18, 2))
    B[:, :, 0:6, 0] = space.N
    B[:, :, 6:12, 1] = space.N
    B[:, :, 12:18, :] = G
    return B


@dataclass
class SparseSystem:
    """Stiffness matrix of the plate form with the normalisation rows.

    ``constraint_rows`` (3, 3*ndof) hold int phi_1, int phi_2, int w.
    """

    space: P2Space
    material: object
    matrix: sp.csr_matrix
    constraint_rows: np.ndarray

    @property
    def n(self):
        return self.matrix.shape[0]

    def energy(self, field):
        x = field.vector()
        return float(x @ (self.matrix @ x))

    def form(self, u, v):
        return float(v.vector() @ (self.matrix @ u.vector()))


def _element_matrices(space, material, tris):
    mesh = space.mesh
    pts = mesh.quad_points[tris].reshape(-1, 2)
    m = len(tris)
    P = np.asarray(material.bending(pts), dtype=float).reshape(m, 7, 2, 2, 2, 2)
    S = np.asarray(material.shear(pts), dtype=float).reshape(m, 7, 2, 2)
    w = mesh.quad_weights[tris]
    Bb = bending_operator(space, tris)
    Bs = shear_operator(space, tris)
    PB = np.einsum("mqijkl,mqbkl->mqbij", P, Bb)
    SB = np.einsum("mqij,mqbj->mqbi", S, Bs)
    return np.einsum("mq,mqaij,mqbij->mab", w, Bb, PB) + np.einsum("mq,mqai,mqbi->mab", w, Bs, SB)


def assemble_system(mesh, material, chunk=2048):
    """Assemble a((phi,w),(psi,v)) = int P grad phi . grad psi + S(phi+grad w).(psi+grad v).

    Coefficients are sampled at the quadrature points.  Element chunks may be
    processed by several threads; the reduction order is fixed.
    """
    space = P2Space.of(mesh)
    chunks = [np.arange(s, min(s + chunk, mesh.n_triangles)) for s in range(0, mesh.n_triangles, chunk)]
    workers = min(worker_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda t: _element_matrices(space, material, t), chunks))
    else:
        parts = [_element_matrices(space, material, t) for t in chunks]
    Ke = np.concatenate(parts)
    dofmap = space.vector_dofmap(3)
    A = _scatter(Ke, dofmap, 3 * space.ndof)
    A = (A + A.T) * 0.5
    return SparseSystem(space, material, A.tocsr(), normalization_rows(space))


def normalization_rows(space):
    c = space.basis_integrals()
    n = space.ndof
    C = np.zeros((3, 3 * n))
    for k in range(3):
        C[k, k * n : (k + 1) * n] = c
    return C


# ---------------------------------------------------------------------------
# boundary data and loads

_TRACE_NODES = np.array([0.0, 0.5, 1.0])


def _lagrange_1d(t):
    """Quadratic Lagrange basis on nodes (0, 1/2, 1) at parameters t."""
    t = np.asarray(t)
    return np.stack([(1 - t) * (1 - 2 * t), 4 * t * (1 - t), t * (2 * t - 1)], axis=-1)


class BoundaryDataError(ValueError):
    pass


@dataclass
class BoundaryData:
    """Edgewise quadratic traces of Q (scalar) and M (vector).

    Values are stored at the start, midpoint and end of every boundary edge:
    ``Q`` has shape (nb, 3), ``M`` shape (nb, 3, 2).
    """

    mesh: object
    Q: np.ndarray
    M: np.ndarray
    note: str = ""

    def __post_init__(self):
        nb = len(self.mesh.boundary_edges)
        self.Q = np.asarray(self.Q, dtype=float).reshape(nb, 3)
        self.M = np.asarray(self.M, dtype=float).reshape(nb, 3, 2)
        if not (np.isfinite(self.Q).all() and np.isfinite(self.M).all()):
            raise BoundaryDataError("boundary data must be finite")

    @classmethod
    def zero(cls, mesh):
        nb = len(mesh.boundary_edges)
        return cls(mesh, np.zeros((nb, 3)), np.zeros((nb, 3, 2)))

    @classmethod
    def from_functions(cls, mesh, Q=None, M=None):
        """Sample ``Q(x, n)`` and ``M(x, n)`` at the three trace nodes of each edge.

        ``n`` is the outward unit normal of the edge; the unit tangent used by
        the boundary orientation is (-n_2, n_1).
        """
        a, b, _, _, normal = mesh.boundary_geometry
        nb = len(a)
        pts = a[:, None, :] + _TRACE_NODES[None, :, None] * (b - a)[:, None, :]
        nrm = np.broadcast_to(normal[:, None, :], pts.shape)
        flat_x, flat_n = pts.reshape(-1, 2), nrm.reshape(-1, 2)
        q = np.zeros((nb, 3)) if Q is None else np.asarray(Q(flat_x, flat_n), dtype=float).reshape(nb, 3)
        m = np.zeros((nb, 3, 2)) if M is None else np.asarray(M(flat_x, flat_n), dtype=float).reshape(nb, 3, 2)
        return cls(mesh, q, m)

    def scaled(self, alpha):
        return BoundaryData(self.mesh, alpha * self.Q, alpha * self.M, self.note)

    def __add__(self, other):
        return BoundaryData(self.mesh, self.Q + other.Q, self.M + other.M, self.note)

    def at_gauss(self):
        """(points, weights, Q, M) at the 3 Gauss points of every edge."""
        a, b, length, _, _ = self.mesh.boundary_geometry
        pts = quad.segment_points(a, b)
        L = _lagrange_1d(quad.EDGE_POINTS)  # (3 gauss, 3 nodes)
        q = self.Q @ L.T
        m = np.einsum("gk,ekc->egc", L, self.M)
        w = length[:, None] * quad.EDGE_WEIGHTS[None, :]
        return pts, w, q, m

    def l2_norms(self):
        _, w, q, m = self.at_gauss()
        return float(np.sqrt((w * q**2).sum())), float(np.sqrt((w[..., None] * m**2).sum()))

    def h1_norms(self, rho0=1.0):
        """Edgewise H^1(boundary) norms (||g||^2 + rho0^2 ||dg/ds||^2)^(1/2)."""
        _, w, q, m = self.at_gauss()
        length = self.mesh.boundary_geometry[2]
        t = quad.EDGE_POINTS
        dL = np.stack([4 * t - 3, 4 - 8 * t, 4 * t - 1], axis=-1) / length[:, None, None]
        dq = np.einsum("egk,ek->eg", dL, self.Q)
        dm = np.einsum("egk,ekc->egc", dL, self.M)
        nq = (w * (q**2 + rho0**2 * dq**2)).sum()
        nm = (w[..., None] * (m**2 + rho0**2 * dm**2)).sum()
        return float(np.sqrt(nq)), float(np.sqrt(nm))

    def vertex_jumps(self):
        """Largest jump of Q and M between consecutive edges at boundary vertices."""
        be = self.mesh.boundary_edges
        start_of = {a: i for i, a in enumerate(be[:, 0].tolist())}
        nxt = np.array([start_of[b] for b in be[:, 1].tolist()])
        jq = np.abs(self.Q[:, 2] - self.Q[nxt, 0])
        jm = np.abs(self.M[:, 2] - self.M[nxt, 0]).max(axis=-1)
        return float(jq.max(initial=0.0)), float(jm.max(initial=0.0))


def assemble_boundary_load(mesh, data):
    """Load vector of int_{boundary} Q v + M . psi against the P2 traces."""
    if any(t == "" for t in mesh.boundary_tags):
        raise BoundaryDataError("untagged boundary edge")
    space = P2Space.of(mesh)
    n = space.ndof
    be = mesh.boundary_edges
    mid = space.nv + mesh.edge_ids(be)
    dofs = np.stack([be[:, 0], mid, be[:, 1]], axis=1)  # trace nodes 0, 1/2, 1
    _, w, q, m = data.at_gauss()
    L = _lagrange_1d(quad.EDGE_POINTS)
    Fq = np.einsum("eg,eg,gk->ek", w, q, L)
    Fm = np.einsum("eg,egc,gk->ekc", w, m, L)
    F = np.zeros(3 * n)
    F[:n] = np.bincount(dofs.ravel(), Fm[..., 0].ravel(), minlength=n)
    F[n : 2 * n] = np.bincount(dofs.ravel(), Fm[..., 1].ravel(), minlength=n)
    F[2 * n :] = np.bincount(dofs.ravel(), Fq.ravel(), minlength=n)
    return F


def assemble_interior_load(mesh, f=None, g=None):
    """Load vector of int f . psi + g v (f vector field, g scalar field)."""
    space = P2Space.of(mesh)
    n = space.ndof
    pts = mesh.quad_points.reshape(-1, 2)
    w = mesh.quad_weights
    F = np.zeros(3 * n)
    dofs = space.elem_dofs.ravel()
    if f is not None:
        fv = np.asarray(f(pts), dtype=float).reshape(mesh.n_triangles, 7, 2)
        for k in range(2):
            loc = np.einsum("mq,mq,qa->ma", w, fv[..., k], space.N)
            F[k * n : (k + 1) * n] = np.bincount(dofs, loc.ravel(), minlength=n)
    if g is not None:
        gv = np.asarray(g(pts), dtype=float).reshape(mesh.n_triangles, 7)
        loc = np.einsum("mq,mq,qa->ma", w, gv, space.N)
        F[2 * n :] = np.bincount(dofs, loc.ravel(), minlength=n)
    return F


# ---------------------------------------------------------------------------
# norms


@dataclass
class FieldNorms:
    L2_phi: float
    L2_w: float
    grad_phi: float
    grad_w: float
    H1_phi: float
    H1_w: float
    symgrad_phi: float
    shear: float
    H_norm: float

    def as_dict(self):
        return dict(self.__dict__)


def field_norms(field, rho0=1.0, region=None):
    """L2, H1 (rho0-scaled), symmetric-gradient and shear norms of a pair.

    ||u||_{H1}^2 = ||u||^2 + rho0^2 ||grad u||^2 and
    H_norm = ||phi||_{H1} + ||w||_{H1} / rho0.
    """
    space = field.space
    mesh = space.mesh
    tris = None if region is None else region.triangles(mesh)
    w = mesh.quad_weights if tris is None else mesh.quad_weights[tris]
    phi = space.values(field.phi, tris)
    gphi = space.gradients(field.phi, tris)  # (m, q, comp, dir)
    wv = space.values(field.w, tris)
    gw = space.gradients(field.w, tris)

    def integ(x):
        return float((w * x).sum())

    l2p = integ((phi**2).sum(-1))
    l2w = integ(wv**2)
    gp = integ((gphi**2).sum((-1, -2)))
    gwn = integ((gw**2).sum(-1))
    sym = 0.5 * (gphi + np.swapaxes(gphi, -1, -2))
    sg = integ((sym**2).sum((-1, -2)))
    sh = integ(((phi + gw) ** 2).sum(-1))
    h1p = np.sqrt(l2p + rho0**2 * gp)
    h1w = np.sqrt(l2w + rho0**2 * gwn)
    vals = [np.sqrt(l2p), np.sqrt(l2w), np.sqrt(gp), np.sqrt(gwn), h1p, h1w, np.sqrt(sg), np.sqrt(sh)]
    vals.append(h1p + h1w / rho0)
    return FieldNorms(*map(float, vals))


def field_integrals(field, region=None):
    """(int phi_1, int phi_2, int w) over a region."""
    space = field.space
    tris = (region or Region.whole()).triangles(space.mesh)
    c = space.basis_integrals(tris)
    return np.array([c @ field.phi[:, 0], c @ field.phi[:, 1], c @ field.w])
