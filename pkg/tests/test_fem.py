import numpy as np
import pytest

from rmplate.fem import (
    BoundaryData,
    BoundaryDataError,
    P2Space,
    PlateField,
    assemble_boundary_load,
    assemble_interior_load,
    assemble_system,
    field_integrals,
    field_norms,
    worker_count,
)
from rmplate.geometry import Mesh, make_rect_mesh, refine
from rmplate.material import LameField, ellipticity_constants, isotropic_plate


@pytest.fixture(scope="module")
def sys_square(square1, iso):
    return assemble_system(square1, iso)


def test_zero_field_energy(sys_square):
    assert sys_square.energy(PlateField.zeros(sys_square.space)) == 0.0


@pytest.mark.parametrize("a,b", [(0.0, (1.0, 0.0)), (2.0, (-0.3, 0.7)), (1.0, (0.0, 0.0))])
def test_rigid_family_has_zero_energy(sys_square, a, b):
    sp = sys_square.space
    b = np.array(b)
    f = PlateField(sp, np.tile(-b, (sp.ndof, 1)), sp.dof_coords @ b + a)
    scale = np.abs(sys_square.matrix).sum() * (f.vector() ** 2).sum()
    assert abs(sys_square.energy(f)) <= 1e-12 * scale


def test_matrix_symmetric(sys_square):
    A = sys_square.matrix
    assert abs(A - A.T).max() <= 1e-14 * abs(A).max()


def _independent_p2(nodes):
    """Monomial-based P2 basis on the six nodes: coefficient matrix and evaluators."""
    V = lambda p: np.column_stack([np.ones(len(p)), p[:, 0], p[:, 1], p[:, 0] ** 2, p[:, 0] * p[:, 1], p[:, 1] ** 2])
    Dx = lambda p: np.column_stack([0 * p[:, 0], np.ones(len(p)), 0 * p[:, 0], 2 * p[:, 0], p[:, 1], 0 * p[:, 0]])
    Dy = lambda p: np.column_stack([0 * p[:, 0], 0 * p[:, 0], np.ones(len(p)), 0 * p[:, 0], p[:, 0], 2 * p[:, 1]])
    C = np.linalg.inv(V(nodes))
    return (lambda p: V(p) @ C), (lambda p: Dx(p) @ C), (lambda p: Dy(p) @ C)


def _collapsed_gauss(verts, n=8):
    """Duffy-collapsed Gauss rule on a triangle (exact far beyond degree 4)."""
    x, w = np.polynomial.legendre.leggauss(n)
    u, wu = (x + 1) / 2, w / 2
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(wu, wu) * (1 - U)
    s, t = U.ravel(), (V * (1 - U)).ravel()
    a, b, c = verts
    pts = a + np.outer(s, b - a) + np.outer(t, c - a)
    d1, d2 = b - a, c - a
    jac = abs(d1[0] * d2[1] - d1[1] * d2[0])
    return pts, W.ravel() * jac


def test_single_triangle_matches_dense_oracle():
    nodes = np.array([[0.1, -0.2], [1.3, 0.1], [0.4, 0.9]])
    mesh = Mesh(nodes, [[0, 1, 2]], [[0, 1], [1, 2], [2, 0]], ("a", "b", "c"))
    mat = isotropic_plate(LameField.uniform(0.7, 1.3), 0.4)
    A = assemble_system(mesh, mat).matrix.toarray()
    sp = P2Space.of(mesh)
    N, Dx, Dy = _independent_p2(sp.dof_coords)
    pts, w = _collapsed_gauss(nodes)
    n = sp.ndof
    # unknowns: phi1 (n), phi2 (n), w (n)
    P = mat.bending(pts[:1])[0]
    S = mat.shear(pts[:1])[0]
    vals, gx, gy = N(pts), Dx(pts), Dy(pts)
    Z = np.zeros_like(vals)
    # grad phi for each basis function: [comp, dir]
    grads = []
    shears = []
    for comp in range(2):
        for a in range(n):
            G = np.zeros((len(pts), 2, 2))
            G[:, comp, 0], G[:, comp, 1] = gx[:, a], gy[:, a]
            grads.append(G)
            sh = np.zeros((len(pts), 2))
            sh[:, comp] = vals[:, a]
            shears.append(sh)
    for a in range(n):
        grads.append(np.zeros((len(pts), 2, 2)))
        shears.append(np.column_stack([gx[:, a], gy[:, a]]))
    K = np.zeros((3 * n, 3 * n))
    for i in range(3 * n):
        PG = np.einsum("ijkl,qkl->qij", P, grads[i])
        SG = shears[i] @ S.T
        for j in range(3 * n):
            K[i, j] = w @ ((PG * grads[j]).sum((1, 2)) + (SG * shears[j]).sum(1))
    assert np.allclose(A, K, rtol=0, atol=1e-12 * np.abs(K).max())
    del Z


def test_boundary_load_q_one_gives_perimeter(unit_square):
    data = BoundaryData.from_functions(unit_square, lambda x, n: np.ones(len(x)))
    F = assemble_boundary_load(unit_square, data)
    sp = P2Space.of(unit_square)
    v = PlateField(sp, np.zeros((sp.ndof, 2)), np.ones(sp.ndof)).vector()
    assert F @ v == pytest.approx(4.0, rel=1e-14)


def test_boundary_load_normal_couple_gives_twice_area(unit_square):
    data = BoundaryData.from_functions(unit_square, None, lambda x, n: n)
    F = assemble_boundary_load(unit_square, data)
    sp = P2Space.of(unit_square)
    psi = PlateField(sp, sp.dof_coords.copy(), np.zeros(sp.ndof)).vector()
    assert F @ psi == pytest.approx(2 * unit_square.area, rel=1e-14)


def test_zero_boundary_data_zero_load(unit_square):
    assert not assemble_boundary_load(unit_square, BoundaryData.zero(unit_square)).any()


def test_untagged_boundary_edge_rejected():
    m = make_rect_mesh(1, 1, 1)
    bad = Mesh(m.nodes, m.triangles, m.boundary_edges, ("",) + m.boundary_tags[1:])
    with pytest.raises(BoundaryDataError):
        assemble_boundary_load(bad, BoundaryData.zero(bad))


def test_nonfinite_boundary_data_rejected(unit_square):
    with pytest.raises(BoundaryDataError):
        BoundaryData.from_functions(unit_square, lambda x, n: np.full(len(x), np.nan))


def test_interior_loads():
    m = make_rect_mesh(1, 1, 2)
    sp = P2Space.of(m)
    assert not assemble_interior_load(m).any()
    Fg = assemble_interior_load(m, g=lambda x: np.ones(len(x)))
    one = PlateField(sp, np.zeros((sp.ndof, 2)), np.ones(sp.ndof)).vector()
    assert Fg @ one == pytest.approx(4.0, rel=1e-14)
    unit = make_rect_mesh(0.5, 0.5, 2)
    spu = P2Space.of(unit)
    Fu = assemble_interior_load(unit, g=lambda x: np.ones(len(x)))
    assert Fu @ PlateField(spu, np.zeros((spu.ndof, 2)), np.ones(spu.ndof)).vector() == pytest.approx(1.0)
    Ff = assemble_interior_load(m, f=lambda x: np.column_stack([np.ones(len(x)), np.zeros(len(x))]))
    psi = PlateField(sp, np.column_stack([sp.dof_coords[:, 0], np.zeros(sp.ndof)]), np.zeros(sp.ndof)).vector()
    assert abs(Ff @ psi) < 1e-14


def test_field_norms_of_linear_deflection():
    m = make_rect_mesh(1, 1, 2)
    sp = P2Space.of(m)
    f = PlateField(sp, np.zeros((sp.ndof, 2)), sp.dof_coords[:, 0].copy())
    n = field_norms(f, 1.0)
    assert n.L2_w**2 == pytest.approx(4.0 / 3.0, rel=1e-13)
    assert n.grad_w**2 == pytest.approx(4.0, rel=1e-13)
    assert n.shear**2 == pytest.approx(4.0, rel=1e-13)
    assert n.H_norm == pytest.approx(np.sqrt(4.0 / 3.0 + 4.0), rel=1e-13)


def test_rotation_has_zero_symmetric_gradient(square1):
    sp = P2Space.of(square1)
    x = sp.dof_coords
    f = PlateField(sp, np.column_stack([x[:, 1], -x[:, 0]]), np.zeros(sp.ndof))
    assert field_norms(f).symgrad_phi < 1e-13


def test_shear_cancels_for_gradient_pair(square1):
    sp = P2Space.of(square1)
    x = sp.dof_coords
    w = x[:, 0] ** 2 - x[:, 0] * x[:, 1]
    phi = -np.column_stack([2 * x[:, 0] - x[:, 1], -x[:, 0]])
    assert field_norms(PlateField(sp, phi, w)).shear < 1e-13


def test_norms_scale_linearly(square1, rng):
    sp = P2Space.of(square1)
    f = PlateField(sp, rng.standard_normal((sp.ndof, 2)), rng.standard_normal(sp.ndof))
    a, b = field_norms(f, 0.7), field_norms(f * -3.0, 0.7)
    for k, v in a.as_dict().items():
        assert getattr(b, k) == pytest.approx(3.0 * v, rel=1e-12)


def test_coercivity_lower_bound(sys_square, iso, rng):
    c = ellipticity_constants(iso)
    h = iso.h
    sp = sys_square.space
    for _ in range(20):
        f = PlateField(sp, rng.standard_normal((sp.ndof, 2)), rng.standard_normal(sp.ndof))
        n = field_norms(f)
        lower = h**3 / 12 * c.xi0 * n.symgrad_phi**2 + h * c.sigma0 * n.shear**2
        assert sys_square.energy(f) >= lower * (1 - 1e-10)


def test_assembly_order_independent(iso):
    m = make_rect_mesh(0.5, 0.5, 2)
    perm = np.random.default_rng(5).permutation(m.n_triangles)
    mp = Mesh(m.nodes, m.triangles[perm], m.boundary_edges, m.boundary_tags)
    A, B = assemble_system(m, iso).matrix, assemble_system(mp, iso).matrix
    # the P2 dof numbering follows the sorted edge list, so dofs coincide
    assert np.array_equal(P2Space.of(m).dof_coords, P2Space.of(mp).dof_coords)
    assert abs(A - B).max() <= 1e-13 * abs(A).max()


def test_threaded_assembly_matches_serial(iso, monkeypatch):
    m = refine(make_rect_mesh(0.5, 0.5, 2), 1)
    monkeypatch.setenv("RM_PLATE_THREADS", "1")
    A = assemble_system(m, iso, chunk=16).matrix
    monkeypatch.setattr("rmplate.fem.worker_count", lambda: 4)
    B = assemble_system(m, iso, chunk=16).matrix
    assert abs(A - B).max() == 0.0


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("RM_PLATE_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("RM_PLATE_THREADS", "junk")
    assert worker_count() >= 1


def test_field_integrals_and_interpolation(square1):
    sp = P2Space.of(square1)
    f = PlateField.interpolate(sp, lambda x: np.column_stack([x[:, 0] ** 2, np.ones(len(x))]), lambda x: x[:, 1] + 2)
    ints = field_integrals(f)
    assert np.allclose(ints, [1.0 / 12.0, 1.0, 2.0], rtol=1e-13)
    assert np.allclose(sp.evaluate(f.w, np.array([[0.1, 0.2]])), 2.2)
    assert np.allclose(PlateField.from_vector(sp, f.vector()).phi, f.phi)


def test_edge_dof_continuity(square1, rng):
    """A P2 field takes the same values on a shared edge from both sides."""
    sp = P2Space.of(square1)
    c = rng.standard_normal(sp.ndof)
    et = square1.edge_triangles
    inner = np.flatnonzero(et[:, 1] >= 0)[:20]
    e = square1.edges[inner]
    pts = 0.3 * square1.nodes[e[:, 0]] + 0.7 * square1.nodes[e[:, 1]]
    from rmplate.fem import p2_basis

    vals = []
    for side in (0, 1):
        tris = et[inner, side]
        lam = sp.barycentric(pts, tris)
        vals.append((p2_basis(lam) * c[sp.elem_dofs[tris]]).sum(-1))
    assert np.allclose(vals[0], vals[1], atol=1e-13)
