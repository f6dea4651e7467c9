import numpy as np
import pytest

from rmplate.fem import P2Space, PlateField, field_norms
from rmplate.geometry import Mesh, Region, make_disk_mesh, make_rect_mesh
from rmplate.korn import (
    KINDS,
    best_constant,
    constant_sequence,
    constrained_min_quotient,
    gamma_constant,
    project_onto_gradients,
    quotient_forms,
    quotient_value,
    rigid_rotation,
    rotation_candidate,
    verify_inequality,
)

J11_PRIME = 1.8411837813406593  # first zero of J1'


@pytest.fixture(scope="module")
def disk_quarter():
    return make_disk_mesh((0, 0), 0.25, [0.125, 0.25], 16, 1)


def test_rigid_rotation_formula(square1):
    sp = P2Space.of(square1)
    r = rigid_rotation(1.0, (0, 0), sp)
    x = sp.dof_coords
    assert np.array_equal(r.phi, np.column_stack([x[:, 1], -x[:, 0]]))
    assert not r.w.any()
    assert field_norms(r).symgrad_phi < 1e-13


def test_rotation_norm_on_disk():
    s0, rho0, alpha = 0.5, 2.0, 1.5
    m = make_disk_mesh((0.3, -0.2), s0 * rho0, [s0 * rho0], 64, 1)
    r = rigid_rotation(alpha, (0.3, -0.2), P2Space.of(m))
    got = field_norms(r).L2_phi ** 2
    exact = 0.5 * np.pi * alpha**2 * s0**4 * rho0**4
    # polygonal boundary: relative area defect O(h^2)
    assert got == pytest.approx(exact, rel=2e-3)


def test_projection_of_gradient_is_exact(square1):
    sp = P2Space.of(square1)
    x = sp.dof_coords
    proj = project_onto_gradients(np.column_stack([2 * x[:, 0], np.zeros(sp.ndof)]), square1)
    assert proj.distance < 1e-10
    assert proj.orthogonality_residual < 1e-10


def test_projection_of_rotation_on_disk_vanishes(disk_quarter):
    r = rigid_rotation(1.0, (0, 0), P2Space.of(disk_quarter))
    proj = project_onto_gradients(r, disk_quarter)
    assert proj.grad_norm / proj.phi_norm < 1e-8


def test_projection_of_rotation_on_square_bounded_by_gamma(unit_square):
    x0 = (0.0, 0.0)
    r = rigid_rotation(1.0, x0, P2Space.of(unit_square))
    proj = project_onto_gradients(r, unit_square)
    g = gamma_constant(unit_square, 0.25, 1.0, x0)
    assert proj.grad_norm <= np.sqrt(g.gamma) * proj.phi_norm


def test_gamma_on_the_disk_itself(disk_quarter):
    g = gamma_constant(disk_quarter, 0.25, 1.0, (0, 0))
    assert g.gamma_discrete == pytest.approx(0.0, abs=1e-14)
    assert g.annulus_ratio == pytest.approx(15.0 / 16.0, rel=1e-3)


def test_gamma_unit_square(unit_square):
    g = gamma_constant(unit_square, 0.25, 1.0, (0.0, 0.0))
    assert g.second_moment == pytest.approx(1.0 / 6.0, rel=1e-13)
    assert g.gamma == pytest.approx(1 - (np.pi / 512) / (1 / 6), rel=1e-13)


def test_gamma_disk_outside_domain(unit_square):
    with pytest.raises(ValueError):
        gamma_constant(unit_square, 0.4, 1.0, (0.3, 0.3))


def test_poincare_disk_converges_from_below():
    m = make_disk_mesh((0, 0), 1.0, [1.0], 16, 0)
    reps = constant_sequence("poincare", m, 2)
    eig = [r.eigenvalue for r in reps]
    assert eig[0] > eig[1] > eig[2] > J11_PRIME**2
    assert eig[2] == pytest.approx(J11_PRIME**2, rel=5e-3)
    for r in reps:
        assert r.best_constant == pytest.approx(r.eigenvalue ** -0.5, rel=1e-15)
        assert r.best_constant < 1 / J11_PRIME


def test_w_free_never_above_w_frozen(unit_square):
    free = best_constant("generalized", unit_square)
    frozen = best_constant("generalized", unit_square, w_free=False)
    assert free.eigenvalue <= frozen.eigenvalue * (1 + 1e-10)


def test_rotation_candidate_respects_gamma_chain(unit_square):
    c = rotation_candidate(unit_square, 1.0, 0.25, (0.0, 0.0))
    assert c.quotient >= c.lower_bound * (1 - 1e-12)
    assert 0 < c.gamma < 1


@pytest.mark.parametrize("kind", KINDS)
def test_random_samples_obey_best_constant(kind, unit_square):
    rep = best_constant(kind, unit_square)
    chk = verify_inequality(rep, unit_square, trials=100, seed=1)
    assert chk.passed and chk.violations == 0
    assert chk.max_quotient <= rep.best_constant * (1 + 1e-8)


def test_minimiser_attains_eigenvalue(unit_square):
    rep = best_constant("generalized", unit_square)
    q = quotient_value("generalized", unit_square, rep.minimiser)
    assert q == pytest.approx(rep.eigenvalue, rel=1e-8)


def test_gradient_pair_within_bound(unit_square):
    rep = best_constant("generalized", unit_square)
    sp = P2Space.of(unit_square)
    x = sp.dof_coords
    w = x[:, 0] ** 2 + x[:, 0] * x[:, 1]
    pair = PlateField(sp, -np.column_stack([2 * x[:, 0] + x[:, 1], x[:, 0]]), w)
    chk = verify_inequality(rep, unit_square, samples=[pair])
    assert chk.passed and np.isfinite(chk.max_quotient)


def test_dense_and_sparse_paths_agree(unit_square):
    for kind in ("poincare", "generalized"):
        f = quotient_forms(kind, unit_square)
        dense, _ = constrained_min_quotient(f.num, f.den, f.constraints, f.kernel, dense_limit=10**6)
        sparse, _ = constrained_min_quotient(f.num, f.den, f.constraints, f.kernel, dense_limit=0)
        assert sparse == pytest.approx(dense, rel=1e-8)


def test_poincare_scale_invariant():
    m = make_rect_mesh(0.5, 0.5, 2)
    big = Mesh(2.0 * m.nodes, m.triangles, m.boundary_edges, m.boundary_tags)
    a = best_constant("poincare", m, rho0=1.0).eigenvalue
    b = best_constant("poincare", big, rho0=2.0).eigenvalue
    assert b == pytest.approx(a, rel=1e-12)


def test_region_constraint_recorded(unit_disk):
    rep = best_constant("generalized", unit_disk, region=Region.disk(0))
    assert rep.params["region"] == "disk:0" and rep.best_constant > 0


def test_unknown_kind(unit_square):
    with pytest.raises(ValueError):
        quotient_forms("bogus", unit_square)
