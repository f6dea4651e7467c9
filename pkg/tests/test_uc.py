import numpy as np
import pytest

from rmplate.fem import P2Space, PlateField
from rmplate.geometry import make_disk_mesh, make_rect_mesh, refine
from rmplate.material import LameField
from rmplate.mms import homogeneous_solution
from rmplate.uc import (
    TAU_CAVEAT,
    ThreeSpheresError,
    auxiliary_coeffs,
    auxiliary_field,
    const_w_field,
    three_spheres,
    tau_trend,
    transformed_residuals,
    vanishing_order,
)


@pytest.fixture(scope="module")
def rings():
    return make_disk_mesh((0, 0), 1.0, [0.125, 0.25, 0.5, 1.0], 32, 1)


def test_coefficients_examples():
    p = np.zeros((1, 2))
    c = auxiliary_coeffs(LameField.uniform(1, 1))
    assert c.a(p)[0] == pytest.approx(5 / 8, rel=1e-15) and c.b(p)[0] == pytest.approx(8 / 3, rel=1e-15)
    c0 = auxiliary_coeffs(LameField.uniform(0, 1))
    assert c0.a(p)[0] == 0.5 and c0.b(p)[0] == 2.0


def test_coefficient_identity_variable(rng):
    lame = LameField(lambda x: 1 + x[:, 0] ** 2, lambda x: 2 + np.sin(x[:, 1]), 1.0, 10.0, 5.0)
    assert auxiliary_coeffs(lame).identity_defect(rng.uniform(-1, 1, (1000, 2))) < 1e-14


def test_auxiliary_field_examples(square1):
    sp = P2Space.of(square1)
    x = sp.dof_coords
    c = auxiliary_coeffs(LameField.uniform(0, 1))  # b = 2
    zero = np.zeros(sp.ndof)
    v = auxiliary_field(PlateField(sp, x.copy(), zero), c)
    assert np.allclose(v, 4.0, atol=1e-13)
    v = auxiliary_field(PlateField(sp, np.column_stack([x[:, 1], -x[:, 0]]), zero), c)
    assert np.abs(v).max() < 1e-13
    v = auxiliary_field(PlateField(sp, np.column_stack([x[:, 0] ** 2, zero]), zero), c)
    assert np.allclose(v, 4.0 * square1.quad_points[..., 0], atol=1e-13)


def test_kernel_field_residuals_vanish(square1):
    sp = P2Space.of(square1)
    x = sp.dof_coords
    b = np.array([0.4, -1.1])
    fld = PlateField(sp, np.tile(-b, (sp.ndof, 1)), x @ b + 0.3)
    rep = transformed_residuals(fld, LameField.uniform(1, 1), 1.0, 0.1)
    assert max(rep.as_tuple()) < 1e-10


def test_random_field_detected(square1, rng):
    sp = P2Space.of(square1)
    fld = PlateField(sp, rng.standard_normal((sp.ndof, 2)), rng.standard_normal(sp.ndof))
    rep = transformed_residuals(fld, LameField.uniform(1, 1), 1.0, 0.1)
    assert min(rep.as_tuple()) > 1e-3 * rep.reference


def test_constant_coefficients_drop_equivalence(square1, rng):
    sp = P2Space.of(square1)
    fld = PlateField(sp, rng.standard_normal((sp.ndof, 2)), rng.standard_normal(sp.ndof))
    lame = LameField.uniform(1.5, 0.7)
    full = transformed_residuals(fld, lame, 1.0, 0.1).as_tuple()
    drop = transformed_residuals(fld, lame, 1.0, 0.1, drop_coefficient_gradients=True).as_tuple()
    assert np.allclose(full, drop, rtol=1e-12, atol=0)


def test_manufactured_residuals_decrease():
    ms = homogeneous_solution()
    lame = LameField.uniform(1, 1)
    base = make_rect_mesh(0.5, 0.5, 2)
    r3 = []
    for lev in range(3):
        m = base if lev == 0 else refine(base, lev)
        r3.append(transformed_residuals(ms.interpolate(P2Space.of(m)), lame, 1.0, 0.1).r3)
    assert r3[0] > r3[1] > r3[2]
    assert np.log2(r3[1] / r3[2]) >= 0.9


def test_const_w_tau_is_half(rings):
    sp = P2Space.of(rings)
    s = three_spheres(const_w_field(sp, 2.0), (0, 0), 1.0, 0.5, 0.25, rho0=2.0)
    assert s.tau_emp == pytest.approx(0.5, rel=1e-13)
    assert s.N[2] <= s.N[1] <= s.N[0]
    assert s.caveat == TAU_CAVEAT and s.as_dict()["R2"] == 0.5


def test_three_spheres_guards(rings):
    sp = P2Space.of(rings)
    zero = PlateField.zeros(sp)
    with pytest.raises(ThreeSpheresError):
        three_spheres(zero, (0, 0), 1.0, 0.5, 0.25)
    one = const_w_field(sp)
    with pytest.raises(ThreeSpheresError):
        three_spheres(one, (0, 0), 0.5, 1.0, 0.25)
    with pytest.raises(ThreeSpheresError):
        three_spheres(one, (0, 0), 1.0, 0.5, 0.3)  # not a marked circle


def test_tau_trend_const_w(rings):
    with pytest.raises(ThreeSpheresError):
        tau_trend(const_w_field(P2Space.of(rings)), (0, 0), 1.0, 0.5, [0.25, 0.125])
    m = make_disk_mesh((0, 0), 1.0, [1 / 32, 1 / 16, 0.125, 0.25, 0.5, 1.0], 32, 1)
    t = tau_trend(const_w_field(P2Space.of(m)), (0, 0), 1.0, 0.5, [0.25, 0.125, 1 / 16, 1 / 32])
    assert t.slope == pytest.approx(np.log(2.0), rel=1e-12)
    taus = [r[1] for r in t.rows]
    assert all(a > b for a, b in zip(taus, taus[1:]))
    assert t.correlation == pytest.approx(1.0, abs=1e-12)


def test_vanishing_order_slopes(rings):
    sp = P2Space.of(rings)
    x = sp.dof_coords
    radii = [1.0, 0.5, 0.25, 0.125]
    rep = vanishing_order(const_w_field(sp), (0, 0), radii)
    assert np.allclose(rep.slopes, 2.0, atol=1e-12) and rep.bounded
    line = PlateField(sp, np.zeros((sp.ndof, 2)), x[:, 0].copy())
    rep = vanishing_order(line, (0, 0), radii)
    assert np.allclose(rep.slopes, 4.0, atol=0.02)
    with pytest.raises(ThreeSpheresError):
        vanishing_order(PlateField.zeros(sp), (0, 0), radii)
