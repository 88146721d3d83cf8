import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from penningtrap import constants as const
from penningtrap import geometry as geo
from penningtrap import modes as m

UM = 1e-6
WZ = const.TWO_PI * 2.5e6


def _quadrature_potential(el, p):
    """Dirichlet Green's function of the grounded plane integrated over one rectangle."""
    x, y, z = p

    def f(zz, xx):
        return y / (2 * math.pi) / ((x - xx) ** 2 + y**2 + (z - zz) ** 2) ** 1.5

    val, _ = integrate.dblquad(f, el.x0, el.x1, el.z0, el.z1, epsabs=0, epsrel=1e-12)
    return val


@pytest.mark.parametrize("label,point", [
    ("M4", (0.0, 152 * UM, 0.0)),
    ("M1", (30 * UM, 80 * UM, -40 * UM)),
    ("L3", (-150 * UM, 200 * UM, 120 * UM)),
])
def test_basis_potential_matches_quadrature(geom, label, point):
    el = geom.electrodes[geom.index(label)]
    fs = geo.basis_potential(geom, label, point)
    assert fs.potential == pytest.approx(_quadrature_potential(el, point), rel=1e-9)


def test_derivatives_match_finite_differences(geom):
    p = np.array([12.0, 140.0, -31.0]) * UM
    fs = geo.basis_potential(geom, "M2", p)
    h = 1e-3 * UM
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fp = geo.basis_potential(geom, "M2", p + e)
        fm = geo.basis_potential(geom, "M2", p - e)
        assert (fp.potential - fm.potential) / (2 * h) == pytest.approx(fs.gradient[i], rel=1e-6)
        np.testing.assert_allclose((fp.gradient - fm.gradient) / (2 * h), fs.hessian[i],
                                   rtol=1e-5, atol=1e-6 * np.abs(fs.hessian).max())


def test_full_plane_is_equipotential():
    big = 1e3
    g = geo.ElectrodeGeometry([
        geo.Electrode("a", -big, 0.0, -big, big),
        geo.Electrode("b", 0.0, big, -big, 0.0),
        geo.Electrode("c", 0.0, big, 0.0, big),
    ])
    fs = geo.total_field(g, {"a": 1, "b": 1, "c": 1}, [3 * UM, 100 * UM, -7 * UM])
    assert fs.potential == pytest.approx(1.0, abs=1e-6)
    assert np.linalg.norm(fs.gradient) < 1e-6 * 1 / (100 * UM)


def test_mirror_symmetry(geom):
    # M4 is centred on x = 0 and z = 0
    a = geo.basis_potential(geom, "M4", [17 * UM, 90 * UM, 33 * UM])
    b = geo.basis_potential(geom, "M4", [-17 * UM, 90 * UM, -33 * UM])
    assert a.potential == pytest.approx(b.potential, rel=1e-13)


def test_point_on_plane_rejected(geom):
    with pytest.raises(geo.DomainError):
        geo.basis_potential(geom, "M4", [0, 0, 0])
    with pytest.raises(geo.DomainError):
        geo.total_field(geom, {"M4": 1.0}, [0, -1e-6, 0])


def test_unknown_label(geom):
    with pytest.raises(KeyError):
        geo.total_field(geom, {"nope": 1.0}, [0, 1e-4, 0])


def test_total_field_linearity_and_zero(geom):
    p = [5 * UM, 120 * UM, 8 * UM]
    zero = geo.total_field(geom, {}, p)
    assert zero.potential == 0 and not zero.gradient.any() and not zero.hessian.any()
    v = geo.reference_voltages()
    one = geo.total_field(geom, v, p)
    two = geo.total_field(geom, v.scaled(2.0), p)
    assert two.potential == pytest.approx(2 * one.potential, rel=1e-12)
    np.testing.assert_allclose(two.hessian, 2 * one.hessian, rtol=1e-12)
    a = geo.total_field(geom, {"M1": 1.3}, p)
    b = geo.total_field(geom, {"L2": -0.7}, p)
    ab = geo.total_field(geom, {"M1": 1.3, "L2": -0.7}, p)
    np.testing.assert_allclose(ab.gradient, (a + b).gradient, rtol=1e-12)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-300, 300), y=st.floats(10, 500), z=st.floats(-400, 400))
def test_laplace_and_symmetry(x, y, z):
    g = geo.default_geometry()
    _, _, hs = geo.basis_samples(g, np.array([x, y, z]) * UM)
    for h in hs:
        norm = np.linalg.norm(h)
        assert abs(np.trace(h)) <= 1e-6 * norm
        np.testing.assert_allclose(h, h.T, atol=1e-12 * norm)


def test_potential_on_plane_limit(geom):
    y = 1e-4 * UM
    inside = geo.basis_potential(geom, "M4", [0.0, y, 0.0]).potential
    outside = geo.basis_potential(geom, "M4", [0.0, y, 600 * UM]).potential
    assert inside == pytest.approx(1.0, abs=1e-5)
    assert abs(outside) < 1e-5
    el = geom.electrodes[geom.index("M4")]
    edge = geo.basis_potential(geom, "M4", [el.x1, y, 0.0]).potential
    assert edge == pytest.approx(0.5, abs=1e-5)


def test_reference_null_height(geom):
    null = geo.find_null(geom, geo.reference_voltages(), geo.REFERENCE_NULL + [2e-6, 5e-6, -3e-6])
    assert null[1] / UM == pytest.approx(152.0, abs=1.0)
    assert np.linalg.norm(geo.total_field(geom, geo.reference_voltages(), null).gradient) < 1e-6


def test_find_null_shift_from_added_field(geom):
    v = geo.reference_voltages()
    null = geo.find_null(geom, v, geo.REFERENCE_NULL)
    fs = geo.total_field(geom, v, null)
    # a small extra pattern adds a nearly uniform field; the shift is -H^-1 g to first order
    eps = 1e-4
    extra = geo.total_field(geom, {"L5": eps}, null)
    predicted = null - np.linalg.solve(fs.hessian, extra.gradient)
    v2 = dict(v.values)
    v2["L5"] = v2.get("L5", 0.0) + eps
    moved = geo.find_null(geom, v2, null)
    shift = np.linalg.norm(moved - null)
    assert shift > 1e-9
    assert np.linalg.norm(moved - predicted) < 1e-2 * shift


def test_find_null_failure_carries_iterate(geom):
    with pytest.raises(geo.NullNotFoundError) as exc:
        geo.find_null(geom, {"M4": 1.0}, [0, 152 * UM, 0], max_iter=3)
    assert exc.value.last is not None


def test_find_null_rejects_far_field_zero(geom):
    """From a guess far outside the trap, Newton drifts to where the field merely decays."""
    with pytest.raises(geo.NullNotFoundError, match="region"):
        geo.find_null(geom, geo.reference_voltages(), [0, 2000 * UM, 0])


def test_solve_reference_point(geom, trap):
    h = geo.symmetric_target_hessian(WZ)
    res = geo.solve_voltages(geom, geo.REFERENCE_NULL, h, v_max=20.0, trap=trap)
    assert res.residual < 1e-9
    assert res.rank == 8 and not res.rank_deficient
    np.testing.assert_allclose(res.achieved_hessian, h, rtol=1e-8, atol=1e-8 * np.abs(h).max())
    assert res.modes.omega_plus / const.TWO_PI / 1e6 == pytest.approx(4.41, rel=1e-2)
    assert res.modes.omega_minus / const.TWO_PI / 1e6 == pytest.approx(0.71, rel=1e-2)
    null = geo.find_null(geom, res.voltages, geo.REFERENCE_NULL + 3 * UM)
    assert np.linalg.norm(null - geo.REFERENCE_NULL) < 0.1 * UM


def test_solve_exact_span(geom):
    v = geo.reference_voltages()
    null = geo.find_null(geom, v, geo.REFERENCE_NULL)
    h = geo.total_field(geom, v, null).hessian
    h = 0.5 * (h + h.T)
    h[1, 1] = -h[0, 0] - h[2, 2]
    res = geo.solve_voltages(geom, null, h, v_max=None)
    assert res.residual < 1e-9
    np.testing.assert_allclose(res.achieved_hessian, h, atol=1e-8 * np.abs(h).max())


def test_solve_rejects_bad_hessian(geom):
    with pytest.raises(ValueError):
        geo.solve_voltages(geom, geo.REFERENCE_NULL, np.eye(3))
    with pytest.raises(ValueError):
        geo.solve_voltages(geom, geo.REFERENCE_NULL, np.array([[1, 2, 0], [0, -1, 0], [0, 0, 0.0]]))


def test_solve_binding_bounds_matches_qp_oracle(geom):
    h = geo.symmetric_target_hessian(WZ)
    v_max = 4.0
    with pytest.raises(geo.InfeasibleBoundsError) as exc:
        geo.solve_voltages(geom, geo.REFERENCE_NULL, h, v_max=v_max)
    scale = max(np.abs(h).max(), 1.0)
    A, b = geo.constraint_system(geom, geo.REFERENCE_NULL, h, scale * UM, scale)
    x = geom.vector(exc.value.voltages)
    # convex problem: the KKT conditions certify the global optimum
    grad = A.T @ (A @ x - b)
    gtol = 1e-8 * np.abs(A.T @ b).max()
    upper = x >= v_max * (1 - 1e-9)
    lower = x <= -v_max * (1 - 1e-9)
    free = ~(upper | lower)
    assert upper.any() or lower.any()
    assert np.all(np.abs(grad[free]) <= gtol)
    assert np.all(grad[upper] <= gtol) and np.all(grad[lower] >= -gtol)
    oracle = optimize.lsq_linear(A, b, bounds=(-v_max, v_max), method="trf", tol=1e-15, max_iter=100_000)
    assert exc.value.residual == pytest.approx(np.linalg.norm(A @ oracle.x - b), rel=1e-6)
    assert np.abs(geom.vector(exc.value.voltages)).max() <= v_max * (1 + 1e-9)


def test_rank_deficient_solve_warns(geom, caplog):
    h = geo.symmetric_target_hessian(WZ)
    res = geo.solve_voltages(geom, geo.REFERENCE_NULL, h, v_max=None, electrodes=["M3", "M4", "M5"])
    assert res.rank_deficient
    assert "rank deficient" in caplog.text


def test_regularized_solve_smaller_norm(geom):
    h = geo.symmetric_target_hessian(WZ)
    exact = geo.solve_voltages(geom, geo.REFERENCE_NULL, h, v_max=None)
    reg = geo.solve_voltages(geom, geo.REFERENCE_NULL, h, v_max=None, regularization=1e-2)
    assert np.linalg.norm(geom.vector(reg.voltages)) < np.linalg.norm(geom.vector(exact.voltages))


def test_rf_null_outer_pattern(geom):
    h = geo.rf_null_line(geom, geo.outer_rf_pattern(geom))
    assert h / UM == pytest.approx(152.0, abs=2.0)


def test_rf_null_on_symmetry_plane(geom):
    pat = geo.outer_rf_pattern(geom)
    vec = geom.vector(pat)
    h = geo.rf_null_line(geom, pat)
    g = geo.gradient_at(geom, vec, np.array([0.0, h, 0.0]))
    assert abs(g[0]) < 1e-9 * np.abs(geo.gradient_at(geom, vec, np.array([0.0, h / 2, 0.0]))).max()


def test_rf_null_inner_pattern_matches_scan(geom):
    pat = {"M2": 1.0, "M6": 1.0}
    h = geo.rf_null_line(geom, pat)
    ys = np.linspace(0.5 * h, 1.5 * h, 20001)
    mags = geo.rf_field_magnitude(geom, pat, ys)
    assert h == pytest.approx(ys[np.argmin(mags)], abs=ys[1] - ys[0])


def test_rf_pattern_on_dc_electrode_rejected(geom):
    with pytest.raises(geo.GeometryError):
        geo.rf_null_line(geom, {"L1": 1.0})


def test_geometry_validation():
    with pytest.raises(geo.GeometryError):
        geo.ElectrodeGeometry([geo.Electrode("a", 0, 1, 0, 1), geo.Electrode("b", 0.5, 2, 0.5, 2)])
    with pytest.raises(geo.GeometryError):
        geo.ElectrodeGeometry([geo.Electrode("a", 0, 0, 0, 1)])
    with pytest.raises(geo.GeometryError):
        geo.ElectrodeGeometry([geo.Electrode("a", 0, 1, 0, 1), geo.Electrode("a", 1, 2, 0, 1)])


def test_geometry_text_round_trip(geom, tmp_path):
    path = tmp_path / "g.txt"
    geom.save(path)
    again = geo.ElectrodeGeometry.load(path)
    assert again.labels == geom.labels
    np.testing.assert_allclose(again._corners, geom._corners, rtol=1e-9)
    assert again.rf_labels == [f"M{i}" for i in range(1, 8)]
    assert len(again) == 25


def test_voltage_set_bounds_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        geo.VoltageSet({"a": 11.0}, v_max=10.0)
    v = geo.VoltageSet({"a": 1.5, "b": -2.0})
    v.save(tmp_path / "v.yaml")
    assert geo.VoltageSet.load(tmp_path / "v.yaml").values == v.values


def test_target_hessian_traceless_and_symmetric():
    h = geo.symmetric_target_hessian(WZ, angle=0.3, asymmetry=0.2)
    assert abs(np.trace(h)) < 1e-9 * np.abs(h).max()
    np.testing.assert_allclose(h, h.T)
    assert m.axial_frequency_from_curvature(h[2, 2]) == pytest.approx(WZ)
