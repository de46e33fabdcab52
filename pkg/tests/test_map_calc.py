import numpy as np
import pytest

from carnot_lab.carnot_core import calibrate_measure, engel, euclidean, heisenberg, multiply
from carnot_lab.field_calc import Domain
from carnot_lab.map_calc import (
    Automorphism,
    ComposedMap,
    ConstantMap,
    Dilation,
    FunctionMap,
    IdentityMap,
    LeftTranslation,
    Projection,
    RadialSquash,
    Shear,
    distortion_Kp,
    finite_distortion_check,
    homogeneous_norm,
    horizontal_differential,
    kp_values,
    pansu_extend,
    spatial_jacobian,
    structural_constant,
)

POINTS = np.array([[0.3, -0.4, 0.1], [0.0, 0.2, -0.3], [-0.5, 0.1, 0.05]])


def test_dilation_differential():
    g = heisenberg(1)
    phi = Dilation(g, 2.0)
    differential = horizontal_differential(phi, POINTS)
    assert np.allclose(differential.matrix, 2.0 * np.eye(2), atol=1e-8)
    assert np.allclose(differential.norm, 2.0, atol=1e-8)
    pansu = pansu_extend(g, g, differential.matrix)
    assert np.allclose(pansu.det, 16.0, atol=1e-6)
    assert np.allclose(pansu.residual, 0.0, atol=1e-8)
    assert np.allclose(homogeneous_norm(pansu), 2.0, atol=1e-8)
    assert np.allclose(kp_values(phi, POINTS, 8), np.sqrt(2.0), atol=1e-7)


def test_shear_differential():
    g = heisenberg(1)
    phi = Shear(g, 0.5)
    assert np.allclose(phi(POINTS[0]), [0.3, -0.25, 0.1])
    matrix = horizontal_differential(phi, POINTS[1]).matrix
    # row i is the image of X_i
    assert np.allclose(matrix, [[1.0, 0.5], [0.0, 1.0]], atol=1e-8)
    assert phi.pansu.det == pytest.approx(1.0)
    assert np.allclose(phi.inverse(phi(POINTS)), POINTS)
    # a homomorphism
    a, b = POINTS[0], POINTS[2]
    assert np.allclose(phi(multiply(g, a, b)), multiply(g, phi(a), phi(b)))
    with pytest.raises(ValueError):
        Shear(euclidean(2), 0.5)


def test_automorphism_extension():
    g = engel()
    phi = Automorphism(g, 2.0 * np.eye(2))
    assert np.allclose(phi.matrix, np.diag([2.0, 2.0, 4.0, 8.0]))
    assert phi.pansu.det == pytest.approx(128.0)
    x = np.array([0.1, -0.2, 0.3, 0.05])
    assert np.allclose(phi(x), Dilation(g, 2.0)(x))
    assert phi.lipschitz == pytest.approx(2.0)
    assert phi.inverse_lipschitz == pytest.approx(0.5)
    # swapping X_1 and X_2 breaks [X_2, X_3] = 0
    with pytest.raises(ValueError, match="homomorphism"):
        Automorphism(g, np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        pansu_extend(g, g, np.eye(3))


def test_structural_constant():
    assert structural_constant(euclidean(2), euclidean(2)) == 1.0
    assert structural_constant(heisenberg(1), heisenberg(1)) >= 1.0
    assert structural_constant(engel(), engel()) >= 1.0


def test_maps_inverse_and_lipschitz():
    g = heisenberg(1)
    offset = np.array([0.1, 0.2, -0.3])
    maps = [
        IdentityMap(g),
        LeftTranslation(g, offset),
        Dilation(g, 3.0),
        ComposedMap(Dilation(g, 2.0), LeftTranslation(g, offset)),
    ]
    for phi in maps:
        assert phi.inverse is not None
        assert phi.inverse_residual(POINTS) < 1e-12
        assert phi.lipschitz is not None
    composed = maps[-1]
    assert composed.lipschitz == pytest.approx(2.0)
    assert composed.inverse_lipschitz == pytest.approx(0.5)
    assert composed.describe()["children"][0]["kind"] == "dilation"
    with pytest.raises(ValueError):
        ComposedMap(Dilation(euclidean(2), 2.0), Dilation(g, 2.0))
    with pytest.raises(ValueError):
        Dilation(g, 0.0)


def test_function_map():
    g = euclidean(2)
    phi = FunctionMap(g, g, lambda x: 3.0 * x, lambda y: y / 3.0, lipschitz=3.0, inverse_lipschitz=1.0 / 3.0, name="triple")
    assert np.allclose(phi.inverse(phi(np.ones((4, 2)))), 1.0)
    assert phi.inverse.lipschitz == pytest.approx(1.0 / 3.0)
    assert np.allclose(horizontal_differential(phi, np.zeros(2)).matrix, 3.0 * np.eye(2), atol=1e-8)


def test_distortion_of_dilation():
    g = heisenberg(1)
    domain = Domain.ball_domain(g, np.zeros(3), 1.0, n_samples=500, seed=0)
    report = distortion_Kp(Dilation(g, 2.0), domain, p=8, q=4)
    assert report.sigma == pytest.approx(8.0)
    assert np.allclose(report.kp, np.sqrt(2.0), atol=1e-7)
    # the unit ball has measure 1
    assert report.kp_norm == pytest.approx(np.sqrt(2.0), rel=1e-6)
    assert report.finite_distortion.passed
    assert report.thresholded_count == 0
    frame = report.to_frame()
    assert list(frame.columns) == ["x0", "x1", "x2", "dh_norm", "det", "kp", "zero_set"]
    assert len(frame) == 500
    summary = report.to_dict()
    assert summary["finite_distortion"]["verdict"] == "PASS"
    assert summary["samples"] == 500
    # q = p gives the sample maximum
    assert distortion_Kp(Dilation(g, 2.0), domain, p=4, q=4).sigma == np.inf
    with pytest.raises(ValueError):
        distortion_Kp(Dilation(g, 2.0), domain, p=np.inf)


def test_distortion_on_empty_domain():
    g = heisenberg(1)
    report = distortion_Kp(Dilation(g, 2.0), Domain.empty(g), p=4)
    assert report.kp_norm == 0.0
    assert report.finite_distortion.passed


def test_finite_distortion():
    g = euclidean(2)
    domain = Domain.ball_domain(g, np.zeros(2), 1.0, n_samples=500, seed=0)
    failing = finite_distortion_check(Projection(g), domain)
    assert not failing.passed
    assert failing.n_zero_set == 500
    assert failing.worst == pytest.approx(1.0, rel=1e-6)
    assert len(failing.violations) == 500
    assert finite_distortion_check(ConstantMap(g), domain).passed
    assert finite_distortion_check(RadialSquash(g, 0.5), domain).passed
    assert finite_distortion_check(IdentityMap(g), domain).n_zero_set == 0
    with pytest.raises(ValueError):
        Projection(heisenberg(1))
    with pytest.raises(ValueError):
        RadialSquash(g, 0.0)


def test_spatial_jacobian_of_dilation():
    g = heisenberg(1)
    calibrate_measure(g, method="quadrature")
    jacobian = spatial_jacobian(Dilation(g, 2.0), np.array([0.1, 0.0, 0.05]), radii=(0.2,), n_samples=4 * 10**4)
    assert jacobian.det == pytest.approx(16.0, rel=1e-6)
    assert jacobian.value == pytest.approx(16.0, rel=0.05)
    assert jacobian.relative_gap < 0.05
    with pytest.raises(ValueError):
        spatial_jacobian(Projection(euclidean(2)), np.zeros(2))
    with pytest.raises(ValueError):
        spatial_jacobian(Dilation(g, 2.0), np.zeros(3), radii=())


@pytest.mark.slow
def test_spatial_jacobian_limit():
    g = heisenberg(1)
    calibrate_measure(g, method="quadrature")
    jacobian = spatial_jacobian(Shear(g, 0.5), np.array([0.2, -0.1, 0.0]), n_samples=10**5)
    assert jacobian.det == pytest.approx(1.0, rel=1e-6)
    assert jacobian.value == pytest.approx(1.0, rel=0.05)
    assert len(jacobian.ratios) == 3
