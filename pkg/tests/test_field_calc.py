import numpy as np
import pytest

from carnot_lab.carnot_core import euclidean, heisenberg
from carnot_lab.field_calc import (
    ConstantField,
    CoordinateField,
    Domain,
    LinearHorizontalField,
    PolynomialField,
    abs_val,
    acl_spot_check,
    bump_field,
    compose_smooth,
    curve_length,
    cutoff,
    horizontal_derivative,
    horizontal_gradient,
    line_restriction,
    maximum,
    metric_derivative,
    minimum,
    neg_part,
    pos_part,
    seminorm_Lq,
)
from carnot_lab.map_calc import Dilation

POINT = np.array([0.3, -0.4, 0.1])


@pytest.mark.parametrize("use_tree", [False, True])
def test_coordinate_gradient(use_tree):
    g = heisenberg(1)
    # X = d_x - y/2 d_z, Y = d_y + x/2 d_z
    gradient = horizontal_gradient(CoordinateField(g, 2), POINT, use_tree=use_tree)
    assert np.allclose(gradient.value, [0.2, 0.15], atol=1e-7)
    assert not np.any(gradient.one_sided)
    gradient = horizontal_gradient(CoordinateField(g, 0), POINT, use_tree=use_tree)
    assert np.allclose(gradient.value, [1.0, 0.0], atol=1e-7)


def test_horizontal_derivative():
    g = heisenberg(1)
    # u = x z, X u = z - x y / 2
    u = PolynomialField(g, {(1, 0, 1): 1.0})
    estimate = horizontal_derivative(u, 0, POINT, h=1e-3)
    expected = POINT[2] - POINT[0] * POINT[1] / 2
    assert estimate.value == pytest.approx(expected, abs=1e-6)
    assert estimate.extrapolated == pytest.approx(expected, abs=1e-8)
    assert estimate.error < 1e-5
    # closed form through the frame
    assert horizontal_gradient(u, POINT, use_tree=True).value[0] == pytest.approx(expected)
    with pytest.raises(ValueError):
        horizontal_derivative(u, 2, POINT)


def test_one_sided_near_boundary():
    g = euclidean(2)
    domain = Domain.box_domain(g, [-1.0, -1.0], [1.0, 1.0], n_samples=16)
    u = LinearHorizontalField(g, [2.0, -1.0])
    estimate = horizontal_gradient(u, [1.0 - 1e-5, 0.0], h=1e-3, domain=domain)
    assert estimate.one_sided[0]
    assert not estimate.one_sided[1]
    assert np.allclose(estimate.value, [2.0, -1.0], atol=1e-8)


def test_chain_rule():
    g = heisenberg(1)
    x = CoordinateField(g, 0)
    positive, negative = np.array([[0.5, 0.1, 0.0]]), np.array([[-0.5, 0.1, 0.0]])
    for field, at_positive, at_negative in [
        (pos_part(x), [1.0, 0.0], [0.0, 0.0]),
        (neg_part(x), [0.0, 0.0], [-1.0, 0.0]),
        (abs_val(x), [1.0, 0.0], [-1.0, 0.0]),
        (cutoff(x, 0.25), [0.0, 0.0], [0.0, 0.0]),
        (cutoff(x, 1.0), [1.0, 0.0], [1.0, 0.0]),
    ]:
        for points, expected in ((positive, at_positive), (negative, at_negative)):
            tree = horizontal_gradient(field, points, use_tree=True).value[0]
            direct = horizontal_gradient(field, points).value[0]
            assert np.allclose(tree, expected, atol=1e-7)
            assert np.allclose(direct, expected, atol=1e-6)
    assert neg_part(x)(negative)[0] == pytest.approx(0.5)
    assert cutoff(x, 0.25)(negative)[0] == pytest.approx(-0.25)
    with pytest.raises(ValueError):
        cutoff(x, 0.0)


def test_compose_smooth():
    g = heisenberg(1)
    z = CoordinateField(g, 2)
    u = compose_smooth(np.sin, np.cos, z, name="sin")
    expected = np.cos(POINT[2]) * np.array([0.2, 0.15])
    assert np.allclose(horizontal_gradient(u, POINT, use_tree=True).value, expected, atol=1e-7)
    assert np.allclose(horizontal_gradient(u, POINT, h=1e-3).value, expected, atol=1e-6)
    assert u.describe()["params"] == {"F": "sin"}
    assert u.describe()["children"][0]["kind"] == "coordinate"


def test_extrema_and_sums():
    g = euclidean(2)
    u = maximum([CoordinateField(g, 0), CoordinateField(g, 1)])
    v = minimum([CoordinateField(g, 0), CoordinateField(g, 1)])
    points = np.array([[0.5, 0.1], [0.1, 0.5]])
    assert np.allclose(u(points), [0.5, 0.5])
    assert np.allclose(v(points), [0.1, 0.1])
    assert np.allclose(horizontal_gradient(u, points, use_tree=True).value, [[1.0, 0.0], [0.0, 1.0]], atol=1e-7)
    w = CoordinateField(g, 0) + ConstantField(2.0, g) * 1.0
    assert np.allclose(w(points), [2.5, 2.1])
    assert np.allclose(horizontal_gradient(w, points, use_tree=True).value, [[1.0, 0.0], [1.0, 0.0]], atol=1e-7)


def test_bump_field():
    g = heisenberg(1)
    bump = bump_field(g, np.zeros(3), 0.5)
    assert bump(np.zeros((1, 3)))[0] == pytest.approx(0.5)
    assert bump(np.array([[0.7, 0.0, 0.0]]))[0] == 0.0
    # 1-Lipschitz: the horizontal gradient has norm 1 inside the support
    gradient = horizontal_gradient(bump, np.array([[0.2, 0.1, 0.0]]), h=1e-5).value[0]
    assert np.linalg.norm(gradient) == pytest.approx(1.0, rel=1e-3)
    with pytest.raises(ValueError):
        bump_field(g, np.zeros(3), -1.0)


def test_seminorm_constant_gradient():
    g = euclidean(2)
    domain = Domain.box_domain(g, [-1.0, -1.0], [1.0, 1.0], n_samples=1000)
    u = LinearHorizontalField(g, [3.0, 4.0])
    assert domain.measure == pytest.approx(4.0 / np.pi)
    l2 = seminorm_Lq(u, domain, 2)
    assert l2.value == pytest.approx(5.0 * np.sqrt(4.0 / np.pi), rel=1e-6)
    assert seminorm_Lq(u, domain, np.inf).value == pytest.approx(5.0, rel=1e-6)
    assert seminorm_Lq(u, Domain.empty(g), 2).value == 0.0
    with pytest.raises(ValueError):
        seminorm_Lq(u, domain, 0.5)


def test_ball_domain():
    g = heisenberg(1)
    domain = Domain.ball_domain(g, np.zeros(3), 0.5, n_samples=2000, seed=3)
    assert domain.measure == pytest.approx(0.5**4)
    assert domain.diameter == pytest.approx(1.0)
    assert np.all(domain.contains(domain.points))
    assert domain.integrate(np.ones(2000)).value == pytest.approx(0.5**4)
    # the quadrature is seeded
    assert np.array_equal(domain.points, domain.with_samples(2000).points)
    for ball in domain.sub_balls(3, seed=1, n_samples=64):
        assert ball.ball.radius <= 0.3 * 0.5 + 1e-12
        assert np.all(domain.contains(ball.points))
    assert domain.describe()["radius"] == 0.5
    with pytest.raises(ValueError):
        domain.integrate(np.ones(10))
    with pytest.raises(ValueError):
        Domain.box_domain(g, np.ones(3), np.zeros(3))


def test_grid_quadrature():
    g = euclidean(2)
    domain = Domain.box_domain(g, [0.0, 0.0], [1.0, 2.0], quadrature="grid", resolution=16)
    points = domain.points
    assert points.shape == (256, 2)
    # int of x over the box, normalized measure
    integral = domain.integrate(points[:, 0])
    assert integral.value == pytest.approx(0.5 * 2.0 * g.measure_norm)
    assert integral.standard_error == 0.0


def test_line_restriction():
    g = heisenberg(1)
    z = CoordinateField(g, 2)
    base = np.array([0.0, 0.5, 0.0])
    samples = line_restriction(z, 0, base, window=(-1.0, 1.0), n_points=5)
    assert np.allclose(samples.times, [-1.0, -0.5, 0.0, 0.5, 1.0])
    # z(exp(t X) (0, y, 0)) = -t y / 2
    assert np.allclose(samples.points, -0.25 * samples.times)
    assert curve_length(samples) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        line_restriction(z, 0, POINT)


def test_metric_derivative_of_dilation():
    g = heisenberg(1)
    phi = Dilation(g, 2.0)
    for j in range(2):
        assert metric_derivative(phi, j, POINT, h=1e-4) == pytest.approx(2.0, rel=1e-4)
        assert metric_derivative(phi, j, POINT, h=1e-4, method="length") == pytest.approx(2.0, rel=1e-4)
    with pytest.raises(ValueError):
        metric_derivative(phi, 0, POINT, method="secant")


def test_acl_spot_check():
    g = heisenberg(1)
    check = acl_spot_check(Dilation(g, 2.0), 1, np.array([0.2, 0.0, 0.1]), window=(-0.5, 0.5))
    # horizontal lines are geodesics, the image has length 2
    assert check.fine_length == pytest.approx(2.0, rel=1e-6)
    assert check.relative_change < 1e-6
