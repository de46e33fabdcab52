from importlib import import_module

import numpy as np
import pytest

from carnot_lab.carnot_core import euclidean, heisenberg
from carnot_lab.common.type_aliases import SetKind
from carnot_lab.field_calc import Domain
from carnot_lab.lipschitz_lab import FiniteTarget
from carnot_lab.map_calc import Dilation, IdentityMap, Projection
from carnot_lab.operator_lab import (
    OpenSetSpec,
    SetFunctionEstimate,
    composition_norm,
    integral_set_function,
    integrated_derivative,
    phi_estimate,
    phi_ratio_estimate,
    quasi_additivity_check,
    reshetnyak_check,
    set_derivative,
    support_transfer_check,
    upper_gradient_estimate,
    verify_prop_qinf,
    verify_theorem_lip,
    verify_theorem_sobolev,
    within_tolerance,
)

POINTS = np.array([[0.3, -0.4, 0.1], [0.0, 0.2, -0.3], [-0.5, 0.1, 0.05]])


def _unit_disc(n_samples=2048, seed=0):
    # measure 1: balls of radius r have measure r ** nu
    g = euclidean(2)
    return g, Domain.ball_domain(g, np.zeros(2), 1.0, n_samples=n_samples, seed=seed)


def test_open_sets():
    g = heisenberg(1)
    ball = OpenSetSpec.ball(g, np.zeros(3), 0.5)
    assert ball.inradius == 0.5
    assert np.array_equal(ball.contains(np.array([[0.1, 0.0, 0.0], [0.6, 0.0, 0.0]])), [True, False])
    assert OpenSetSpec.empty(g).inradius == 0.0
    assert OpenSetSpec.whole(g).inradius == np.inf
    assert not OpenSetSpec.whole(g).is_bounded
    with pytest.raises(ValueError):
        OpenSetSpec.ball(g, np.zeros(3), 0.0)

    other = OpenSetSpec.ball(g, [2.0, 0.0, 0.0], 0.5)
    assert ball.separation(other) == pytest.approx(1.0)
    assert ball.is_disjoint(other)
    assert not ball.is_disjoint(OpenSetSpec.ball(g, [0.6, 0.0, 0.0], 0.5))

    union = OpenSetSpec.union([ball, OpenSetSpec.empty(g), other])
    assert union.kind == SetKind.UNION
    assert union.inradius == 0.5
    assert np.all(union.contains(union.sample(64, seed=0)))
    assert OpenSetSpec.union([ball]) is ball
    assert OpenSetSpec.union([ball, OpenSetSpec.whole(g)]).kind == SetKind.WHOLE
    with pytest.raises(ValueError):
        OpenSetSpec.union([OpenSetSpec.empty(g)])


def test_image_and_inner_sets():
    g = heisenberg(1)
    image = OpenSetSpec.image(Dilation(g, 2.0), [0.1, 0.0, 0.0], 0.25)
    # dilations map balls to balls
    assert image.kind == SetKind.BALL
    assert np.allclose(image.center, [0.2, 0.0, 0.0])
    assert image.radius == pytest.approx(0.5)
    with pytest.raises(ValueError):
        OpenSetSpec.image(Projection(euclidean(2)), [0.0, 0.0], 0.5)

    union = OpenSetSpec.union([OpenSetSpec.ball(g, np.zeros(3), 0.5), OpenSetSpec.ball(g, [2.0, 0.0, 0.0], 0.25)])
    inner = union.inner(0.1)
    assert inner.kind == SetKind.INNER
    assert inner.inradius == pytest.approx(0.4)
    assert inner.inner(0.1).inradius == pytest.approx(0.3)
    # deeper than the inradius
    assert union.inner(0.6).kind == SetKind.EMPTY
    assert np.all(inner.contains(inner.sample(32, seed=0)))


def test_finite_subsets():
    target = FiniteTarget(np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]))
    V = OpenSetSpec.subset(target, [0, 1])
    assert np.allclose(V.inner_distance(target.points()), [2.0, 1.0, 0.0])
    assert OpenSetSpec.subset(target, []).kind == SetKind.EMPTY
    assert OpenSetSpec.subset(target, [0, 1, 2]).kind == SetKind.WHOLE
    assert OpenSetSpec.subset(target, [0]).separation(OpenSetSpec.subset(target, [2])) == 2.0
    with pytest.raises(TypeError):
        OpenSetSpec.subset(euclidean(2), [0])
    with pytest.raises(ValueError):
        OpenSetSpec.subset(target, [3])


def test_phi_estimate():
    g, domain = _unit_disc()
    assert domain.measure == pytest.approx(1.0)
    empty = phi_estimate(IdentityMap(g), OpenSetSpec.empty(g), 2, domain)
    assert empty.value == 0.0
    assert empty.family_size == 0
    # coordinate functions have |grad| = 1
    identity = phi_estimate(IdentityMap(g), None, 2, domain, budget=32)
    assert identity.value == pytest.approx(1.0, abs=1e-3)
    assert 0 < identity.family_size <= 32
    doubled = phi_estimate(Dilation(g, 2.0), None, 2, domain, budget=32)
    assert doubled.value == pytest.approx(4.0, rel=1e-3)
    witnesses = doubled.witnesses(top=3)
    assert len(witnesses) == 3
    assert witnesses[0]["value"] == pytest.approx(doubled.value)
    assert doubled.to_dict()["family_size"] == doubled.family_size
    with pytest.raises(ValueError):
        phi_estimate(IdentityMap(g), None, 0.5, domain)
    with pytest.raises(ValueError):
        phi_estimate(IdentityMap(g), None, np.inf, domain)


def test_phi_ratio_estimate():
    g, domain = _unit_disc()
    # ||u o phi | L1_2(B_1)|| / ||u | L1_4(B_2)|| = 2 / 2 ** (2 / 4) for a coordinate u
    estimate = phi_ratio_estimate(Dilation(g, 2.0), None, 4, 2, domain, budget=16)
    # Hoelder: no member beats a constant gradient, up to the two quadratures
    assert np.sqrt(2.0) * (1 - 1e-3) <= estimate.ratio <= np.sqrt(2.0) * 1.05
    assert estimate.value == pytest.approx(estimate.ratio**4, rel=1e-9)
    assert phi_ratio_estimate(Dilation(g, 2.0), OpenSetSpec.empty(g), 4, 2, domain).value == 0.0
    with pytest.raises(ValueError):
        phi_ratio_estimate(Dilation(g, 2.0), None, 2, 4, domain)


def test_quasi_additivity():
    g, domain = _unit_disc()
    parts = [OpenSetSpec.ball(g, [-0.5, 0.0], 0.3), OpenSetSpec.ball(g, [0.5, 0.0], 0.3)]
    verdict = quasi_additivity_check(IdentityMap(g), parts, 2, domain, budget=16)
    assert verdict.passed
    assert verdict.parts_total == pytest.approx(sum(verdict.part_values))
    assert all(value > 0 for value in verdict.part_values)
    overlapping = [parts[0], OpenSetSpec.ball(g, [-0.3, 0.0], 0.3)]
    with pytest.raises(ValueError, match="not disjoint"):
        quasi_additivity_check(IdentityMap(g), overlapping, 2, domain)


def test_set_derivative():
    g = heisenberg(1)
    # the ball measure is exact, so the density of U -> |U| is 1
    derivative = set_derivative(integral_set_function(lambda points: np.ones(len(points))), g, POINTS[0])
    assert derivative.value == pytest.approx(1.0, abs=1e-9)
    assert len(derivative.ratios) == 3
    plane = euclidean(2)
    derivative = set_derivative(integral_set_function(lambda points: 1.0 + points[:, 0]), plane, [0.3, 0.0], radii=(0.1,))
    assert derivative.value == pytest.approx(1.3, abs=0.02)
    with pytest.raises(ValueError):
        set_derivative(integral_set_function(np.ones_like), g, POINTS[0], radii=())
    with pytest.raises(ValueError):
        set_derivative(integral_set_function(np.ones_like), g, POINTS[0], radii=(0.1, -0.1))


def test_integrated_derivative():
    _, domain = _unit_disc()
    check = integrated_derivative(integral_set_function(lambda points: np.ones(len(points))), domain, n_points=8)
    assert check.passed
    assert check.integral == pytest.approx(check.set_value, rel=1e-9)


def test_within_tolerance():
    assert within_tolerance(1.0, 0.95)
    assert within_tolerance(1.0, 1.01)
    assert not within_tolerance(1.0, 0.85)
    assert not within_tolerance(1.0, 1.05)
    assert within_tolerance(0.0, 0.01)
    assert not within_tolerance(0.0, 0.1)
    assert within_tolerance(1.0, 0.85, gap_tol=0.2)


def test_verify_theorem_lip():
    g, domain = _unit_disc()
    verdict = verify_theorem_lip(Dilation(g, 2.0), domain, 2, budget=32, n_sub_balls=2, sub_ball_samples=512)
    # || |D_h phi| | L_2 || = 2 on a set of measure 1
    assert verdict.analytic == pytest.approx(2.0, rel=1e-6)
    assert verdict.estimate == pytest.approx(2.0, rel=1e-3)
    assert verdict.norm_passed
    assert verdict.passed
    assert len(verdict.checks) == 3
    summary = verdict.to_dict()
    assert summary["theorem"] == "lip"
    assert summary["pass"] is True
    with pytest.raises(ValueError):
        verify_theorem_lip(Dilation(g, 2.0), domain, np.inf)


def test_verify_theorem_lip_empty_set_check(monkeypatch):
    verifiers = import_module("carnot_lab.operator_lab.verifiers")
    estimate = verifiers.phi_estimate

    def nonzero_on_empty(phi, V, q, domain, **kwargs):
        if V.kind == SetKind.EMPTY:
            return SetFunctionEstimate(V, 123.0, np.zeros(0), [], 0)
        return estimate(phi, V, q, domain, **kwargs)

    monkeypatch.setattr(verifiers, "phi_estimate", nonzero_on_empty)
    g, domain = _unit_disc()
    verdict = verify_theorem_lip(Dilation(g, 2.0), domain, 2, budget=32, n_sub_balls=0)
    assert verdict.norm_passed
    assert not verdict.passed
    assert verdict.failed_checks == [{"set": "empty", "analytic": 0.0, "estimate": 123.0, "pass": False}]


def test_verify_prop_qinf_and_composition_norm():
    g, domain = _unit_disc()
    verdict = verify_prop_qinf(Dilation(g, 3.0), domain, budget=16, n_samples=512)
    assert verdict.analytic == pytest.approx(3.0, rel=1e-6)
    assert verdict.passed
    assert composition_norm(Dilation(g, 3.0), domain, np.inf, budget=16) == pytest.approx(3.0, rel=1e-3)
    assert composition_norm(Dilation(g, 3.0), domain, 2, budget=16) == pytest.approx(3.0, rel=1e-3)


def test_verify_theorem_sobolev_arguments():
    g, domain = _unit_disc()
    with pytest.raises(ValueError):
        verify_theorem_sobolev(Dilation(g, 2.0), domain, p=2, q=4)
    with pytest.raises(ValueError):
        verify_theorem_sobolev(Dilation(g, 2.0), domain, p=np.inf, q=2)
    with pytest.raises(ValueError):
        verify_theorem_sobolev(Projection(g), domain, p=4, q=2)


def test_verify_theorem_sobolev_equal_exponents():
    g, domain = _unit_disc(n_samples=4096)
    # sigma = inf: the norm is the supremum of K_p, no local checks
    verdict = verify_theorem_sobolev(Dilation(g, 2.0), domain, p=2, q=2, budget=16)
    assert verdict.sigma == np.inf
    assert verdict.analytic == pytest.approx(1.0, rel=1e-6)
    assert verdict.estimate == pytest.approx(1.0, rel=0.02)
    assert verdict.passed
    assert [check["set"] for check in verdict.checks] == ["finite_distortion"]


@pytest.mark.slow
def test_verify_theorem_sobolev_heisenberg_dilation():
    g = heisenberg(1)
    domain = Domain.ball_domain(g, np.zeros(3), 1.0, n_samples=4096, seed=0)
    verdict = verify_theorem_sobolev(Dilation(g, 2.0), domain, p=8, q=4, budget=32, n_sub_balls=2)
    assert verdict.sigma == pytest.approx(8.0)
    # K_8 = sqrt(2) on a ball of measure 1
    assert verdict.analytic == pytest.approx(np.sqrt(2.0), rel=1e-6)
    assert verdict.estimate == pytest.approx(np.sqrt(2.0), rel=0.02)
    assert verdict.passed


def test_upper_gradient_and_reshetnyak():
    g = heisenberg(1)
    phi = Dilation(g, 2.0)
    gradient = upper_gradient_estimate(phi, POINTS, budget=16)
    assert np.allclose(gradient.analytic, 2.0, atol=1e-6)
    assert np.all(gradient.values >= 2.0 - 1e-6)
    assert np.allclose(gradient.lower, 2.0, rtol=1e-3)
    assert np.allclose(gradient.upper, 2.0 * np.sqrt(2.0), rtol=1e-3)
    check = reshetnyak_check(phi, POINTS, budget=16)
    assert check.passed
    assert check.family_size > 0
    # a majorant below |D_h phi| fails
    assert not reshetnyak_check(phi, POINTS, majorant=np.ones(len(POINTS)), budget=16).passed


def test_support_transfer():
    g, domain = _unit_disc(n_samples=1024)
    V = OpenSetSpec.ball(g, np.zeros(2), 0.5)
    check = support_transfer_check(IdentityMap(g), V, 2, domain, budget=16)
    assert check.passed
    assert check.n_transferred > 0
    assert check.delta == pytest.approx(0.5 / 64)
    with pytest.raises(ValueError):
        support_transfer_check(IdentityMap(g), OpenSetSpec.whole(g), 2, domain)
    with pytest.raises(ValueError):
        support_transfer_check(IdentityMap(g), OpenSetSpec.empty(g), 2, domain)
