from importlib import import_module

import numpy as np
import pytest

from carnot_lab.carnot_core import euclidean, heisenberg
from carnot_lab.common.logger import DEBUG, configure
from carnot_lab.common.type_aliases import SetKind
from carnot_lab.lipschitz_lab import (
    CarnotTarget,
    EmptyExteriorError,
    FiniteTarget,
    LipschitzViolationError,
    LipTestFunction,
    UnboundedSetError,
    annulus_cutoff,
    as_target,
    coordinate_function,
    cutoff_test_function,
    describe_family,
    disjoint_sum,
    distance_function,
    family_generate,
    farthest_point_net,
    inner_set,
    mcshane_extend,
    refine,
    shaved_bump,
    symmetrize,
    validate_lipschitz,
)
from carnot_lab.operator_lab import OpenSetSpec

# three points on a line, 0 - 1 - 2
LINE = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])


def test_targets():
    g = heisenberg(1)
    target = as_target(g)
    assert isinstance(target, CarnotTarget)
    assert as_target(target) is target
    assert target.dim == 3
    with pytest.raises(TypeError):
        as_target("heisenberg-1")

    finite = FiniteTarget(LINE, name="line")
    assert finite.size == 3
    assert finite.points().shape == (3, 1)
    assert finite.distance(np.array([[0.0]]), np.array([[2.0]]))[0] == 2.0
    assert finite.describe() == {"name": "line", "size": 3}
    with pytest.raises(ValueError):
        finite.indices(np.array([[3.0]]))


def test_finite_target_validation():
    broken = LINE.copy()
    broken[0, 2] = broken[2, 0] = 3.0
    with pytest.raises(ValueError, match="Triangle inequality fails"):
        FiniteTarget(broken)
    asymmetric = LINE.copy()
    asymmetric[0, 1] = 0.5
    with pytest.raises(ValueError, match="symmetric"):
        FiniteTarget(asymmetric)
    with pytest.raises(ValueError, match="zero diagonal"):
        FiniteTarget(LINE + np.eye(3))
    with pytest.raises(ValueError, match="square"):
        FiniteTarget(np.zeros((2, 3)))


def test_lip_test_function_arguments():
    g = heisenberg(1)
    u = distance_function(g, np.zeros(3))
    assert u.lipschitz == 1.0
    assert set(u.describe()) == {"provenance", "lipschitz", "support_gap", "bound", "params", "tree"}
    with pytest.raises(ValueError):
        LipTestFunction(u.field, lipschitz=-1.0)
    with pytest.raises(ValueError):
        LipTestFunction(u.field, support_gap=0.0)


def test_coordinate_function():
    g = heisenberg(1)
    u = coordinate_function(g, [3.0, 4.0])
    assert u.lipschitz == pytest.approx(5.0)
    assert u(np.array([[1.0, 1.0, 7.0]]))[0] == pytest.approx(7.0)
    with pytest.raises(ValueError):
        coordinate_function(g, 2)
    with pytest.raises(TypeError):
        coordinate_function(FiniteTarget(LINE), 0)


def test_symmetrize():
    g = heisenberg(1)
    u = symmetrize(coordinate_function(g, 0), 1.0)
    points = np.array([[0.75, 0.0, 0.0], [-0.75, 0.0, 0.0], [0.3, 0.0, 0.0], [0.0, 0.0, 0.0]])
    # identity on [-M/2, M/2], reflected beyond
    assert np.allclose(u(points), [0.25, -0.25, 0.3, 0.0])
    assert u.lipschitz == 1.0
    with pytest.raises(ValueError):
        symmetrize(cutoff_test_function(coordinate_function(g, 0), 2.0), 1.0)
    with pytest.raises(ValueError):
        symmetrize(coordinate_function(g, 0), 0.0)


def test_refine():
    g = heisenberg(1)
    V = OpenSetSpec.ball(g, np.zeros(3), 1.0)
    u = coordinate_function(g, 0)
    refined = refine(u, V, 1.0, sup_norm=8.0)
    assert refined.params()["iterations"] == 3
    assert refined.bound == pytest.approx(1.0)
    points = np.random.default_rng(0).uniform(-8.0, 8.0, size=(256, 3))
    assert np.all(np.abs(refined(points)) <= 1.0 + 1e-12)
    # already small enough
    assert refine(u, V, 2.0, sup_norm=1.0) is u
    # bounded through the enclosing ball: |u(0)| + 1 * 1
    assert refine(u, V, 0.25).params()["iterations"] == 2
    with pytest.raises(ValueError):
        refine(u, OpenSetSpec.whole(g), 0.25)


def test_mcshane_extend():
    g = euclidean(1)
    points = np.array([[0.0], [1.0]])
    u = mcshane_extend(g, points, [0.0, 0.5])
    assert np.allclose(u(points), [0.0, 0.5])
    assert np.allclose(u(np.array([[0.5], [2.0], [-1.0]])), [0.5, 1.5, 1.0])
    with pytest.raises(LipschitzViolationError) as excinfo:
        mcshane_extend(g, points, [0.0, 2.0])
    assert set(excinfo.value.pair) == {0, 1}
    assert excinfo.value.quotient == pytest.approx(2.0)
    with pytest.raises(ValueError):
        mcshane_extend(g, points, [0.0])


def test_mcshane_on_finite_target():
    target = FiniteTarget(LINE)
    u = mcshane_extend(target, np.array([[0.0], [2.0]]), [0.0, 1.0])
    assert np.allclose(u(target.points()), [0.0, 1.0, 1.0])


def test_shaved_bump():
    g = heisenberg(1)
    with pytest.raises(EmptyExteriorError):
        shaved_bump(g, OpenSetSpec.whole(g), 0.1)
    V = OpenSetSpec.ball(g, np.zeros(3), 0.5)
    u = shaved_bump(g, V, 0.1)
    assert u.support_gap == pytest.approx(0.1)
    assert u.bound == pytest.approx(0.4)
    assert u(np.zeros((1, 3)))[0] == pytest.approx(0.4)
    # vanishes at depth < epsilon
    assert u(np.array([[0.45, 0.0, 0.0]]))[0] == 0.0
    with pytest.raises(ValueError):
        shaved_bump(g, V, 0.0)
    with pytest.raises(ValueError):
        shaved_bump(heisenberg(2), V, 0.1)


def test_inner_set_and_annulus_cutoff():
    g = heisenberg(1)
    V = OpenSetSpec.ball(g, np.zeros(3), 0.5)
    inner = inner_set(g, V, 0.1)
    assert inner.kind == SetKind.BALL
    assert inner.radius == pytest.approx(0.4)
    assert inner_set(g, V, 0.6).kind == SetKind.EMPTY

    delta = 0.1
    u = refine(coordinate_function(g, 0), V, delta)
    cut = annulus_cutoff(u, V, delta)
    assert cut.support_gap == pytest.approx(delta)
    # kept on K_{2 delta}, zero off K_delta
    inside = np.array([[0.05, 0.0, 0.0]])
    assert cut(inside)[0] == pytest.approx(u(inside)[0])
    assert cut(np.array([[0.45, 0.0, 0.0]]))[0] == 0.0
    with pytest.raises(ValueError):
        annulus_cutoff(coordinate_function(g, 0), V, delta)
    assert annulus_cutoff(u, OpenSetSpec.whole(g), delta) is u


def test_disjoint_sum():
    g = heisenberg(1)
    first = shaved_bump(g, OpenSetSpec.ball(g, [-2.0, 0.0, 0.0], 0.5), 0.25)
    second = shaved_bump(g, OpenSetSpec.ball(g, [2.0, 0.0, 0.0], 0.5), 0.25)
    u = disjoint_sum(first, second, gap=3.0)
    assert u.lipschitz == 1.0
    assert u.support_gap == pytest.approx(0.25)
    assert np.allclose(u(np.array([[-2.0, 0.0, 0.0], [2.0, 0.0, 0.0]])), [0.25, 0.25])
    # the bounds must not exceed r / 2
    with pytest.raises(ValueError):
        disjoint_sum(first, second, gap=0.4)
    with pytest.raises(ValueError):
        disjoint_sum(first, coordinate_function(g, [2.0, 0.0]), gap=3.0)
    with pytest.raises(ValueError):
        disjoint_sum(first, second, gap=0.0)


def test_validate_lipschitz():
    g = heisenberg(1)
    u = distance_function(g, np.array([0.1, 0.0, 0.2]))
    report = validate_lipschitz(u, g, n_pairs=512, seed=0, slack=1e-6, atol=1e-9)
    assert report.passed
    assert report.n_violations == 0
    assert report.max_quotient <= 1.0 + 1e-6
    # a wrong claim is caught
    doubled = coordinate_function(g, [2.0, 0.0])
    report = validate_lipschitz(doubled, g, lipschitz=1.0, n_pairs=512, seed=0)
    assert not report.passed
    assert report.max_quotient > 1.0
    assert report.worst_pair is not None


def test_farthest_point_net():
    target = as_target(euclidean(1))
    candidates = np.array([[0.0], [0.1], [1.0], [0.5]])
    net = farthest_point_net(target, candidates, 3)
    assert np.allclose(net[:, 0], [0.0, 1.0, 0.5])
    assert len(farthest_point_net(target, candidates, 10)) == 4


def test_family_unconstrained():
    g = heisenberg(1)
    family = family_generate(g, budget=32, seed=0)
    assert 0 < len(family) <= 32
    assert family[0].provenance == "coordinate"
    for member in family:
        assert member.lipschitz <= 1.0 + 1e-12
        assert validate_lipschitz(member, g, n_pairs=128, seed=1, slack=1e-6, atol=1e-9).passed
    described = describe_family(family)
    assert described[0]["index"] == 0
    assert family_generate(g, budget=0) == []
    with pytest.raises(ValueError):
        family_generate(g, budget=-1)


def test_family_constrained():
    g = heisenberg(1)
    V = OpenSetSpec.ball(g, np.zeros(3), 0.5)
    family = family_generate(g, V, budget=32, seed=0)
    assert 0 < len(family) <= 32
    for member in family:
        assert member.support_gap is not None and member.support_gap > 0
        assert member.lipschitz <= 1.0 + 1e-12
    # every member vanishes outside V
    outside = np.array([[0.6, 0.0, 0.0], [0.0, -0.7, 0.0], [0.0, 0.0, 0.5]])
    for member in family:
        assert np.allclose(member(outside), 0.0)
    assert family_generate(g, OpenSetSpec.empty(g), budget=16) == []


def test_family_drops_unbounded_members(tmp_path, monkeypatch):
    families = import_module("carnot_lab.lipschitz_lab.families")

    def unbounded(u, V, delta, sup_norm=None):
        raise UnboundedSetError(u)

    monkeypatch.setattr(families, "refine", unbounded)
    g = heisenberg(1)
    V = OpenSetSpec.ball(g, np.zeros(3), 0.5)
    logger = configure(str(tmp_path), ["log"])
    logger.set_level(DEBUG)
    family = family_generate(g, V, budget=32, seed=0, logger=logger)
    logger.close()
    assert len(family) > 0
    assert all(member.support_gap > 0 for member in family)
    assert "Dropped a family member" in (tmp_path / "log.txt").read_text()
    with pytest.warns(UserWarning, match="with no bound on"):
        family_generate(g, V, budget=32, seed=0)

    def broken(u, V, delta, sup_norm=None):
        raise ValueError("broken refinement")

    monkeypatch.setattr(families, "refine", broken)
    with pytest.raises(ValueError, match="broken refinement"):
        family_generate(g, V, budget=32, seed=0)


def test_family_on_finite_target():
    target = FiniteTarget(LINE)
    family = family_generate(target, budget=16, seed=0)
    assert len(family) > 0
    for member in family:
        assert validate_lipschitz(member, target, n_pairs=64, seed=2).passed
    V = OpenSetSpec.subset(target, [0])
    for member in family_generate(target, V, budget=16, seed=0):
        assert np.allclose(member(np.array([[1.0], [2.0]])), 0.0)
