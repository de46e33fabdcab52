import json

import numpy as np
import pytest

from carnot_lab.carnot_core import (
    DescriptorError,
    EmptyCalibrationError,
    GradedVector,
    GroupDescriptor,
    Region,
    UnsupportedStepError,
    bracket,
    calibrate_measure,
    descriptor_from_dict,
    dilate,
    engel,
    euclidean,
    flow,
    get_group,
    heisenberg,
    inverse,
    left_invariant_frame,
    load_descriptor,
    measure,
    multiply,
    project_to_hyperplane,
)
from carnot_lab.carnot_core.groups import euclidean_ball_volume

GROUPS = [euclidean(2), heisenberg(1), heisenberg(2), engel()]


def _random_points(g, n, seed=0):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n, g.total_dim))


def test_heisenberg_product():
    g = heisenberg(1)
    assert np.allclose(multiply(g, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), [1.0, 1.0, 0.5])
    assert np.allclose(multiply(g, [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]), [1.0, 1.0, -0.5])
    assert np.allclose(inverse(g, [1.0, 2.0, 3.0]), [-1.0, -2.0, -3.0])


@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.name)
def test_group_axioms(g):
    a, b, c = _random_points(g, 3 * 16, seed=1).reshape(3, 16, g.total_dim)
    identity = np.zeros(g.total_dim)
    assert np.allclose(multiply(g, multiply(g, a, b), c), multiply(g, a, multiply(g, b, c)), atol=1e-12)
    assert np.allclose(multiply(g, a, inverse(g, a)), 0.0, atol=1e-12)
    assert np.allclose(multiply(g, identity, a), a)
    assert np.allclose(multiply(g, a, identity), a)


@pytest.mark.parametrize("g", GROUPS, ids=lambda g: g.name)
def test_dilations(g):
    a, b = _random_points(g, 2 * 8, seed=2).reshape(2, 8, g.total_dim)
    assert np.allclose(dilate(g, 2.0, dilate(g, 0.5, a)), a)
    assert np.allclose(dilate(g, 1.5, dilate(g, 2.0, a)), dilate(g, 3.0, a))
    # dilations are automorphisms
    assert np.allclose(dilate(g, 1.7, multiply(g, a, b)), multiply(g, dilate(g, 1.7, a), dilate(g, 1.7, b)), atol=1e-12)
    with pytest.raises(ValueError):
        dilate(g, 0.0, a)
    with pytest.raises(ValueError):
        dilate(g, -1.0, a)


def test_structure_constants():
    g = engel()
    assert g.layer_dims == (2, 1, 1)
    assert g.step == 3
    assert g.homogeneous_dim == 2 + 2 + 3
    assert g.jacobi_residual() == 0.0
    c = g.structure_constants
    assert np.allclose(c, -c.transpose(1, 0, 2))
    e1, e2 = np.eye(4)[0], np.eye(4)[1]
    assert np.allclose(bracket(g, e1, e2), [0.0, 0.0, 1.0, 0.0])
    assert np.allclose(bracket(g, e1, bracket(g, e1, e2)), [0.0, 0.0, 0.0, 1.0])
    assert heisenberg(2).homogeneous_dim == 6
    assert euclidean(3).is_abelian


def test_graded_vector():
    g = engel()
    v = GradedVector(g, [1.0, 2.0, 3.0, 4.0])
    assert np.allclose(v.horizontal, [1.0, 2.0])
    assert [component.tolist() for component in v.components] == [[1.0, 2.0], [3.0], [4.0]]
    assert np.allclose(v.layer(3), [4.0])
    with pytest.raises(ValueError):
        v.layer(4)


def test_flow_and_projection():
    g = heisenberg(1)
    x = np.array([0.3, -0.2, 0.1])
    # integral lines compose
    assert np.allclose(flow(g, 0, 0.4, flow(g, 0, 0.6, x)), flow(g, 0, 1.0, x))
    projected = project_to_hyperplane(g, 0, x)
    assert projected[0] == pytest.approx(0.0)
    assert np.allclose(flow(g, 0, x[0], projected), x)
    # X_j(x) is the velocity of the flow
    h = 1e-6
    frame = left_invariant_frame(g, x)
    for j in range(g.horizontal_dim):
        velocity = (flow(g, j, h, x) - flow(g, j, -h, x)) / (2 * h)
        assert np.allclose(frame[j], velocity, atol=1e-8)


def test_left_invariant_frame_engel():
    g = engel()
    x = _random_points(g, 1, seed=3)[0]
    h = 1e-6
    frame = left_invariant_frame(g, x)
    for j in range(g.horizontal_dim):
        velocity = (flow(g, j, h, x) - flow(g, j, -h, x)) / (2 * h)
        assert np.allclose(frame[j], velocity, atol=1e-6)


def test_invalid_descriptors():
    # not antisymmetric
    constants = np.zeros((3, 3, 3))
    constants[0, 1, 2] = 1.0
    with pytest.raises(DescriptorError, match="antisymmetric"):
        GroupDescriptor([2, 1], constants)
    # breaks the grading: [X_1, X_2] in the first layer
    constants = np.zeros((3, 3, 3))
    constants[0, 1, 0], constants[1, 0, 0] = 1.0, -1.0
    with pytest.raises(DescriptorError, match="grading"):
        GroupDescriptor([2, 1], constants)
    # second layer not generated
    with pytest.raises(DescriptorError, match="not generated"):
        GroupDescriptor([2, 1], np.zeros((3, 3, 3)))
    with pytest.raises(DescriptorError):
        GroupDescriptor([], None)
    with pytest.raises(DescriptorError):
        GroupDescriptor([2, 1], np.zeros((2, 2, 2)))


def test_unsupported_step():
    # filiform algebra of step 4: [X_1, X_k] = X_{k+1}
    constants = np.zeros((5, 5, 5))
    for k in (1, 2, 3):
        constants[0, k, k + 1], constants[k, 0, k + 1] = 1.0, -1.0
    g = GroupDescriptor([2, 1, 1, 1], constants, name="filiform-5")
    assert g.step == 4
    with pytest.raises(UnsupportedStepError):
        multiply(g, np.zeros(5), np.ones(5))
    with pytest.raises(UnsupportedStepError):
        left_invariant_frame(g, np.zeros(5))


def test_descriptor_from_dict():
    data = {
        "name": "engel",
        "step": 3,
        "layer_dims": [2, 1, 1],
        "structure_constants": [[0, 1, 2, 1.0], [0, 2, 3, 1.0]],
    }
    g = descriptor_from_dict(data)
    assert g == engel()
    a, b = _random_points(g, 2, seed=4)
    assert np.allclose(multiply(g, a, b), multiply(engel(), a, b))

    heisenberg_data = {"layer_dims": [2, 1], "structure_constants": [[0, 1, 2, 1.0]]}
    assert descriptor_from_dict(heisenberg_data).closed_form == "heisenberg"

    with pytest.raises(DescriptorError, match="step"):
        descriptor_from_dict(dict(data, step=2))
    with pytest.raises(DescriptorError, match="unknown fields"):
        descriptor_from_dict(dict(data, color="blue"))
    with pytest.raises(DescriptorError, match="outside"):
        descriptor_from_dict(dict(data, structure_constants=[[0, 1, 7, 1.0]]))
    with pytest.raises(DescriptorError, match="missing"):
        descriptor_from_dict({"layer_dims": [2, 1]})


def test_load_descriptor(tmp_path):
    path = tmp_path / "engel.json"
    path.write_text(json.dumps({"layer_dims": [2, 1, 1], "structure_constants": [[0, 1, 2, 1], [0, 2, 3, 1]]}))
    assert load_descriptor(path).layer_dims == (2, 1, 1)

    broken = tmp_path / "broken.json"
    broken.write_text('{"layer_dims": [2, 1],\n "structure_constants": [[0, 1, 2, 1.0]')
    with pytest.raises(DescriptorError) as excinfo:
        load_descriptor(broken)
    # file:line:col
    assert f"{broken}:2:" in str(excinfo.value)

    with pytest.raises(DescriptorError, match="cannot read"):
        load_descriptor(tmp_path / "missing.json")


def test_get_group():
    assert get_group("heisenberg-1") is get_group("heisenberg-1")
    assert get_group("euclidean-5").total_dim == 5
    assert get_group("heisenberg-3").layer_dims == (6, 1)
    with pytest.raises(KeyError):
        get_group("sphere-2")


@pytest.mark.parametrize("n", [1, 2, 3])
def test_euclidean_measure(n):
    g = euclidean(n)
    assert g.measure_norm == pytest.approx(1.0 / euclidean_ball_volume(n))
    assert g.is_calibrated
    estimate = measure(g, Region.box(-np.ones(n), np.ones(n)), n_samples=1000)
    # the box is full, so there is no Monte Carlo error
    assert estimate.value == pytest.approx(2.0**n * g.measure_norm)


def test_region_dilate():
    g = heisenberg(1)
    region = Region.box([-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]).dilate(g, 2.0)
    assert np.allclose(region.high, [2.0, 2.0, 4.0])
    assert region.box_volume == pytest.approx(8.0 * 2.0**4)


def test_calibration_quadrature():
    g = heisenberg(1)
    constant = calibrate_measure(g, method="quadrature")
    assert constant.value > 0
    assert g.is_calibrated
    assert g.measure_norm == pytest.approx(constant.value)
    with pytest.raises(ValueError):
        calibrate_measure(engel(), method="quadrature")
    with pytest.raises(ValueError):
        calibrate_measure(g, method="simpson")


def test_calibration_without_hits(monkeypatch):
    # a unit ball region that never contains a sample
    def empty_region(g):
        return Region(lambda points: np.zeros(points.shape[:-1], dtype=bool), -np.ones(g.total_dim), np.ones(g.total_dim))

    monkeypatch.setattr("carnot_lab.cc_metric.balls.unit_ball_region", empty_region)
    g = engel()
    with pytest.raises(EmptyCalibrationError, match="increase n_samples"):
        calibrate_measure(g, n_samples=16, seed=12345)
    assert not g.is_calibrated


@pytest.mark.slow
def test_calibration_monte_carlo_agrees_with_quadrature():
    quadrature = calibrate_measure(heisenberg(1), method="quadrature")
    monte_carlo = calibrate_measure(heisenberg(1), method="monte_carlo", n_samples=2 * 10**5, seed=0)
    assert abs(monte_carlo.value - quadrature.value) < 5 * monte_carlo.standard_error + 1e-9
