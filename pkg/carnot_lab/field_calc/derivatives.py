from typing import Callable, Optional, Tuple, Union

import numpy as np

from carnot_lab.carnot_core.groups import GroupDescriptor, flow
from carnot_lab.cc_metric.distance import distance
from carnot_lab.common.type_aliases import AclCheck, CurveSamples, DerivativeEstimate, GradientEstimate, PointLike, Seminorm
from carnot_lab.field_calc.domains import Domain
from carnot_lab.field_calc.fields import ScalarField
from carnot_lab.field_calc.stencil import HorizontalStencil

Metric = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _source_group(obj) -> GroupDescriptor:
    """
    Group of the points a field or a map is evaluated on.
    """
    group = obj.group if isinstance(obj, ScalarField) else getattr(obj, "source", None)
    if group is None:
        raise ValueError(f"{obj!r} is not attached to a group")
    return group


def _target_metric(obj) -> Metric:
    """
    Metric of the values: absolute difference for fields, CC distance of the target group for maps.
    """
    if isinstance(obj, ScalarField):
        return lambda a, b: np.abs(a - b)
    target = obj.target
    return lambda a, b: np.asarray(distance(target, a, b))


def horizontal_derivative(
    u: ScalarField, j: int, x: PointLike, h: float = 1e-4, domain: Optional[Domain] = None
) -> DerivativeEstimate:
    """
    ``X_j u(x)`` by central differences along the flow, at ``h`` and ``h / 2``.
    The field is evaluated directly (its construction tree is not used), which makes this
    the finite-difference reference for the chain-rule identities.

    :param u: the field
    :param j: horizontal index
    :param x: point(s), shape (N,) or (B, N)
    :param h: the step
    :param domain: when given, a stencil leaving the domain falls back to one-sided differences (flagged)
    :return: the estimate (value at ``h``, refined at ``h / 2``, extrapolation, error and one-sided flag)
    """
    group = _source_group(u)
    if not 0 <= j < group.horizontal_dim:
        raise ValueError(f"Horizontal index must be between 0 and {group.horizontal_dim - 1}, got {j}")
    single = np.ndim(x) == 1
    sample = HorizontalStencil(group, h=h, domain=domain, richardson=True).sample(x)
    center = u.evaluate(sample.center)
    coarse, fine = sample.differences(center, u.evaluate(sample.neighbors))
    coarse, fine = coarse[:, j], fine[:, j]
    result = DerivativeEstimate(
        value=coarse,
        refined=fine,
        extrapolated=(4 * fine - coarse) / 3,
        error=np.abs(coarse - fine),
        one_sided=sample.one_sided[:, j],
    )
    if single:
        return DerivativeEstimate(*(field[0] for field in result))
    return result


def horizontal_gradient(
    u: ScalarField, x: PointLike, h: float = 1e-4, domain: Optional[Domain] = None, use_tree: bool = False
) -> GradientEstimate:
    """
    ``grad_h u = (X_1 u, ..., X_n u)``.

    :param u: the field
    :param x: point(s), shape (N,) or (B, N)
    :param h: the step
    :param domain: domain for the one-sided fallback
    :param use_tree: differentiate through the construction tree (chain rule and closed-form leaf gradients)
        instead of differencing the field as a whole
    :return: gradient of shape (n,) or (B, n), with error and one-sided flags
    """
    group = _source_group(u)
    single = np.ndim(x) == 1
    sample = HorizontalStencil(group, h=h, domain=domain, richardson=True).sample(x)
    if use_tree:
        _, estimate = u.value_and_gradient(sample)
    else:
        estimate = sample.differentiate(u.evaluate(sample.center), u.evaluate(sample.neighbors))
    if single:
        return GradientEstimate(*(field[0] for field in estimate))
    return estimate


def gradient_norms(
    u: ScalarField, domain: Domain, h: Optional[float] = None, transform=None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    ``|grad_h (u o transform)|`` and its error at the quadrature points of the domain.
    """
    stencil = HorizontalStencil(domain.group, h=h or domain.default_step, transform=transform)
    _, estimate = u.value_and_gradient(stencil.sample(domain.points))
    return np.linalg.norm(estimate.value, axis=-1), np.linalg.norm(estimate.error, axis=-1)


def seminorm_Lq(u: ScalarField, domain: Domain, q: float, h: Optional[float] = None) -> Seminorm:
    """
    ``|| |grad_h u| ||_{L_q(domain)}`` for the normalized Haar measure.
    ``q = inf`` is the maximum over the quadrature points, a surrogate of the essential supremum
    that is only approached from below.

    :param u: the field
    :param domain: the domain and its quadrature
    :param q: exponent in [1, inf]
    :param h: finite-difference step (default: 1e-4 times the diameter)
    :return: the seminorm with an error estimate (Monte Carlo error plus finite-difference error)
    """
    if not q >= 1:
        raise ValueError(f"Expected q >= 1, got {q}")
    if domain.is_empty:
        return Seminorm(q=q, value=0.0, error=0.0)
    norms, errors = gradient_norms(u, domain, h)
    if np.isinf(q):
        return Seminorm(q=q, value=float(np.max(norms)), error=float(np.max(errors)))
    integral = domain.integrate(norms**q)
    value = integral.value ** (1.0 / q)
    if integral.value > 0:
        # delta(I^(1/q)) = I^(1/q - 1) delta(I) / q
        error = value / (q * integral.value) * integral.standard_error
    else:
        error = 0.0
    error += float(domain.integrate(errors).value / max(domain.measure, 1e-300))
    return Seminorm(q=q, value=float(value), error=float(error))


def line_restriction(
    phi, j: int, base: PointLike, window: Tuple[float, float] = (-1.0, 1.0), n_points: int = 65
) -> CurveSamples:
    """
    Samples of ``t -> phi(exp(t X_j)(base))`` for ``base`` on the hyperplane ``{x_j = 0}``.

    :param phi: a scalar field or a map
    :param j: horizontal index
    :param base: point with ``x_j = 0``
    :param window: time interval
    :param n_points: number of samples
    :return: the times and the values (scalars for fields, points for maps)
    """
    group = _source_group(phi)
    base = group.check_point(base)
    if abs(base[j]) > 1e-12:
        raise ValueError(f"The base point must lie on the hyperplane x_{j} = 0, got x_{j} = {base[j]}")
    if n_points < 2:
        raise ValueError(f"Expected at least 2 samples, got {n_points}")
    times = np.linspace(window[0], window[1], n_points)
    points = flow(group, j, times, base)
    return CurveSamples(times=times, points=np.asarray(phi(points)))


def curve_length(samples: CurveSamples, metric: Union[GroupDescriptor, Metric, None] = None) -> float:
    """
    Length of the polygonal line through the samples of a curve.

    :param samples: the curve
    :param metric: a group (CC distance), a callable ``d(a, b)``, or None for scalar curves
    :return: sum of the distances between successive samples
    """
    values = samples.points
    if metric is None:
        if values.ndim != 1:
            raise ValueError("A metric is needed for curves with values in a group")
        return float(np.sum(np.abs(np.diff(values))))
    if isinstance(metric, GroupDescriptor):
        return float(np.sum(distance(metric, values[:-1], values[1:])))
    return float(np.sum(metric(values[:-1], values[1:])))


def metric_derivative(phi, j: int, x: PointLike, h: float = 1e-4, method: str = "chord") -> float:
    """
    ``m X_j phi(x) = lim d(phi(exp(h X_j) x), phi(x)) / |h|``.

    :param phi: a map between groups (or a scalar field)
    :param j: horizontal index
    :param x: the point
    :param h: the step
    :param method: "chord" (symmetric difference quotients at ``h`` and ``h / 2`` extrapolated to ``h = 0``)
        or "length" (length of the restricted curve over ``[-h, h]`` divided by ``2h``)
    :return: the metric derivative
    """
    group = _source_group(phi)
    x = group.check_point(x)
    metric = _target_metric(phi)
    if method == "length":
        times = np.linspace(-h, h, 9)
        values = np.asarray(phi(flow(group, j, times, x)))
        length = np.sum(metric(values[:-1], values[1:]))
        return float(length / (2 * h))
    if method != "chord":
        raise ValueError(f"Unknown method {method!r}, expected 'chord' or 'length'")
    image = np.asarray(phi(x))

    def quotient(step: float) -> float:
        ends = np.asarray(phi(flow(group, j, np.array([step, -step]), x)))
        return float(np.sum(metric(ends, np.stack([image, image]))) / (2 * step))

    return max(2 * quotient(h / 2) - quotient(h), 0.0)


def acl_spot_check(
    phi, j: int, base: PointLike, window: Tuple[float, float] = (-1.0, 1.0), n_points: int = 33
) -> AclCheck:
    """
    Absolute continuity on a line: lengths of the restriction at two resolutions in the target metric.
    A small relative change means the polygonal lengths have converged.

    :param phi: a field or a map
    :param j: horizontal index
    :param base: point on the hyperplane ``{x_j = 0}``
    :param window: time interval
    :param n_points: samples of the coarse polygon (the fine one has ``2 n_points - 1``)
    :return: both lengths and their relative change
    """
    metric = _target_metric(phi)
    coarse = line_restriction(phi, j, base, window, n_points)
    fine = line_restriction(phi, j, base, window, 2 * n_points - 1)
    coarse_length = curve_length(coarse, metric)
    fine_length = curve_length(fine, metric)
    change = abs(fine_length - coarse_length) / fine_length if fine_length > 0 else 0.0
    return AclCheck(coarse_length=coarse_length, fine_length=fine_length, relative_change=change)
