"""
Scalar fields as construction trees.

Leaves evaluate a closed form (and know their horizontal gradient when it is cheap), inner nodes
post-compose, clamp or add. The gradient of a tree is obtained from the gradients of its leaves
by the chain rule ``grad(F o u) = F'(u) grad(u)``, so identities such as
``grad(u+) = chi_{u > 0} grad(u)`` hold exactly on the tree.
"""
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from carnot_lab.carnot_core.groups import GroupDescriptor, left_invariant_frame
from carnot_lab.cc_metric.distance import distance
from carnot_lab.common.type_aliases import GradientEstimate, PointLike
from carnot_lab.field_calc.stencil import StencilSample


class ScalarField(ABC):
    """
    Base class for real functions on a group (or on any set the evaluation rule accepts).

    :param group: the group the field is defined on, None when the field does not depend on one
    """

    kind = "field"

    def __init__(self, group: Optional[GroupDescriptor] = None):
        super(ScalarField, self).__init__()
        self.group = group

    @abstractmethod
    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """
        :param points: array of shape (..., N)
        :return: values of shape (...)
        """

    def __call__(self, points: PointLike) -> np.ndarray:
        return self.evaluate(np.asarray(points))

    def analytic_gradient(self, points: np.ndarray) -> Optional[np.ndarray]:
        """
        Horizontal gradient on ``self.group`` when known in closed form.

        :param points: array of shape (B, N)
        :return: array of shape (B, n), or None
        """
        return None

    def value_and_gradient(self, sample: StencilSample) -> Tuple[np.ndarray, GradientEstimate]:
        """
        Values at the stencil centers and horizontal gradient of ``self o transform`` at the base points.

        :param sample: a stencil built by :class:`carnot_lab.field_calc.stencil.HorizontalStencil`
        :return: values of shape (B,) and the gradient estimate
        """
        center = self.evaluate(sample.center)
        if sample.identity and self.group is not None and self.group == sample.source:
            gradient = self.analytic_gradient(sample.base)
            if gradient is not None:
                return center, GradientEstimate(gradient, np.zeros_like(gradient), sample.one_sided)
        return center, sample.differentiate(center, self.evaluate(sample.neighbors))

    def params(self) -> Dict[str, Any]:
        return {}

    def children(self) -> List["ScalarField"]:
        return []

    def describe(self) -> Dict[str, Any]:
        """
        JSON-compatible description of the construction tree.
        """
        description = {"kind": self.kind, "params": self.params()}
        if self.children():
            description["children"] = [child.describe() for child in self.children()]
        return description

    def __neg__(self) -> "ScalarField":
        return scale(self, -1.0)

    def __mul__(self, factor: float) -> "ScalarField":
        return scale(self, factor)

    __rmul__ = __mul__

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return Sum([self, other])


# Leaves
# ----------------------------------------


class ConstantField(ScalarField):
    kind = "constant"

    def __init__(self, value: float, group: Optional[GroupDescriptor] = None):
        super(ConstantField, self).__init__(group)
        self.value = float(value)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.full(np.shape(points)[:-1], self.value)

    def value_and_gradient(self, sample: StencilSample) -> Tuple[np.ndarray, GradientEstimate]:
        gradient = np.zeros((len(sample), sample.source.horizontal_dim))
        return self.evaluate(sample.center), GradientEstimate(gradient, np.zeros_like(gradient), sample.one_sided)

    def params(self) -> Dict[str, Any]:
        return {"value": self.value}


class CoordinateField(ScalarField):
    """
    The exponential coordinate ``x_index``; its horizontal gradient is column ``index`` of the frame.
    """

    kind = "coordinate"

    def __init__(self, group: GroupDescriptor, index: int):
        super(CoordinateField, self).__init__(group)
        if not 0 <= index < group.total_dim:
            raise ValueError(f"Coordinate index must be between 0 and {group.total_dim - 1}, got {index}")
        self.index = index

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return points[..., self.index]

    def analytic_gradient(self, points: np.ndarray) -> np.ndarray:
        return left_invariant_frame(self.group, points)[..., self.index]

    def params(self) -> Dict[str, Any]:
        return {"index": self.index}


class LinearHorizontalField(ScalarField):
    """
    ``<e, pi_1(x)>`` for a horizontal vector ``e``; 1-Lipschitz when ``|e| <= 1``.
    """

    kind = "linear"

    def __init__(self, group: GroupDescriptor, direction: PointLike):
        super(LinearHorizontalField, self).__init__(group)
        self.direction = np.asarray(direction, dtype=np.float64)
        if self.direction.shape != (group.horizontal_dim,):
            raise ValueError(f"Expected a direction with {group.horizontal_dim} components, got {self.direction.shape}")

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return points[..., : self.group.horizontal_dim] @ self.direction

    def analytic_gradient(self, points: np.ndarray) -> np.ndarray:
        # brackets never reach the first layer, so X_j pi_1 = e_j
        return np.broadcast_to(self.direction, points.shape[:-1] + self.direction.shape).copy()

    def params(self) -> Dict[str, Any]:
        return {"direction": self.direction.tolist()}


class PolynomialField(ScalarField):
    """
    Polynomial in exponential coordinates.

    :param group: the group
    :param terms: mapping from exponent tuples (one exponent per coordinate) to coefficients
    """

    kind = "polynomial"

    def __init__(self, group: GroupDescriptor, terms: Dict[Tuple[int, ...], float]):
        super(PolynomialField, self).__init__(group)
        self.exponents = np.array([list(exponent) for exponent in terms], dtype=np.int64).reshape(-1, group.total_dim)
        self.coefficients = np.array(list(terms.values()), dtype=np.float64)
        if np.any(self.exponents < 0):
            raise ValueError("Exponents must be nonnegative")

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        monomials = np.prod(points[..., None, :] ** self.exponents, axis=-1)
        return monomials @ self.coefficients

    def euclidean_gradient(self, points: np.ndarray) -> np.ndarray:
        columns = []
        for axis in range(self.group.total_dim):
            lowered = self.exponents.copy()
            factors = self.coefficients * lowered[:, axis]
            lowered[:, axis] = np.maximum(lowered[:, axis] - 1, 0)
            columns.append(np.prod(points[..., None, :] ** lowered, axis=-1) @ factors)
        return np.stack(columns, axis=-1)

    def analytic_gradient(self, points: np.ndarray) -> np.ndarray:
        frame = left_invariant_frame(self.group, points)
        return np.einsum("...jk,...k->...j", frame, self.euclidean_gradient(points))

    def params(self) -> Dict[str, Any]:
        return {
            "terms": [[exponent.tolist(), float(value)] for exponent, value in zip(self.exponents, self.coefficients)]
        }


class DistanceField(ScalarField):
    kind = "distance"

    def __init__(self, group: GroupDescriptor, center: PointLike):
        super(DistanceField, self).__init__(group)
        self.center = group.check_point(center)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(distance(self.group, self.center, points))

    def params(self) -> Dict[str, Any]:
        return {"center": self.center.tolist()}


class FunctionField(ScalarField):
    """
    Field given by a vectorized callable.

    :param function: the evaluation rule
    :param group: the group the field lives on
    :param gradient: optional closed-form horizontal gradient, (B, N) -> (B, n)
    :param kind: label of the field
    :param params: parameters reported by :meth:`describe`
    """

    def __init__(
        self,
        function: Callable[[np.ndarray], np.ndarray],
        group: Optional[GroupDescriptor] = None,
        gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        kind: str = "function",
        params: Optional[Dict[str, Any]] = None,
    ):
        super(FunctionField, self).__init__(group)
        self.function = function
        self.gradient = gradient
        self.kind = kind
        self._params = params or {}

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.function(points), dtype=np.float64)

    def analytic_gradient(self, points: np.ndarray) -> Optional[np.ndarray]:
        return None if self.gradient is None else self.gradient(points)

    def params(self) -> Dict[str, Any]:
        return dict(self._params)


# Inner nodes
# ----------------------------------------


class PostComposed(ScalarField):
    """
    ``F o u`` with the derivative ``F'`` used by the chain rule.

    :param inner: the field ``u``
    :param function: vectorized ``F``
    :param derivative: vectorized ``F'`` (any one-sided value at the kinks)
    :param kind: label of the node
    :param params: parameters reported by :meth:`describe`
    """

    def __init__(
        self,
        inner: ScalarField,
        function: Callable[[np.ndarray], np.ndarray],
        derivative: Callable[[np.ndarray], np.ndarray],
        kind: str,
        params: Optional[Dict[str, Any]] = None,
    ):
        super(PostComposed, self).__init__(inner.group)
        self.inner = inner
        self.function = function
        self.derivative = derivative
        self.kind = kind
        self._params = params or {}

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.function(self.inner.evaluate(points))

    def value_and_gradient(self, sample: StencilSample) -> Tuple[np.ndarray, GradientEstimate]:
        values, gradient = self.inner.value_and_gradient(sample)
        slope = np.asarray(self.derivative(values), dtype=np.float64)[..., None]
        return self.function(values), GradientEstimate(
            slope * gradient.value, np.abs(slope) * gradient.error, gradient.one_sided
        )

    def params(self) -> Dict[str, Any]:
        return dict(self._params)

    def children(self) -> List[ScalarField]:
        return [self.inner]


class Clamp(ScalarField):
    """
    ``min(max(u, -w), w)`` for a nonnegative field ``w``: the median of ``-w, u, w``.
    """

    kind = "clamp"

    def __init__(self, field: ScalarField, width: ScalarField):
        super(Clamp, self).__init__(field.group)
        self.field = field
        self.width = width

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        width = self.width.evaluate(points)
        return np.clip(self.field.evaluate(points), -width, width)

    def value_and_gradient(self, sample: StencilSample) -> Tuple[np.ndarray, GradientEstimate]:
        values, gradient = self.field.value_and_gradient(sample)
        width, width_gradient = self.width.value_and_gradient(sample)
        above, below = (values > width)[..., None], (values < -width)[..., None]
        value = np.where(above, width_gradient.value, np.where(below, -width_gradient.value, gradient.value))
        error = np.where(above | below, width_gradient.error, gradient.error)
        return np.clip(values, -width, width), GradientEstimate(value, error, gradient.one_sided | width_gradient.one_sided)

    def children(self) -> List[ScalarField]:
        return [self.field, self.width]


class Sum(ScalarField):
    kind = "sum"

    def __init__(self, fields: Sequence[ScalarField]):
        if len(fields) == 0:
            raise ValueError("Sum of no field")
        super(Sum, self).__init__(fields[0].group)
        self.fields = list(fields)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return sum(field.evaluate(points) for field in self.fields)

    def value_and_gradient(self, sample: StencilSample) -> Tuple[np.ndarray, GradientEstimate]:
        results = [field.value_and_gradient(sample) for field in self.fields]
        values = sum(value for value, _ in results)
        gradient = GradientEstimate(
            value=sum(estimate.value for _, estimate in results),
            error=sum(estimate.error for _, estimate in results),
            one_sided=np.any([estimate.one_sided for _, estimate in results], axis=0),
        )
        return values, gradient

    def children(self) -> List[ScalarField]:
        return list(self.fields)


class Extremum(ScalarField):
    """
    Pointwise ``max`` (or ``min``) of fields; the gradient is the one of the field attaining it.

    :param fields: the fields
    :param mode: "max" or "min"
    """

    def __init__(self, fields: Sequence[ScalarField], mode: str = "max"):
        if len(fields) == 0:
            raise ValueError(f"{mode} of no field")
        if mode not in ("max", "min"):
            raise ValueError(f"Unknown mode {mode!r}, expected 'max' or 'min'")
        super(Extremum, self).__init__(fields[0].group)
        self.fields = list(fields)
        self.mode = mode
        self.kind = mode

    def _stack(self, values: List[np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
        values = np.stack(values)
        chosen = np.argmax(values, axis=0) if self.mode == "max" else np.argmin(values, axis=0)
        return values, chosen

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        values, chosen = self._stack([field.evaluate(points) for field in self.fields])
        return np.take_along_axis(values, chosen[None], axis=0)[0]

    def value_and_gradient(self, sample: StencilSample) -> Tuple[np.ndarray, GradientEstimate]:
        results = [field.value_and_gradient(sample) for field in self.fields]
        values, chosen = self._stack([value for value, _ in results])
        rows = np.arange(values.shape[1])
        gradients = np.stack([estimate.value for _, estimate in results])
        errors = np.stack([estimate.error for _, estimate in results])
        one_sided = np.any([estimate.one_sided for _, estimate in results], axis=0)
        return values[chosen, rows], GradientEstimate(gradients[chosen, rows], errors[chosen, rows], one_sided)

    def children(self) -> List[ScalarField]:
        return list(self.fields)


# Chain-rule toolbox
# ----------------------------------------


def scale(u: ScalarField, factor: float) -> ScalarField:
    factor = float(factor)
    return PostComposed(
        u, lambda t: factor * t, lambda t: np.full(np.shape(t), factor), kind="scale", params={"factor": factor}
    )


def pos_part(u: ScalarField) -> ScalarField:
    """
    ``u+ = max(u, 0)``, with ``grad(u+) = chi_{u > 0} grad(u)``.
    """
    return PostComposed(u, lambda t: np.maximum(t, 0.0), lambda t: (t > 0).astype(np.float64), kind="pos_part")


def neg_part(u: ScalarField) -> ScalarField:
    """
    ``u- = -min(u, 0)``, with ``grad(u-) = -chi_{u < 0} grad(u)``.
    """
    return PostComposed(u, lambda t: np.maximum(-t, 0.0), lambda t: -(t < 0).astype(np.float64), kind="neg_part")


def abs_val(u: ScalarField) -> ScalarField:
    return PostComposed(u, np.abs, np.sign, kind="abs")


def cutoff(u: ScalarField, bound: float) -> ScalarField:
    """
    ``cut_M(u)``: ``u`` where ``|u| < M`` and ``sgn(u) M`` elsewhere;
    its gradient is ``chi_{|u| < M} grad(u)``.

    :param u: the field
    :param bound: the level ``M > 0``
    """
    if not bound > 0:
        raise ValueError(f"Cutoff level must be positive, got {bound}")
    return PostComposed(
        u,
        lambda t: np.clip(t, -bound, bound),
        lambda t: (np.abs(t) < bound).astype(np.float64),
        kind="cutoff",
        params={"M": float(bound)},
    )


def compose_smooth(
    function: Callable[[np.ndarray], np.ndarray],
    derivative: Callable[[np.ndarray], np.ndarray],
    u: ScalarField,
    name: str = "F",
) -> ScalarField:
    """
    ``F o u`` for a C^1 function ``F`` with bounded derivative.
    """
    return PostComposed(u, function, derivative, kind="compose", params={"F": name})


def clamp(u: ScalarField, width: ScalarField) -> ScalarField:
    return Clamp(u, width)


def maximum(fields: Sequence[ScalarField]) -> ScalarField:
    return fields[0] if len(fields) == 1 else Extremum(fields, "max")


def minimum(fields: Sequence[ScalarField]) -> ScalarField:
    return fields[0] if len(fields) == 1 else Extremum(fields, "min")


def bump_field(group: GroupDescriptor, center: PointLike, radius: float) -> ScalarField:
    """
    ``max(r - d(x, c), 0)``.
    """
    if not radius > 0:
        raise ValueError(f"Bump radius must be positive, got {radius}")
    return PostComposed(
        DistanceField(group, center),
        lambda t: np.maximum(radius - t, 0.0),
        lambda t: -(t < radius).astype(np.float64),
        kind="bump",
        params={"radius": float(radius)},
    )
