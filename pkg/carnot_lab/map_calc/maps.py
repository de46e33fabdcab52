"""
Maps between Carnot groups (Euclidean spaces being the abelian case).
"""
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, Optional

import numpy as np

from carnot_lab.carnot_core.groups import GroupDescriptor, dilate, inverse, multiply
from carnot_lab.cc_metric.balls import CcBall, make_ball
from carnot_lab.common.type_aliases import PointLike


class GroupMap(ABC):
    """
    A map ``phi: G -> G~`` in exponential coordinates.

    :param source: the source group
    :param target: the target group (default: the source group)
    """

    kind = "map"

    def __init__(self, source: GroupDescriptor, target: Optional[GroupDescriptor] = None):
        super(GroupMap, self).__init__()
        self.source = source
        self.target = source if target is None else target

    @abstractmethod
    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """
        :param points: array of shape (..., N)
        :return: images of shape (..., N~)
        """

    def __call__(self, points: PointLike) -> np.ndarray:
        return self.evaluate(self.source.check_point(points))

    @property
    def inverse(self) -> Optional["GroupMap"]:
        """
        The inverse map when it is known in closed form.
        """
        return None

    @property
    def is_homeomorphism(self) -> bool:
        return self.inverse is not None

    @property
    def lipschitz(self) -> Optional[float]:
        """
        Certified Lipschitz constant for the Carnot-Caratheodory distances, None when unknown.
        """
        return None

    @property
    def inverse_lipschitz(self) -> Optional[float]:
        """
        Certified Lipschitz constant of the inverse, None when unknown.
        """
        return None

    def image_ball(self, ball: CcBall) -> Optional[CcBall]:
        """
        ``phi(B(c, r))`` when it is again a ball, None otherwise.
        """
        return None

    def inverse_residual(self, points: np.ndarray) -> float:
        """
        ``max |phi^-1(phi(x)) - x|`` on the given points.
        """
        if self.inverse is None:
            raise ValueError(f"{self.kind} has no inverse")
        points = self.source.check_point(points)
        return float(np.max(np.abs(self.inverse(self(points)) - points), initial=0.0))

    def params(self) -> Dict[str, Any]:
        return {}

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "params": self.params(), "source": self.source.name, "target": self.target.name}

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.params()})"


class IdentityMap(GroupMap):
    kind = "identity"

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.array(points, dtype=np.float64)

    @property
    def inverse(self) -> GroupMap:
        return self

    @property
    def lipschitz(self) -> float:
        return 1.0

    @property
    def inverse_lipschitz(self) -> float:
        return 1.0

    def image_ball(self, ball: CcBall) -> CcBall:
        return ball


class LeftTranslation(GroupMap):
    """
    ``L_a(x) = a * x``, an isometry.
    """

    kind = "translation"

    def __init__(self, group: GroupDescriptor, offset: PointLike):
        super(LeftTranslation, self).__init__(group)
        self.offset = group.check_point(offset)
        if self.offset.ndim != 1:
            raise ValueError("The translation offset must be a single point")

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return multiply(self.source, self.offset, points)

    @property
    def inverse(self) -> GroupMap:
        return LeftTranslation(self.source, inverse(self.source, self.offset))

    @property
    def lipschitz(self) -> float:
        return 1.0

    @property
    def inverse_lipschitz(self) -> float:
        return 1.0

    def image_ball(self, ball: CcBall) -> CcBall:
        return make_ball(self.source, self(ball.center), ball.radius)

    def params(self) -> Dict[str, Any]:
        return {"offset": self.offset.tolist()}


class Dilation(GroupMap):
    kind = "dilation"

    def __init__(self, group: GroupDescriptor, factor: float):
        super(Dilation, self).__init__(group)
        if not factor > 0:
            raise ValueError(f"Dilation factor must be positive, got {factor}")
        self.factor = float(factor)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return dilate(self.source, self.factor, points)

    @property
    def inverse(self) -> GroupMap:
        return Dilation(self.source, 1.0 / self.factor)

    @property
    def lipschitz(self) -> float:
        return self.factor

    @property
    def inverse_lipschitz(self) -> float:
        return 1.0 / self.factor

    def image_ball(self, ball: CcBall) -> CcBall:
        return make_ball(self.source, self(ball.center), self.factor * ball.radius)

    def params(self) -> Dict[str, Any]:
        return {"lambda": self.factor}


class Automorphism(GroupMap):
    """
    Graded homomorphism determined by its horizontal block.
    Row ``i`` of ``horizontal`` is the image of ``X_i``; higher layers follow from the brackets.
    In exponential coordinates the map is linear: ``phi(x) = x L`` with ``L`` block diagonal.

    :param source: the source group
    :param horizontal: the (n, n~) horizontal block
    :param target: the target group (default: the source group)
    :param atol: largest accepted homomorphism residual
    """

    kind = "automorphism"

    def __init__(
        self, source: GroupDescriptor, horizontal: np.ndarray, target: Optional[GroupDescriptor] = None, atol: float = 1e-8
    ):
        super(Automorphism, self).__init__(source, target)
        # Avoid circular import
        from carnot_lab.map_calc.differentials import pansu_extend

        self.horizontal = np.array(horizontal, dtype=np.float64)
        self.pansu = pansu_extend(self.source, self.target, self.horizontal)
        if self.pansu.residual > atol:
            raise ValueError(
                f"The horizontal block does not extend to a homomorphism (residual {self.pansu.residual:.3g})"
            )
        self.matrix = self.pansu.matrix()

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.matrix

    @property
    def inverse(self) -> Optional[GroupMap]:
        if self.source.layer_dims != self.target.layer_dims or abs(self.pansu.det) < 1e-14:
            return None
        return Automorphism(self.target, np.linalg.inv(self.horizontal), target=self.source)

    @property
    def lipschitz(self) -> float:
        # horizontal curves are mapped to horizontal curves, speeds scaled by at most |A|
        return float(np.linalg.norm(self.horizontal, ord=2))

    @property
    def inverse_lipschitz(self) -> Optional[float]:
        if self.inverse is None:
            return None
        return float(np.linalg.norm(np.linalg.inv(self.horizontal), ord=2))

    def params(self) -> Dict[str, Any]:
        return {"horizontal": self.horizontal.tolist()}


class Shear(Automorphism):
    """
    Heisenberg shear ``X_1 -> X_1 + a Y_1``: ``(x, y, z) -> (x, y + a x, z)`` on the first pair of coordinates.
    """

    kind = "shear"

    def __init__(self, group: GroupDescriptor, amount: float):
        if group.closed_form != "heisenberg":
            raise ValueError(f"Shears are defined on Heisenberg groups, got {group.name}")
        k = group.horizontal_dim // 2
        horizontal = np.eye(group.horizontal_dim)
        horizontal[0, k] = amount
        self.amount = float(amount)
        super(Shear, self).__init__(group, horizontal)

    def params(self) -> Dict[str, Any]:
        return {"a": self.amount}


class ComposedMap(GroupMap):
    """
    ``outer o inner``.
    """

    kind = "composition"

    def __init__(self, outer: GroupMap, inner: GroupMap):
        if outer.source != inner.target:
            raise ValueError(f"Cannot compose a map from {outer.source.name} after a map into {inner.target.name}")
        super(ComposedMap, self).__init__(inner.source, outer.target)
        self.outer = outer
        self.inner = inner

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.outer.evaluate(self.inner.evaluate(points))

    @property
    def inverse(self) -> Optional[GroupMap]:
        if self.outer.inverse is None or self.inner.inverse is None:
            return None
        return ComposedMap(self.inner.inverse, self.outer.inverse)

    @property
    def lipschitz(self) -> Optional[float]:
        if self.outer.lipschitz is None or self.inner.lipschitz is None:
            return None
        return self.outer.lipschitz * self.inner.lipschitz

    @property
    def inverse_lipschitz(self) -> Optional[float]:
        if self.outer.inverse_lipschitz is None or self.inner.inverse_lipschitz is None:
            return None
        return self.outer.inverse_lipschitz * self.inner.inverse_lipschitz

    def image_ball(self, ball: CcBall) -> Optional[CcBall]:
        image = self.inner.image_ball(ball)
        return None if image is None else self.outer.image_ball(image)

    def describe(self) -> Dict[str, Any]:
        description = super(ComposedMap, self).describe()
        description["children"] = [self.outer.describe(), self.inner.describe()]
        return description


class ConstantMap(GroupMap):
    kind = "constant"

    def __init__(self, source: GroupDescriptor, target: Optional[GroupDescriptor] = None, value: Optional[PointLike] = None):
        super(ConstantMap, self).__init__(source, target)
        self.value = np.zeros(self.target.total_dim) if value is None else self.target.check_point(value)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.value, np.shape(points)[:-1] + self.value.shape).copy()

    @property
    def lipschitz(self) -> float:
        return 0.0

    def params(self) -> Dict[str, Any]:
        return {"value": self.value.tolist()}


class FunctionMap(GroupMap):
    """
    Map given by vectorized callables.

    :param source: the source group
    :param target: the target group
    :param function: the map
    :param inverse_function: its inverse, if known
    :param lipschitz: certified Lipschitz constant, if known
    :param inverse_lipschitz: certified Lipschitz constant of the inverse, if known
    :param name: label used in descriptions
    """

    def __init__(
        self,
        source: GroupDescriptor,
        target: GroupDescriptor,
        function: Callable[[np.ndarray], np.ndarray],
        inverse_function: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        lipschitz: Optional[float] = None,
        inverse_lipschitz: Optional[float] = None,
        name: str = "function",
    ):
        super(FunctionMap, self).__init__(source, target)
        self.function = function
        self.inverse_function = inverse_function
        self._lipschitz = lipschitz
        self._inverse_lipschitz = inverse_lipschitz
        self.kind = name

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.function(points), dtype=np.float64)

    @property
    def inverse(self) -> Optional[GroupMap]:
        if self.inverse_function is None:
            return None
        return FunctionMap(
            self.target,
            self.source,
            self.inverse_function,
            self.function,
            self._inverse_lipschitz,
            self._lipschitz,
            name=f"{self.kind}^-1",
        )

    @property
    def lipschitz(self) -> Optional[float]:
        return self._lipschitz

    @property
    def inverse_lipschitz(self) -> Optional[float]:
        return self._inverse_lipschitz


class RadialSquash(GroupMap):
    """
    ``x -> max(|x| - a, 0) x / |x|`` on a Euclidean space: the ball ``|x| < a`` collapses to the origin.
    Not a homeomorphism; it has finite distortion (the differential vanishes where the Jacobian does).
    """

    kind = "radial_squash"

    def __init__(self, group: GroupDescriptor, radius: float):
        if not group.is_abelian:
            raise ValueError(f"The radial squash is defined on Euclidean spaces, got {group.name}")
        if not radius > 0:
            raise ValueError(f"Squash radius must be positive, got {radius}")
        super(RadialSquash, self).__init__(group)
        self.radius = float(radius)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        norms = np.linalg.norm(points, axis=-1, keepdims=True)
        scale = np.maximum(norms - self.radius, 0.0) / np.where(norms > 0, norms, 1.0)
        return points * scale

    @property
    def lipschitz(self) -> float:
        return 1.0

    def params(self) -> Dict[str, Any]:
        return {"a": self.radius}


class Projection(GroupMap):
    """
    ``(x_1, x_2, ...) -> (x_1, 0, ...)`` on a Euclidean space: Jacobian zero everywhere, differential nonzero.
    The map without finite distortion used to exercise the failing branch.
    """

    kind = "projection"

    def __init__(self, group: GroupDescriptor):
        if not group.is_abelian or group.total_dim < 2:
            raise ValueError(f"The projection is defined on Euclidean spaces of dimension >= 2, got {group.name}")
        super(Projection, self).__init__(group)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        result = np.zeros(np.shape(points))
        result[..., 0] = np.asarray(points)[..., 0]
        return result

    @property
    def lipschitz(self) -> float:
        return 1.0
