"""
Open subsets of a metric target.

Every set carries a computable inner distance ``rho_V``: a 1-Lipschitz function with
``rho_V(y) <= dist(y, Y \\ V)`` and ``V = {rho_V > 0}``. It is exact for balls of geodesic targets
and for subsets of finite targets, and a certified minorant for unions and images. Support gaps of
test functions are certified through it.
"""
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from carnot_lab.cc_metric.balls import ball_sample, make_ball
from carnot_lab.common.type_aliases import PointLike, SetKind
from carnot_lab.common.utils import get_rng
from carnot_lab.field_calc.domains import Domain
from carnot_lab.field_calc.fields import ConstantField, DistanceField, FunctionField, PostComposed, ScalarField, maximum
from carnot_lab.lipschitz_lab.targets import FiniteTarget, MetricTarget, as_target, distance_field, point_at


class OpenSetSpec(object):
    """
    An open set ``V`` of a metric target. Use the constructors :meth:`empty`, :meth:`whole`, :meth:`ball`,
    :meth:`union`, :meth:`image`, :meth:`subset` and :meth:`inner`.

    :param space: the ambient target
    :param kind: the shape of the set
    :param center: center (balls)
    :param radius: radius (balls)
    :param parts: the sets of a union
    :param phi: the homeomorphism of an image set
    :param source_ball: the source ball ``U`` of an image set ``phi(U)``
    :param indices: the points of a subset of a finite target
    :param parent: the set an inner set is taken in
    :param delta: the depth of an inner set
    """

    def __init__(
        self,
        space: MetricTarget,
        kind: SetKind,
        center: Optional[np.ndarray] = None,
        radius: Optional[float] = None,
        parts: Optional[List["OpenSetSpec"]] = None,
        phi=None,
        source_ball=None,
        indices: Optional[np.ndarray] = None,
        parent: Optional["OpenSetSpec"] = None,
        delta: Optional[float] = None,
    ):
        self.space = space
        self.kind = kind
        self.center = center
        self.radius = radius
        self.parts = parts or []
        self.phi = phi
        self.source_ball = source_ball
        self.indices = indices
        self.parent = parent
        self.delta = delta
        self._field = None

    # Constructors
    # ----------------------------------------

    @classmethod
    def empty(cls, space) -> "OpenSetSpec":
        return cls(as_target(space), SetKind.EMPTY)

    @classmethod
    def whole(cls, space) -> "OpenSetSpec":
        return cls(as_target(space), SetKind.WHOLE)

    @classmethod
    def ball(cls, space, center: PointLike, radius: float) -> "OpenSetSpec":
        space = as_target(space)
        if not radius > 0:
            raise ValueError(f"Ball radius must be positive, got {radius}")
        center = point_at(space, center)
        if center.ndim != 1:
            raise ValueError("A ball has a single center")
        return cls(space, SetKind.BALL, center=center.copy(), radius=float(radius))

    @classmethod
    def union(cls, parts: Sequence["OpenSetSpec"]) -> "OpenSetSpec":
        parts = [part for part in parts if part.kind != SetKind.EMPTY]
        if len(parts) == 0:
            raise ValueError("Union of no set, use OpenSetSpec.empty")
        space = parts[0].space
        if not all(_same_space(part.space, space) for part in parts):
            raise ValueError("The sets of a union must live in the same space")
        if any(part.kind == SetKind.WHOLE for part in parts):
            return cls.whole(space)
        if len(parts) == 1:
            return parts[0]
        return cls(space, SetKind.UNION, parts=list(parts))

    @classmethod
    def image(cls, phi, center: PointLike, radius: float) -> "OpenSetSpec":
        """
        ``phi(B(c, r))`` for a homeomorphism onto the target group.
        When the map sends balls to balls, the image is stored as a ball.

        :param phi: a :class:`carnot_lab.map_calc.maps.GroupMap` with a known inverse and inverse Lipschitz constant
        :param center: center of the source ball
        :param radius: radius of the source ball
        """
        if phi.inverse is None or phi.inverse_lipschitz is None:
            raise ValueError(f"The image of a set needs a homeomorphism with a Lipschitz inverse, {phi.kind} is not one")
        source_ball = make_ball(phi.source, center, radius)
        image = phi.image_ball(source_ball)
        if image is not None:
            return cls.ball(phi.target, image.center, image.radius)
        return cls(as_target(phi.target), SetKind.IMAGE, phi=phi, source_ball=source_ball)

    @classmethod
    def subset(cls, space: FiniteTarget, indices: Sequence[int]) -> "OpenSetSpec":
        """
        Any subset of a finite space is open.
        """
        if not isinstance(space, FiniteTarget):
            raise TypeError(f"Subsets are only defined on finite targets, got {type(space).__name__}")
        indices = np.unique(np.asarray(indices, dtype=np.int64))
        if np.any((indices < 0) | (indices >= space.size)):
            raise ValueError(f"Subset indices must be between 0 and {space.size - 1}")
        if len(indices) == 0:
            return cls.empty(space)
        if len(indices) == space.size:
            return cls.whole(space)
        return cls(space, SetKind.SUBSET, indices=indices)

    def inner(self, delta: float) -> "OpenSetSpec":
        """
        ``K_delta = {rho_V > delta}``, the points deeper than ``delta`` in ``V``.
        Balls of Carnot targets give the concentric ball of radius ``r - delta``.
        """
        if not delta >= 0:
            raise ValueError(f"Depth must be nonnegative, got {delta}")
        if delta == 0 or self.kind in (SetKind.EMPTY, SetKind.WHOLE):
            return self
        if delta >= self.inradius:
            return OpenSetSpec.empty(self.space)
        if self.kind == SetKind.BALL and self.space.group is not None:
            return OpenSetSpec.ball(self.space, self.center, self.radius - delta)
        if self.kind == SetKind.INNER:
            return OpenSetSpec(self.space, SetKind.INNER, parent=self.parent, delta=self.delta + delta)
        return OpenSetSpec(self.space, SetKind.INNER, parent=self, delta=float(delta))

    # Inner distance
    # ----------------------------------------

    def _build_field(self) -> ScalarField:
        if self.kind == SetKind.EMPTY:
            return ConstantField(0.0, self.space.group)
        if self.kind == SetKind.WHOLE:
            return ConstantField(np.inf, self.space.group)
        if self.kind == SetKind.BALL:
            radius = self.radius
            return PostComposed(
                distance_field(self.space, self.center),
                lambda t: radius - t,
                lambda t: np.full(np.shape(t), -1.0),
                kind="inner_distance",
                params={"radius": radius},
            )
        if self.kind == SetKind.UNION:
            return maximum([part.inner_distance_field() for part in self.parts])
        if self.kind == SetKind.IMAGE:
            phi, ball = self.phi, self.source_ball
            inverse_map = phi.inverse
            factor = 1.0 / phi.inverse_lipschitz
            source_distance = DistanceField(phi.source, ball.center)
            # d(c, phi^-1 z) >= r off the image, and phi^-1 is L-Lipschitz
            return FunctionField(
                lambda points: factor * (ball.radius - source_distance.evaluate(inverse_map(points))),
                group=self.space.group,
                kind="image_inner_distance",
                params={"center": ball.center.tolist(), "radius": ball.radius, "factor": factor},
            )
        if self.kind == SetKind.SUBSET:
            space, inside = self.space, self.indices
            outside = np.setdiff1d(np.arange(space.size), inside)
            exterior = np.min(space.distances[:, outside], axis=1)
            return FunctionField(
                lambda points: exterior[space.indices(points)],
                kind="subset_inner_distance",
                params={"indices": inside.tolist()},
            )
        delta = self.delta
        return PostComposed(
            self.parent.inner_distance_field(),
            lambda t: t - delta,
            lambda t: np.ones(np.shape(t)),
            kind="shift",
            params={"delta": delta},
        )

    def inner_distance_field(self) -> ScalarField:
        """
        ``rho_V`` as a field (built once).
        """
        if self._field is None:
            self._field = self._build_field()
        return self._field

    def inner_distance(self, points: np.ndarray) -> np.ndarray:
        return self.inner_distance_field().evaluate(point_at(self.space, points))

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.inner_distance(points) > 0

    @property
    def inradius(self) -> float:
        """
        ``sup rho_V``: the depth of the deepest point.
        """
        if self.kind == SetKind.EMPTY:
            return 0.0
        if self.kind == SetKind.WHOLE:
            return float("inf")
        if self.kind == SetKind.BALL:
            return self.radius
        if self.kind == SetKind.UNION:
            return max(part.inradius for part in self.parts)
        if self.kind == SetKind.IMAGE:
            return self.source_ball.radius / self.phi.inverse_lipschitz
        if self.kind == SetKind.SUBSET:
            return float(np.max(self.inner_distance(self.space.points()[self.indices])))
        return max(self.parent.inradius - self.delta, 0.0)

    def enclosing_ball(self) -> Optional[Tuple[np.ndarray, float]]:
        """
        A closed ball containing the set, None for the empty set and the whole space.

        :return: center and radius
        """
        if self.kind == SetKind.BALL:
            return self.center, self.radius
        if self.kind == SetKind.UNION:
            balls = [part.enclosing_ball() for part in self.parts]
            center = balls[0][0]
            return center, max(float(self.space.distance(center, other)) + radius for other, radius in balls)
        if self.kind == SetKind.IMAGE:
            if self.phi.lipschitz is None:
                return None
            return self.phi(self.source_ball.center), self.phi.lipschitz * self.source_ball.radius
        if self.kind == SetKind.SUBSET:
            center = self.space.points()[self.indices[0]]
            return center, float(np.max(self.space.distances[self.indices[0], self.indices]))
        if self.kind == SetKind.INNER:
            return self.parent.enclosing_ball()
        return None

    @property
    def is_bounded(self) -> bool:
        return self.kind == SetKind.EMPTY or self.enclosing_ball() is not None

    # Sampling and geometry
    # ----------------------------------------

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """
        Points of the set (uniform for balls, up to ``n`` points for inner sets).
        """
        space = self.space
        if self.kind == SetKind.EMPTY or n == 0:
            return np.zeros((0, space.dim))
        if self.kind == SetKind.WHOLE:
            return space.sample(n, seed=seed)
        if self.kind == SetKind.BALL:
            if space.group is not None:
                return ball_sample(space.group, make_ball(space.group, self.center, self.radius), n, seed=seed)
            points = space.points()
            inside = points[self.contains(points)]
            return inside[get_rng(seed).integers(0, len(inside), size=n)]
        if self.kind == SetKind.UNION:
            # proportional to radius ** nu for balls, evenly otherwise
            weights = np.array([_weight(part) for part in self.parts])
            counts = np.floor(n * weights / np.sum(weights)).astype(int)
            counts[0] += n - np.sum(counts)
            chunks = [
                part.sample(count, seed=seed * 97 + index) for index, (part, count) in enumerate(zip(self.parts, counts))
            ]
            return np.concatenate(chunks)[:n]
        if self.kind == SetKind.IMAGE:
            phi = self.phi
            return phi(ball_sample(phi.source, self.source_ball, n, seed=seed))
        if self.kind == SetKind.SUBSET:
            return space.points()[self.indices[get_rng(seed).integers(0, len(self.indices), size=n)]]
        candidates = self.parent.sample(4 * n, seed=seed)
        return candidates[self.contains(candidates)][:n]

    def separation(self, other: "OpenSetSpec") -> float:
        """
        Lower bound of ``dist(V, W)``; negative when the sets may intersect.
        """
        if not _same_space(self.space, other.space):
            raise ValueError("The sets live in different spaces")
        if self.kind == SetKind.EMPTY or other.kind == SetKind.EMPTY:
            return float("inf")
        if self.kind == SetKind.SUBSET and other.kind == SetKind.SUBSET:
            if np.intersect1d(self.indices, other.indices).size > 0:
                return -1.0
            return float(np.min(self.space.distances[np.ix_(self.indices, other.indices)]))
        first, second = self.enclosing_ball(), other.enclosing_ball()
        if first is None or second is None:
            raise ValueError(f"Cannot bound the separation of {self.kind.value} and {other.kind.value} sets")
        return float(self.space.distance(first[0], second[0])) - first[1] - second[1]

    def is_disjoint(self, other: "OpenSetSpec") -> bool:
        return self.separation(other) >= 0

    def as_domain(self, n_samples: int = 2**14, seed: int = 0) -> Optional[Domain]:
        """
        The set as an integration domain, when it is a ball of a group (or empty).
        """
        group = self.space.group
        if group is None:
            return None
        if self.kind == SetKind.EMPTY:
            return Domain.empty(group)
        if self.kind == SetKind.BALL:
            return Domain.ball_domain(group, self.center, self.radius, n_samples=n_samples, seed=seed)
        return None

    def describe(self) -> Dict[str, Any]:
        description = {"kind": self.kind.value, "space": self.space.name}
        if self.kind == SetKind.BALL:
            description.update(center=self.center.tolist(), radius=self.radius)
        elif self.kind == SetKind.UNION:
            description["parts"] = [part.describe() for part in self.parts]
        elif self.kind == SetKind.IMAGE:
            description.update(
                map=self.phi.describe(), center=self.source_ball.center.tolist(), radius=self.source_ball.radius
            )
        elif self.kind == SetKind.SUBSET:
            description["indices"] = self.indices.tolist()
        elif self.kind == SetKind.INNER:
            description.update(parent=self.parent.describe(), delta=self.delta)
        return description

    def __repr__(self) -> str:
        return f"OpenSetSpec({self.describe()})"


def _weight(part: OpenSetSpec) -> float:
    if part.kind == SetKind.BALL and part.space.group is not None:
        return part.radius**part.space.group.homogeneous_dim
    return 1.0


def _same_space(first: MetricTarget, second: MetricTarget) -> bool:
    if first is second:
        return True
    return first.group is not None and first.group == second.group
