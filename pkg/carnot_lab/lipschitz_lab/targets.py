"""
Metric spaces test functions live on, and the 1-Lipschitz test function wrapper.
"""
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from carnot_lab.carnot_core.groups import GroupDescriptor, euclidean
from carnot_lab.cc_metric.distance import distance
from carnot_lab.common.type_aliases import GradientEstimate, PointLike
from carnot_lab.common.utils import get_rng
from carnot_lab.field_calc.fields import DistanceField, FunctionField, ScalarField
from carnot_lab.field_calc.stencil import StencilSample


class MetricTarget(ABC):
    """
    A metric space ``(Y, d)``. Points are arrays of shape (..., dim).

    :param name: name used in descriptions
    """

    def __init__(self, name: str):
        super(MetricTarget, self).__init__()
        self.name = name

    @property
    def group(self) -> Optional[GroupDescriptor]:
        """
        The Carnot group structure of the space, None for spaces without one.
        """
        return None

    @property
    @abstractmethod
    def dim(self) -> int:
        """
        Length of the last axis of a point.
        """

    @abstractmethod
    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """
        :param a: point(s)
        :param b: point(s), broadcast against ``a``
        :return: the distance(s)
        """

    @abstractmethod
    def sample(self, n: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
        """
        Random points of a bounded part of the space, used to build nets and to probe Lipschitz bounds.

        :param n: number of points
        :param seed: random seed
        :param scale: size of the sampled region (ignored by finite spaces)
        :return: array of shape (n, dim)
        """

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name}


class CarnotTarget(MetricTarget):
    """
    A Carnot group with its Carnot-Caratheodory distance.
    """

    def __init__(self, group: GroupDescriptor):
        super(CarnotTarget, self).__init__(group.name)
        self._group = group

    @property
    def group(self) -> GroupDescriptor:
        return self._group

    @property
    def dim(self) -> int:
        return self._group.total_dim

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.asarray(distance(self._group, a, b))

    def sample(self, n: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
        # the box of box_norm radius ``scale``
        half = scale**self._group.degrees
        return get_rng(seed).uniform(-half, half, size=(n, self.dim))


class EuclideanTarget(CarnotTarget):
    def __init__(self, dim: int):
        super(EuclideanTarget, self).__init__(euclidean(dim))


class FiniteTarget(MetricTarget):
    """
    Finite metric space ``{0, ..., m - 1}`` given by its distance matrix.
    A point is stored as its index in a trailing axis of length 1.

    :param distances: the (m, m) distance matrix
    :param name: name of the space
    :param atol: tolerance of the metric axioms check
    """

    def __init__(self, distances: np.ndarray, name: str = "finite", atol: float = 1e-12):
        super(FiniteTarget, self).__init__(name)
        distances = np.array(distances, dtype=np.float64)
        self.distances = distances
        self.distances.setflags(write=False)
        self.validate(atol)

    @property
    def size(self) -> int:
        return self.distances.shape[0]

    @property
    def dim(self) -> int:
        return 1

    def validate(self, atol: float = 1e-12) -> None:
        """
        Check symmetry, nonnegativity, zero diagonal and the triangle inequality on all triples.
        """
        d = self.distances
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"Distance matrix must be square, got shape {d.shape}")
        if np.any(d < -atol):
            raise ValueError("Distances must be nonnegative")
        if np.max(np.abs(np.diag(d)), initial=0.0) > atol:
            raise ValueError("Distance matrix must have a zero diagonal")
        if np.max(np.abs(d - d.T), initial=0.0) > atol:
            raise ValueError("Distance matrix must be symmetric")
        # d[i, k] <= d[i, j] + d[j, k] for every j
        excess = d[:, None, :] - d[:, :, None] - d[None, :, :]
        if np.max(excess, initial=0.0) > atol:
            i, j, k = np.unravel_index(np.argmax(excess), excess.shape)
            raise ValueError(f"Triangle inequality fails for points ({i}, {j}, {k})")

    def indices(self, points: np.ndarray) -> np.ndarray:
        indices = np.asarray(points)[..., 0].astype(np.int64)
        if np.any((indices < 0) | (indices >= self.size)):
            raise ValueError(f"Point indices must be between 0 and {self.size - 1}")
        return indices

    def points(self) -> np.ndarray:
        return np.arange(self.size, dtype=np.float64)[:, None]

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.distances[self.indices(a), self.indices(b)]

    def sample(self, n: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
        return get_rng(seed).integers(0, self.size, size=n).astype(np.float64)[:, None]

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "size": self.size}


def as_target(space) -> MetricTarget:
    """
    Accept a group wherever a metric target is expected.
    """
    if isinstance(space, MetricTarget):
        return space
    if isinstance(space, GroupDescriptor):
        return CarnotTarget(space)
    raise TypeError(f"Expected a MetricTarget or a GroupDescriptor, got {type(space).__name__}")


class LipTestFunction(ScalarField):
    """
    A real function on a metric target with a certified Lipschitz bound.

    :param field: the evaluation rule, a construction tree
    :param lipschitz: certified Lipschitz constant
    :param provenance: how the function was built ("distance", "bump", "mcshane", ...)
    :param support_gap: certified lower bound of ``dist(spt u, Y \\ V)`` for the open set ``V`` the function
        was built for, None when no support condition is claimed
    :param bound: certified bound of ``|u|`` where the function is used, None when unknown
    :param params: parameters reported by :meth:`describe`
    """

    kind = "lip"

    def __init__(
        self,
        field: ScalarField,
        lipschitz: float = 1.0,
        provenance: str = "custom",
        support_gap: Optional[float] = None,
        bound: Optional[float] = None,
        params: Optional[Dict[str, Any]] = None,
    ):
        super(LipTestFunction, self).__init__(field.group)
        if not lipschitz >= 0:
            raise ValueError(f"Lipschitz bound must be nonnegative, got {lipschitz}")
        if support_gap is not None and not support_gap > 0:
            raise ValueError(f"A claimed support gap must be positive, got {support_gap}")
        self.field = field
        self.lipschitz = float(lipschitz)
        self.provenance = provenance
        self.support_gap = None if support_gap is None else float(support_gap)
        self.bound = None if bound is None else float(bound)
        self._params = params or {}

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self.field.evaluate(points)

    def value_and_gradient(self, sample: StencilSample) -> Tuple[np.ndarray, GradientEstimate]:
        return self.field.value_and_gradient(sample)

    def params(self) -> Dict[str, Any]:
        return dict(self._params)

    def children(self) -> List[ScalarField]:
        return [self.field]

    def describe(self) -> Dict[str, Any]:
        return {
            "provenance": self.provenance,
            "lipschitz": self.lipschitz,
            "support_gap": self.support_gap,
            "bound": self.bound,
            "params": self.params(),
            "tree": self.field.describe(),
        }

    def __repr__(self) -> str:
        return f"LipTestFunction({self.provenance}, L={self.lipschitz:g})"


def point_at(target: MetricTarget, point: PointLike) -> np.ndarray:
    point = np.asarray(point, dtype=np.float64)
    if point.shape[-1:] != (target.dim,):
        raise ValueError(f"Expected points with {target.dim} coordinates, got shape {point.shape}")
    return point


def distance_field(target: MetricTarget, center: PointLike) -> ScalarField:
    """
    ``d(., z)`` as a field on the target.
    """
    center = point_at(target, center)
    if target.group is not None:
        return DistanceField(target.group, center)
    return FunctionField(
        lambda points: target.distance(points, center), kind="distance", params={"center": center.tolist()}
    )
