"""Common aliases for type hints"""

from enum import Enum
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np

# Points of a group are stored as arrays of exponential coordinates, shape (..., N)
GroupPoint = np.ndarray
PointLike = Union[np.ndarray, List[float], Tuple[float, ...]]


class MonteCarloEstimate(NamedTuple):
    value: float
    standard_error: float
    n_samples: int


class DerivativeEstimate(NamedTuple):
    # central difference at h, at h / 2 and the Richardson extrapolation of the pair
    value: np.ndarray
    refined: np.ndarray
    extrapolated: np.ndarray
    error: np.ndarray
    one_sided: np.ndarray


class GradientEstimate(NamedTuple):
    value: np.ndarray
    error: np.ndarray
    one_sided: np.ndarray


class Seminorm(NamedTuple):
    q: float
    value: float
    error: float


class DistanceBracket(NamedTuple):
    lower: float
    upper: float
    method: str
    residual: float = 0.0


class CurveSamples(NamedTuple):
    times: np.ndarray
    points: np.ndarray


class AclCheck(NamedTuple):
    coarse_length: float
    fine_length: float
    relative_change: float


class SpatialJacobian(NamedTuple):
    value: float
    radii: np.ndarray
    ratios: np.ndarray
    standard_errors: np.ndarray
    det: Optional[float]
    relative_gap: Optional[float]


class SetDerivative(NamedTuple):
    value: float
    radii: np.ndarray
    ratios: np.ndarray


class LipschitzReport(NamedTuple):
    bound: float
    max_quotient: float
    n_pairs: int
    n_violations: int
    worst_pair: Optional[Tuple[int, int]]
    passed: bool


class SetKind(Enum):
    EMPTY = "empty"
    WHOLE = "whole"
    BALL = "ball"
    UNION = "union"
    IMAGE = "image"
    SUBSET = "subset"
    INNER = "inner"


class Quadrature(Enum):
    MONTE_CARLO = "monte_carlo"
    GRID = "grid"
