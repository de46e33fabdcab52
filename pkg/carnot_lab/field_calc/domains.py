import threading
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from carnot_lab.carnot_core.groups import GroupDescriptor
from carnot_lab.carnot_core.measure import Region
from carnot_lab.cc_metric.balls import CcBall, ball_bounding_box, ball_contains, ball_sample, make_ball
from carnot_lab.cc_metric.distance import box_norm
from carnot_lab.common.running_mean_std import RunningMeanStd
from carnot_lab.common.type_aliases import MonteCarloEstimate, PointLike, Quadrature
from carnot_lab.common.utils import get_rng


class Domain(object):
    """
    Bounded open subset of a group with a quadrature rule for the normalized Haar measure.

    Use the constructors :meth:`ball_domain`, :meth:`box_domain` and :meth:`empty`.
    Balls are connected; connectedness of other shapes is the caller's responsibility.

    :param group: the ambient group
    :param kind: "ball", "box" or "empty"
    :param ball: the ball (kind "ball")
    :param low: lower corner (kind "box")
    :param high: upper corner (kind "box")
    :param n_samples: number of Monte Carlo points
    :param seed: seed of the Monte Carlo points
    :param quadrature: "monte_carlo" or "grid" (tensor grid of cell centers, low dimension only)
    :param resolution: points per axis of the tensor grid
    """

    def __init__(
        self,
        group: GroupDescriptor,
        kind: str,
        ball: Optional[CcBall] = None,
        low: Optional[PointLike] = None,
        high: Optional[PointLike] = None,
        n_samples: int = 10**5,
        seed: int = 0,
        quadrature: str = "monte_carlo",
        resolution: int = 32,
    ):
        if kind not in ("ball", "box", "empty"):
            raise ValueError(f"Unknown domain kind {kind!r}")
        if n_samples < 1:
            raise ValueError(f"n_samples must be positive, got {n_samples}")
        self.group = group
        self.kind = kind
        self.ball = ball
        self.quadrature = Quadrature(quadrature)
        self.n_samples = int(n_samples)
        self.seed = int(seed)
        self.resolution = int(resolution)
        if kind == "ball":
            self.low, self.high = ball_bounding_box(group, ball.center, ball.radius)
        elif kind == "box":
            self.low, self.high = group.check_point(low), group.check_point(high)
            if np.any(self.low >= self.high):
                raise ValueError(f"Empty box {self.low} x {self.high}")
        else:
            self.low = self.high = np.zeros(group.total_dim)
        self._samples = None
        self._lock = threading.Lock()

    @classmethod
    def ball_domain(cls, group: GroupDescriptor, center: PointLike, radius: float, **kwargs) -> "Domain":
        return cls(group, "ball", ball=make_ball(group, center, radius), **kwargs)

    @classmethod
    def box_domain(cls, group: GroupDescriptor, low: PointLike, high: PointLike, **kwargs) -> "Domain":
        return cls(group, "box", low=low, high=high, **kwargs)

    @classmethod
    def empty(cls, group: GroupDescriptor) -> "Domain":
        return cls(group, "empty")

    def with_samples(self, n_samples: int, seed: Optional[int] = None) -> "Domain":
        """
        Same set, another quadrature size (and seed).
        """
        return Domain(
            self.group,
            self.kind,
            ball=self.ball,
            low=None if self.kind != "box" else self.low,
            high=None if self.kind != "box" else self.high,
            n_samples=n_samples,
            seed=self.seed if seed is None else seed,
            quadrature=self.quadrature.value,
            resolution=self.resolution,
        )

    @property
    def is_empty(self) -> bool:
        return self.kind == "empty"

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = self.group.check_point(points)
        if self.kind == "ball":
            return ball_contains(self.group, self.ball, points)
        if self.kind == "box":
            return np.all((points > self.low) & (points < self.high), axis=-1)
        return np.zeros(points.shape[:-1], dtype=bool)

    @property
    def region(self) -> Region:
        return Region(self.contains, self.low, self.high, name=self.kind)

    @property
    def measure(self) -> float:
        """
        Normalized Haar measure (exact for balls and boxes).
        """
        if self.kind == "ball":
            return float(self.ball.radius**self.group.homogeneous_dim)
        if self.kind == "box":
            return float(self.group.measure_norm * np.prod(self.high - self.low))
        return 0.0

    @property
    def diameter(self) -> float:
        if self.kind == "ball":
            return 2 * self.ball.radius
        if self.kind == "box":
            return float(box_norm(self.group, self.high - self.low))
        return 0.0

    @property
    def default_step(self) -> float:
        return 1e-4 * self.diameter if self.diameter > 0 else 1e-4

    def _compute_samples(self) -> Tuple[np.ndarray, np.ndarray]:
        n_total = self.group.total_dim
        if self.is_empty:
            return np.zeros((0, n_total)), np.zeros(0)
        if self.quadrature == Quadrature.GRID:
            axes = [
                low + (np.arange(self.resolution) + 0.5) * (high - low) / self.resolution
                for low, high in zip(self.low, self.high)
            ]
            grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n_total)
            cell = self.group.measure_norm * np.prod((self.high - self.low) / self.resolution)
            points = grid[self.contains(grid)]
            return points, np.full(points.shape[0], cell)
        if self.kind == "ball":
            points = ball_sample(self.group, self.ball, self.n_samples, seed=self.seed)
        else:
            points = get_rng(self.seed).uniform(self.low, self.high, size=(self.n_samples, n_total))
        return points, np.full(self.n_samples, self.measure / self.n_samples)

    def samples(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Quadrature points and weights (computed once).

        :return: points of shape (M, N) and weights of shape (M,) summing to the measure
            (up to the grid discretization)
        """
        with self._lock:
            if self._samples is None:
                self._samples = self._compute_samples()
            return self._samples

    @property
    def points(self) -> np.ndarray:
        return self.samples()[0]

    def integrate(self, values: np.ndarray) -> MonteCarloEstimate:
        """
        Integral of a function given by its values at the quadrature points.

        :param values: array of shape (M,)
        :return: the integral and its standard error (0 for the tensor grid)
        """
        points, weights = self.samples()
        values = np.asarray(values, dtype=np.float64)
        if values.shape != weights.shape:
            raise ValueError(f"Expected {weights.shape[0]} values, got shape {values.shape}")
        if weights.size == 0:
            return MonteCarloEstimate(0.0, 0.0, 0)
        if self.quadrature == Quadrature.GRID:
            return MonteCarloEstimate(float(np.sum(weights * values)), 0.0, weights.size)
        statistics = RunningMeanStd()
        statistics.update(values)
        return MonteCarloEstimate(
            value=float(self.measure * statistics.mean),
            standard_error=float(self.measure * statistics.standard_error),
            n_samples=weights.size,
        )

    def sub_balls(
        self, n_balls: int = 5, radius_range: Tuple[float, float] = (0.1, 0.3), seed: int = 0, n_samples: int = 2048
    ) -> List["Domain"]:
        """
        Seeded balls ``B(x_i, r_i)`` contained in the domain.

        :param n_balls: number of balls
        :param radius_range: range of the radii, relative to the domain radius for balls
        :param seed: random seed
        :param n_samples: quadrature size of each ball
        :return: the balls as domains
        """
        if self.kind != "ball":
            raise ValueError("Sub-balls are only drawn inside ball domains")
        rng = get_rng(seed, 1)
        radius = self.ball.radius
        balls = []
        for index in range(n_balls):
            sub_radius = rng.uniform(*radius_range) * radius
            inner = make_ball(self.group, self.ball.center, radius - sub_radius)
            # d(c, x) + r <= R keeps B(x, r) inside B(c, R)
            center = ball_sample(self.group, inner, 1, seed=seed * 1000 + index + 1)[0]
            balls.append(
                Domain.ball_domain(self.group, center, sub_radius, n_samples=n_samples, seed=self.seed + index + 1)
            )
        return balls

    def describe(self) -> Dict[str, Any]:
        description = {"kind": self.kind, "group": self.group.name, "n_samples": self.n_samples, "seed": self.seed}
        if self.kind == "ball":
            description.update(center=self.ball.center.tolist(), radius=self.ball.radius)
        elif self.kind == "box":
            description.update(low=self.low.tolist(), high=self.high.tolist())
        return description
