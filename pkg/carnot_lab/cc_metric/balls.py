from typing import NamedTuple, Tuple

import numpy as np

from carnot_lab.carnot_core.groups import GroupDescriptor, inverse, multiply
from carnot_lab.carnot_core.measure import Region, translated_box
from carnot_lab.cc_metric.distance import layer_bounds, within_radius
from carnot_lab.common.type_aliases import PointLike
from carnot_lab.common.utils import get_rng


class CcBall(NamedTuple):
    center: np.ndarray
    radius: float


def make_ball(g: GroupDescriptor, center: PointLike, radius: float) -> CcBall:
    if not radius > 0:
        raise ValueError(f"Ball radius must be positive, got {radius}")
    return CcBall(g.check_point(center).copy(), float(radius))


def ball_bounding_box(g: GroupDescriptor, center: PointLike, radius: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Coordinate box containing ``B(center, radius)``: layer ``k`` of ``B(0, r)`` lies within ``B_k r^k``
    (see :func:`carnot_lab.cc_metric.distance.layer_bounds`), then the box is left-translated.

    :param g: the group
    :param center: center of the ball
    :param radius: radius of the ball
    :return: lower and upper corners
    """
    half = layer_bounds(g)[g.degrees - 1] * radius**g.degrees
    return translated_box(g, g.check_point(center), -half, half)


def ball_contains(g: GroupDescriptor, ball: CcBall, points: np.ndarray) -> np.ndarray:
    """
    Membership test, decided by certified distance bounds before any optimizer run
    (see :func:`carnot_lab.cc_metric.distance.within_radius`).
    """
    points = g.check_point(points)
    low, high = ball_bounding_box(g, ball.center, ball.radius)
    inside = np.all((points >= low) & (points <= high), axis=-1)
    result = np.zeros(points.shape[:-1], dtype=bool)
    if np.any(inside):
        result[inside] = within_radius(g, multiply(g, inverse(g, ball.center), points[inside]), ball.radius)
    return result


def ball_region(g: GroupDescriptor, ball: CcBall) -> Region:
    low, high = ball_bounding_box(g, ball.center, ball.radius)
    return Region(lambda points: ball_contains(g, ball, points), low, high, name=f"ball(r={ball.radius:g})")


def unit_ball_region(g: GroupDescriptor) -> Region:
    return ball_region(g, make_ball(g, np.zeros(g.total_dim), 1.0))


def ball_measure(g: GroupDescriptor, ball: CcBall) -> float:
    """
    Normalized measure of a ball, ``r ** nu`` by the normalization and the dilation law.
    """
    return float(ball.radius**g.homogeneous_dim)


def ball_sample(g: GroupDescriptor, ball: CcBall, n: int, seed: int = 0, chunk_size: int = 2**14) -> np.ndarray:
    """
    ``n`` i.i.d. points uniform in the ball for the Haar measure.
    Points of ``B(0, r)`` are drawn by rejection from its coordinate box, then left-translated to the center
    (left translations preserve the Haar measure and map ``B(0, r)`` onto ``B(c, r)``).
    Chunk ``i`` of candidates uses the random stream ``i``.

    :param g: the group
    :param ball: the ball
    :param n: number of points
    :param seed: random seed
    :param chunk_size: candidates drawn per round
    :return: array of shape (n, N)
    """
    if n < 0:
        raise ValueError(f"Expected a nonnegative number of samples, got {n}")
    origin = np.zeros(g.total_dim)
    low, high = ball_bounding_box(g, origin, ball.radius)
    accepted, n_accepted, stream = [], 0, 0
    while n_accepted < n:
        rng = get_rng(seed, stream)
        candidates = rng.uniform(low, high, size=(chunk_size, g.total_dim))
        inside = candidates[within_radius(g, candidates, ball.radius)]
        accepted.append(inside)
        n_accepted += inside.shape[0]
        stream += 1
        if stream > 10**4 and n_accepted == 0:
            raise RuntimeError(f"Rejection sampling of {ball} accepted no point")
    if not accepted:
        return np.zeros((0, g.total_dim))
    return multiply(g, ball.center, np.concatenate(accepted)[:n])
