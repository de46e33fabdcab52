"""
Families of admissible test functions, the search space of the set-function estimators.
"""
import warnings
from typing import Any, Dict, List, Optional

import numpy as np

from carnot_lab.common.logger import Logger
from carnot_lab.common.save_util import to_json_compatible
from carnot_lab.common.type_aliases import SetKind
from carnot_lab.common.utils import get_rng
from carnot_lab.lipschitz_lab.targets import FiniteTarget, LipTestFunction, MetricTarget, as_target, point_at
from carnot_lab.lipschitz_lab.test_functions import (
    LipschitzViolationError,
    UnboundedSetError,
    annulus_cutoff,
    coordinate_function,
    cutoff_test_function,
    distance_function,
    mcshane_extend,
    refine,
    shaved_bump,
    symmetrize,
)

MAX_NET_SIZE = 64
MAX_EXTENSION_NET_SIZE = 16
# shaving depths and annulus widths, relative to the inradius of the set
DEPTH_FRACTIONS = (1 / 256, 1 / 64, 1 / 16, 1 / 4)


def farthest_point_net(target: MetricTarget, candidates: np.ndarray, size: int) -> np.ndarray:
    """
    Greedy farthest-point subset of ``candidates``.

    :param target: the metric space
    :param candidates: shape (m, dim)
    :param size: number of points kept
    :return: shape (min(size, m), dim), starting with the first candidate
    """
    candidates = point_at(target, candidates)
    size = min(size, len(candidates))
    if size == 0:
        return candidates[:0]
    chosen = [0]
    gaps = np.asarray(target.distance(candidates, candidates[0]), dtype=np.float64)
    for _ in range(size - 1):
        index = int(np.argmax(gaps))
        if gaps[index] <= 0:
            break
        chosen.append(index)
        gaps = np.minimum(gaps, target.distance(candidates, candidates[index]))
    return candidates[chosen]


def _sign_extensions(target: MetricTarget, net: np.ndarray, count: int, seed: int) -> List[LipTestFunction]:
    """
    McShane extensions of random ``+-s`` values on a net, ``s`` halved until the values are 1-Lipschitz.
    """
    if len(net) < 2 or count <= 0:
        return []
    distances = target.distance(net[:, None, :], net[None, :, :])
    level = float(np.median(distances[np.triu_indices(len(net), 1)])) / 2
    rng = get_rng(seed, 3)
    members = []
    for _ in range(count):
        signs = rng.choice([-1.0, 1.0], size=len(net))
        scale = level
        for _ in range(60):
            try:
                members.append(mcshane_extend(target, net, scale * signs, 1.0))
                break
            except LipschitzViolationError:
                scale /= 2
    return members


def _unconstrained(target: MetricTarget, budget: int, seed: int, net_points: Optional[np.ndarray], scale: float):
    members = []
    group = target.group
    rng = get_rng(seed, 2)
    if group is not None:
        members.append(coordinate_function(target, 0))
        basis = np.eye(group.horizontal_dim)
        for sign in (-1.0, 1.0):
            for index in range(group.horizontal_dim):
                if sign > 0 and index == 0:
                    continue
                members.append(coordinate_function(target, sign * basis[index]))
        for direction in rng.normal(size=(max(0, budget // 16), group.horizontal_dim)):
            members.append(coordinate_function(target, direction / np.linalg.norm(direction)))
    if net_points is None:
        net_points = target.points() if isinstance(target, FiniteTarget) else target.sample(4 * MAX_NET_SIZE, seed, scale)
    net = farthest_point_net(target, net_points, min(MAX_NET_SIZE, max(1, budget // 4)))
    distances = [distance_function(target, point) for point in net]
    members.extend(distances)
    members.extend(_sign_extensions(target, net[:MAX_EXTENSION_NET_SIZE], max(0, budget // 8), seed))
    if len(net) >= 2:
        spread = float(np.median(target.distance(net[0], net[1:])))
        if spread > 0:
            for u in distances[: max(0, budget // 8)]:
                members.append(symmetrize(cutoff_test_function(u, spread), spread))
    return members


def _constrained(
    target: MetricTarget,
    V,
    budget: int,
    seed: int,
    net_points: Optional[np.ndarray],
    scale: float,
    logger: Optional[Logger] = None,
):
    inradius = V.inradius
    if V.kind == SetKind.EMPTY or not inradius > 0:
        return []
    members = [shaved_bump(target, V, fraction * inradius) for fraction in DEPTH_FRACTIONS]
    # unconstrained members, refined below delta and cut in the annulus K_delta \ K_2delta
    dropped = []
    for fraction in DEPTH_FRACTIONS[:2]:
        delta = fraction * inradius
        for u in _unconstrained(target, max(8, budget // 4), seed, net_points, scale):
            try:
                members.append(annulus_cutoff(refine(u, V, delta), V, delta))
            except UnboundedSetError as error:
                dropped.append(u.provenance)
                if logger is not None:
                    logger.debug(f"Dropped a family member for {V!r}: {error}")
    if dropped and logger is None:
        warnings.warn(f"Dropped {len(dropped)} members ({', '.join(sorted(set(dropped)))}) with no bound on {V!r}")
    # bumps of balls B(y, rho_V(y)) inside V
    centers = V.sample(max(1, budget // 8), seed=seed)
    depths = V.inner_distance(centers)
    # Avoid circular import
    from carnot_lab.operator_lab.open_sets import OpenSetSpec

    for center, depth in zip(centers, depths):
        if depth > 0:
            members.append(shaved_bump(target, OpenSetSpec.ball(target, center, depth), depth / 8))
    return members


def family_generate(
    space,
    V=None,
    budget: int = 256,
    seed: int = 0,
    net_points: Optional[np.ndarray] = None,
    scale: float = 1.0,
    logger: Optional[Logger] = None,
) -> List[LipTestFunction]:
    """
    A family of 1-Lipschitz test functions, in priority order and cut to ``budget``.

    Without a set (or for ``V = Y``, where ``dist(spt u, Y \\ V) = +inf``) the members carry no support
    condition: the first horizontal coordinate, the other signed coordinates and random horizontal
    directions, distance functions to a farthest-point net, McShane extensions of random signs on the net
    and folded cutoffs of distance functions. For a set ``V`` every member has a positive support gap:
    shaved bumps of ``V``, refined and annulus-cut unconstrained members, and bumps of balls inside ``V``.

    :param space: the target
    :param V: an :class:`carnot_lab.operator_lab.open_sets.OpenSetSpec`, None for the whole space
    :param budget: largest family size
    :param seed: random seed
    :param net_points: candidates of the nets (default: samples of the target at ``scale``, or of ``V``)
    :param scale: size of the sampled region for the nets
    :param logger: receives a debug line for each member dropped on an unbounded set (a warning is issued otherwise)
    :return: the members
    """
    if budget < 0:
        raise ValueError(f"Family budget must be nonnegative, got {budget}")
    if budget == 0:
        return []
    target = as_target(space)
    if V is None or V.kind == SetKind.WHOLE:
        members = _unconstrained(target, budget, seed, net_points, scale)
    else:
        if net_points is None:
            net_points = V.sample(4 * MAX_NET_SIZE, seed=seed)
        members = _constrained(target, V, budget, seed, net_points, scale, logger=logger)
    return members[:budget]


def describe_family(family: List[LipTestFunction]) -> List[Dict[str, Any]]:
    """
    JSON-compatible provenance of the members.
    """
    return [to_json_compatible(dict(index=index, **member.describe())) for index, member in enumerate(family)]
