import math
import threading
from collections import OrderedDict
from typing import Hashable, Optional, Tuple, Union

import numpy as np
from scipy import optimize

from carnot_lab.carnot_core.groups import GroupDescriptor, inverse, multiply
from carnot_lab.common.type_aliases import DistanceBracket, PointLike
from carnot_lab.common.utils import get_rng

# below this ratio the phase is 12 tau up to a relative O(tau ** 2)
_SMALL_TAU = 1e-6
_PHASE_RTOL = 4 * np.finfo(np.float64).eps


class DistanceConvergenceError(RuntimeError):
    """
    Raised when the control optimizer cannot reach the target point.
    The best bracket found so far is kept on the exception.

    :param lower: certified lower bound of the distance
    :param upper: best upper bound found
    :param residual: endpoint error of the best path
    """

    def __init__(self, lower: float, upper: float, residual: float):
        self.lower = lower
        self.upper = upper
        self.residual = residual
        super(DistanceConvergenceError, self).__init__(
            f"Control optimization did not converge (endpoint error {residual:.3g}), distance in [{lower:.6g}, {upper:.6g}]"
        )


class DistanceCache(object):
    """
    Bounded LRU memo of distances keyed on point pairs, safe for concurrent use.

    :param maxsize: maximal number of stored pairs
    """

    def __init__(self, maxsize: int = 2**20):
        self.maxsize = maxsize
        self._data = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def make_key(g: GroupDescriptor, x: np.ndarray, y: np.ndarray) -> Hashable:
        return g.key, np.ascontiguousarray(x, dtype=np.float64).tobytes(), np.ascontiguousarray(y, dtype=np.float64).tobytes()

    def get(self, key: Hashable) -> Optional[float]:
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                self.hits += 1
                return self._data[key]
            self.misses += 1
            return None

    def put(self, key: Hashable, value: float) -> None:
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)

    def clear(self) -> None:
        with self._lock:
            self._data.clear()
            self.hits = 0
            self.misses = 0

    def __len__(self) -> int:
        return len(self._data)


_DEFAULT_CACHE = DistanceCache()


def default_cache() -> DistanceCache:
    return _DEFAULT_CACHE


def box_norm(g: GroupDescriptor, x: PointLike) -> np.ndarray:
    """
    Homogeneous quasi-norm ``max_ij |x_ij| ** (1 / i)``.

    :param g: the group
    :param x: point(s)
    :return: the quasi-norm, homogeneous of degree 1 under dilations
    """
    x = g.check_point(x)
    return np.max(np.abs(x) ** (1.0 / g.degrees), axis=-1)


def layer_bounds(g: GroupDescriptor) -> np.ndarray:
    """
    Constants ``B_k`` with ``|x_k| <= B_k d(0, x) ** k`` for every layer ``k``.
    They follow from integrating the left-invariant frame along a unit-speed horizontal path,
    with ``|[a, b]| <= kappa_ab |a| |b|`` (Frobenius norm of the bracket block).

    :param g: the group (step <= 3)
    :return: array of the ``m`` constants
    """
    if g.closed_form == "heisenberg":
        # the highest point of the unit sphere ends the half-circle geodesic, |z| = 1 / (2 pi)
        return np.array([1.0, 1.0 / (2 * np.pi)])
    bounds = [1.0]
    if g.step >= 2:
        kappa_11 = np.linalg.norm(g.bracket_block(1, 1))
        bounds.append(kappa_11 / 4)
    if g.step >= 3:
        kappa_21 = np.linalg.norm(g.bracket_block(2, 1))
        kappa_12 = np.linalg.norm(g.bracket_block(1, 2))
        bounds.append((0.5 * kappa_21 * bounds[1] + kappa_12 * kappa_11 / 12) / 3)
    if g.step > 3:
        # Avoid circular import
        from carnot_lab.carnot_core.groups import UnsupportedStepError

        raise UnsupportedStepError(g.step)
    return np.array(bounds)


def layer_lower_bound(g: GroupDescriptor, w: PointLike) -> np.ndarray:
    """
    Certified lower bound ``max_k (|w_k| / B_k) ** (1 / k)`` of ``d(0, w)``.
    """
    w = g.check_point(w)
    bounds = layer_bounds(g)
    per_layer = [
        (np.linalg.norm(layer, axis=-1) / bounds[index]) ** (1.0 / (index + 1)) for index, layer in enumerate(g.layers(w))
    ]
    return np.max(np.stack(per_layer, axis=-1), axis=-1)


_PURE_DISTANCES = {}
_PURE_LOCK = threading.Lock()


def pure_direction_distances(g: GroupDescriptor, seed: int = 0) -> np.ndarray:
    """
    Upper bounds of ``d(0, e_i)`` for the basis vectors of the layers ``k >= 2`` (zero on the first layer).
    They come from the closed form when available and from the upper end of a control bracket otherwise,
    computed once per group.

    :param g: the group
    :param seed: seed of the optimizer multi-starts
    :return: array of shape (N,)
    """
    with _PURE_LOCK:
        if g.key in _PURE_DISTANCES:
            return _PURE_DISTANCES[g.key]
    constants = np.zeros(g.total_dim)
    higher = np.flatnonzero(g.degrees > 1)
    if higher.size:
        directions = np.eye(g.total_dim)[higher]
        if g.closed_form is not None:
            constants[higher] = _norm_from_identity(g, directions, "closed_form", None, seed)
        else:
            # Avoid circular import
            from carnot_lab.cc_metric.control import control_distance

            constants[higher] = [bracket.upper for bracket in control_distance(g, directions, seed=seed)]
    constants.setflags(write=False)
    with _PURE_LOCK:
        _PURE_DISTANCES[g.key] = constants
    return constants


def homogeneous_upper_bound(g: GroupDescriptor, w: PointLike, seed: int = 0) -> np.ndarray:
    """
    Upper bound ``|w_1| + sum_i d(0, e_i) |r_i| ** (1 / deg_i)`` of ``d(0, w)``,
    where ``r = a^-1 w`` and ``a`` is the horizontal part of ``w``.
    ``r`` has no horizontal part, so on step <= 3 it is a product of commuting pure elements,
    each a dilate of some ``e_i`` or its inverse.

    :param g: the group (step <= 3)
    :param w: point(s)
    :param seed: seed of the optimizer multi-starts behind :func:`pure_direction_distances`
    :return: the bound(s)
    """
    w = g.check_point(w)
    n = g.horizontal_dim
    bound = np.linalg.norm(w[..., :n], axis=-1)
    if g.step == 1:
        return bound
    horizontal = np.zeros_like(w)
    horizontal[..., :n] = w[..., :n]
    rest = multiply(g, inverse(g, horizontal), w)[..., n:]
    constants = pure_direction_distances(g, seed=seed)[n:]
    return bound + np.sum(constants * np.abs(rest) ** (1.0 / g.degrees[n:]), axis=-1)


def within_radius(
    g: GroupDescriptor, w: PointLike, radius: float, cache: Optional[DistanceCache] = None, seed: int = 0
) -> np.ndarray:
    """
    Membership ``d(0, w) < radius``.
    Without a closed form, the layer lower bound and :func:`homogeneous_upper_bound` decide most points
    and only the shell they leave undecided goes to the control optimizer.

    :param g: the group
    :param w: point(s)
    :param radius: the radius
    :param cache: memo for the optimizer path (default: the process-wide cache)
    :param seed: seed of the optimizer multi-starts
    :return: booleans of shape ``w.shape[:-1]``
    """
    w = g.check_point(w)
    if g.closed_form is not None:
        return _norm_from_identity(g, w, "closed_form", None, seed) < radius
    flat = w.reshape(-1, g.total_dim)
    result = np.zeros(flat.shape[0], dtype=bool)
    candidates = np.flatnonzero(layer_lower_bound(g, flat) < radius)
    if candidates.size:
        certain = homogeneous_upper_bound(g, flat[candidates], seed=seed) < radius
        result[candidates[certain]] = True
        shell = candidates[~certain]
        if shell.size:
            cache = default_cache() if cache is None else cache
            result[shell] = _norm_from_identity(g, flat[shell], "optimizer", cache, seed) < radius
    return result.reshape(w.shape[:-1])


def _phi_minus_sin(phi: np.ndarray) -> np.ndarray:
    small = phi < 1e-2
    series = phi**3 / 6 - phi**5 / 120 + phi**7 / 5040
    return np.where(small, series, phi - np.sin(phi))


def _phase_gap(phi: float, tau: float) -> float:
    minus_sin = phi**3 / 6 - phi**5 / 120 if phi < 1e-2 else phi - math.sin(phi)
    return minus_sin / (8 * math.sin(phi / 2) ** 2) - tau


def geodesic_phase(tau: np.ndarray) -> np.ndarray:
    """
    Root ``phi`` in ``(0, 2 pi)`` of ``(phi - sin phi) / (8 sin(phi / 2) ** 2) = tau``, one Brent solve per entry.
    The left side increases from 0 to infinity, ``[min(tau, 1), 2 pi - min(pi, sqrt(pi / tau) / 2)]`` brackets the root.

    :param tau: positive ratios ``|z| / rho ** 2``
    :return: the phases
    """
    tau = np.asarray(tau, dtype=np.float64)
    flat = tau.ravel()
    phi = 12.0 * flat
    for index in np.flatnonzero(flat >= _SMALL_TAU):
        value = float(flat[index])
        high = 2 * np.pi - min(np.pi, 0.5 * math.sqrt(np.pi / value))
        phi[index] = optimize.brentq(_phase_gap, min(value, 1.0), high, args=(value,), xtol=1e-14, rtol=_PHASE_RTOL)
    return phi.reshape(tau.shape)


def heisenberg_norm(g: GroupDescriptor, w: PointLike) -> np.ndarray:
    """
    ``d(0, w)`` on H^k from the geodesic closed form.
    With ``rho = |horizontal part|`` and ``tau = |z| / rho ** 2`` the geodesic phase solves
    ``(phi - sin phi) / (8 sin(phi / 2) ** 2) = tau`` on ``[0, 2 pi)``.

    :param g: a Heisenberg group
    :param w: point(s)
    :return: the distance(s) to the identity
    """
    w = g.check_point(w)
    rho = np.linalg.norm(w[..., :-1], axis=-1)
    height = np.abs(w[..., -1])
    generic = (rho > 0) & (height > 0)
    safe_rho = np.where(generic, rho, 1.0)
    tau = np.where(generic, height / safe_rho**2, 0.0)
    phi = np.clip(geodesic_phase(tau), 1e-300, 2 * np.pi)

    with np.errstate(divide="ignore", invalid="ignore"):
        near_zero = rho * phi / (2 * np.sin(phi / 2))
        near_cut = np.sqrt(2 * height * phi**2 / _phi_minus_sin(phi))
    result = np.where(phi < np.pi, near_zero, near_cut)
    result = np.where(height == 0, rho, result)
    result = np.where((rho == 0) & (height > 0), 2 * np.sqrt(np.pi * height), result)
    return result


def _norm_from_identity(
    g: GroupDescriptor, w: np.ndarray, method: str, cache: Optional[DistanceCache], seed: int
) -> np.ndarray:
    if method == "auto":
        method = "closed_form" if g.closed_form is not None else "optimizer"
    if method == "closed_form":
        if g.closed_form == "euclidean":
            return np.linalg.norm(w, axis=-1)
        if g.closed_form == "heisenberg":
            return heisenberg_norm(g, w)
        raise ValueError(f"No closed form distance for group {g.name}")
    if method != "optimizer":
        raise ValueError(f"Unknown distance method {method!r}")
    flat = w.reshape(-1, g.total_dim)
    result = np.empty(flat.shape[0])
    origin = np.zeros(g.total_dim)
    missing = []
    for index, point in enumerate(flat):
        if cache is not None:
            value = cache.get(DistanceCache.make_key(g, origin, point))
            if value is not None:
                result[index] = value
                continue
        missing.append(index)
    if missing:
        # Avoid circular import
        from carnot_lab.cc_metric.control import control_distance

        brackets = control_distance(g, flat[missing], seed=seed)
        for index, found in zip(missing, brackets):
            value = max(found.lower, found.upper - found.residual)
            result[index] = value
            if cache is not None:
                cache.put(DistanceCache.make_key(g, origin, flat[index]), value)
    return result.reshape(w.shape[:-1])


def distance(
    g: GroupDescriptor,
    x: PointLike,
    y: PointLike,
    method: str = "auto",
    cache: Optional[DistanceCache] = None,
    seed: int = 0,
) -> Union[float, np.ndarray]:
    """
    Carnot-Caratheodory distance, computed as ``d(0, x^-1 y)`` by left-invariance.

    :param g: the group
    :param x: first point(s)
    :param y: second point(s), broadcast against ``x``
    :param method: "closed_form" (Euclidean and Heisenberg groups), "optimizer" (control optimization,
        any group of step <= 3) or "auto" (closed form when available)
    :param cache: memo for the optimizer path (default: the process-wide cache)
    :param seed: seed of the optimizer multi-starts
    :return: the distance(s), a float for a single pair
    """
    x, y = g.check_point(x), g.check_point(y)
    w = multiply(g, inverse(g, x), y)
    result = _norm_from_identity(g, w, method, default_cache() if cache is None else cache, seed)
    if np.ndim(result) == 0:
        return float(result)
    return result


def distance_bracket(g: GroupDescriptor, x: PointLike, y: PointLike, seed: int = 0, **kwargs) -> DistanceBracket:
    """
    Lower and upper bounds of ``d(x, y)``.
    The lower bound comes from the layer growth bounds, the upper bound from the closed form when available
    and from the control optimizer otherwise.

    :param g: the group
    :param x: first point
    :param y: second point
    :param seed: seed of the optimizer multi-starts
    :param kwargs: extra arguments of :func:`carnot_lab.cc_metric.control.control_distance`
    :return: the bracket
    """
    x, y = g.check_point(x), g.check_point(y)
    if x.ndim != 1 or y.ndim != 1:
        raise ValueError("distance_bracket works on a single pair of points")
    w = multiply(g, inverse(g, x), y)
    lower = float(layer_lower_bound(g, w))
    if g.closed_form is not None:
        value = float(_norm_from_identity(g, w, "closed_form", None, seed))
        return DistanceBracket(lower=min(lower, value), upper=value, method="closed_form")
    # Avoid circular import
    from carnot_lab.cc_metric.control import control_distance

    return control_distance(g, w[None], seed=seed, **kwargs)[0]


def estimate_equivalence_constants(
    g: GroupDescriptor, n_samples: Optional[int] = None, seed: int = 0, method: str = "auto"
) -> Tuple[float, float]:
    """
    Sampled constants ``c1, c2`` with ``c1 * box_norm <= d(0, .) <= c2 * box_norm``.

    :param g: the group
    :param n_samples: number of sampled points, uniform in the unit coordinate cube
        (default 10**4 with a closed form distance, 256 otherwise)
    :param seed: random seed
    :param method: distance method
    :return: the pair ``(c1, c2)``
    """
    if n_samples is None:
        n_samples = 10**4 if g.closed_form is not None else 2**8
    rng = get_rng(seed)
    points = rng.uniform(-1.0, 1.0, size=(n_samples, g.total_dim))
    norms = box_norm(g, points)
    distances = _norm_from_identity(g, points, method, default_cache(), seed)
    ratios = distances / norms
    return float(np.min(ratios)), float(np.max(ratios))
