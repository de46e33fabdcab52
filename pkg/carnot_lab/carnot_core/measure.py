import threading
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import integrate
from scipy.special import gamma

from carnot_lab.carnot_core.groups import GroupDescriptor, dilate, euclidean_ball_volume, inverse, multiply
from carnot_lab.common.type_aliases import MonteCarloEstimate, PointLike
from carnot_lab.common.utils import chunk_sizes, get_rng, parallel_map

DEFAULT_CHUNK_SIZE = 2**16
# default calibration sample counts, with and without a closed form distance
CLOSED_FORM_CALIBRATION_SAMPLES = 10**6
OPTIMIZER_CALIBRATION_SAMPLES = 2**12

_CALIBRATIONS: Dict[Tuple, MonteCarloEstimate] = {}
_CALIBRATIONS_LOCK = threading.Lock()


class UnboundedRegionError(ValueError):
    def __init__(self, low: np.ndarray, high: np.ndarray):
        super(UnboundedRegionError, self).__init__(
            f"Monte Carlo integration needs a bounded region, got the bounding box {low.tolist()} x {high.tolist()}"
        )


class EmptyCalibrationError(RuntimeError):
    def __init__(self, name: str, n_samples: int, seed: int):
        super(EmptyCalibrationError, self).__init__(
            f"Monte Carlo calibration of {name} drew no point of the unit ball in {n_samples} samples (seed {seed}), "
            "increase n_samples"
        )


class Region(object):
    """
    A measurable set given by an indicator and a coordinate box containing it.

    :param indicator: vectorized membership test, (..., N) -> (...) booleans
    :param low: lower corner of the bounding box
    :param high: upper corner of the bounding box
    :param name: label used in reports
    """

    def __init__(self, indicator: Callable[[np.ndarray], np.ndarray], low: PointLike, high: PointLike, name: str = "region"):
        self.indicator = indicator
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.name = name
        if self.low.shape != self.high.shape or np.any(self.low > self.high):
            raise ValueError(f"Invalid bounding box {self.low} x {self.high}")

    @classmethod
    def box(cls, low: PointLike, high: PointLike) -> "Region":
        low, high = np.asarray(low, dtype=np.float64), np.asarray(high, dtype=np.float64)

        def indicator(points: np.ndarray) -> np.ndarray:
            return np.all((points > low) & (points < high), axis=-1)

        return cls(indicator, low, high, name="box")

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.low)) and np.all(np.isfinite(self.high)))

    @property
    def box_volume(self) -> float:
        return float(np.prod(self.high - self.low))

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        in_box = np.all((points >= self.low) & (points <= self.high), axis=-1)
        return in_box & self.indicator(points)

    def dilate(self, g: GroupDescriptor, lam: float) -> "Region":
        """
        The image ``delta_lambda(E)``.
        """
        scale = lam ** g.degrees

        def indicator(points: np.ndarray) -> np.ndarray:
            return self.contains(dilate(g, 1.0 / lam, points))

        return Region(indicator, self.low * scale, self.high * scale, name=f"dilate({self.name}, {lam})")

    def translate(self, g: GroupDescriptor, a: PointLike) -> "Region":
        """
        The left translate ``a * E``.
        """
        a = g.check_point(a)
        low, high = translated_box(g, a, self.low, self.high)

        def indicator(points: np.ndarray) -> np.ndarray:
            return self.contains(multiply(g, inverse(g, a), points))

        return Region(indicator, low, high, name=f"translate({self.name})")


def translated_box(g: GroupDescriptor, a: np.ndarray, low: np.ndarray, high: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    A coordinate box containing ``a * [low, high]``.
    The product is affine in the right factor up to a quadratic step-3 term, which is bounded coordinate-wise.
    """
    if not (np.all(np.isfinite(low)) and np.all(np.isfinite(high))):
        return np.full_like(low, -np.inf), np.full_like(high, np.inf)
    c = g.structure_constants
    ad = np.einsum("i,ijk->jk", a, c)
    linear = np.eye(g.total_dim)
    if g.step >= 2:
        linear = linear + 0.5 * ad
    if g.step >= 3:
        linear = linear + ad @ ad / 12.0
    center, half = (low + high) / 2, (high - low) / 2
    image_center = a + center @ linear
    image_half = half @ np.abs(linear)
    if g.step >= 3:
        extent = np.maximum(np.abs(low), np.abs(high))
        abs_c = np.abs(c)
        inner = np.einsum("i,j,ijk->k", np.abs(a), extent, abs_c)
        image_half = image_half + np.einsum("i,j,ijk->k", extent, inner, abs_c) / 12.0
    return image_center - image_half, image_center + image_half


def _count_chunk(region: Region, n_samples: int, seed: int, stream: int) -> int:
    rng = get_rng(seed, stream)
    points = rng.uniform(region.low, region.high, size=(n_samples, region.low.shape[0]))
    return int(np.count_nonzero(region.contains(points)))


def lebesgue_volume(
    region: Region, n_samples: int = 10**5, seed: int = 0, chunk_size: int = DEFAULT_CHUNK_SIZE
) -> MonteCarloEstimate:
    """
    Monte Carlo Lebesgue volume by rejection from the bounding box.
    Chunk ``i`` uses the random stream ``i``, so the result does not depend on the number of threads.

    :param region: the set to measure
    :param n_samples: number of uniform samples in the bounding box
    :param seed: random seed
    :param chunk_size: samples per work item
    :return: volume and its standard error
    """
    if not region.is_bounded:
        raise UnboundedRegionError(region.low, region.high)
    if n_samples < 1:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    sizes = chunk_sizes(n_samples, chunk_size)
    counts = parallel_map(lambda item: _count_chunk(region, item[1], seed, item[0]), list(enumerate(sizes)))
    fraction = sum(counts) / n_samples
    box_volume = region.box_volume
    return MonteCarloEstimate(
        value=box_volume * fraction,
        standard_error=box_volume * np.sqrt(fraction * (1 - fraction) / n_samples),
        n_samples=n_samples,
    )


def measure(g: GroupDescriptor, region: Region, n_samples: int = 10**5, seed: int = 0) -> MonteCarloEstimate:
    """
    Normalized Haar measure of a region (normalization constant times Lebesgue volume).

    :param g: the group
    :param region: the region, given by an indicator and a bounding box
    :param n_samples: Monte Carlo sample count
    :param seed: random seed
    :return: the measure with its standard error
    """
    volume = lebesgue_volume(region, n_samples=n_samples, seed=seed)
    norm = g.measure_norm
    return MonteCarloEstimate(volume.value * norm, volume.standard_error * norm, volume.n_samples)


def heisenberg_unit_ball_volume(k: int) -> Tuple[float, float]:
    """
    Lebesgue volume of the unit ball of H^k as a one-dimensional integral over the geodesic phase.
    The unit sphere is ``rho = 2 sin(phi / 2) / phi``, ``|z| = (phi - sin phi) / (2 phi^2)`` for ``phi`` in ``[0, 2 pi]``.

    :param k: index of the Heisenberg group
    :return: volume and the quadrature error estimate
    """
    sphere_area = 2 * np.pi**k / gamma(k)

    def integrand(phi: float) -> float:
        rho = 2 * np.sin(phi / 2) / phi
        height = (phi - np.sin(phi)) / (2 * phi**2)
        slope = abs(phi * np.cos(phi / 2) - 2 * np.sin(phi / 2)) / phi**2
        return rho ** (2 * k - 1) * height * slope

    value, error = integrate.quad(integrand, 1e-12, 2 * np.pi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return 2 * sphere_area * value, 2 * sphere_area * error


def calibrate_measure(
    g: GroupDescriptor, method: str = "monte_carlo", n_samples: Optional[int] = None, seed: int = 0, verbose: int = 0
) -> MonteCarloEstimate:
    """
    Compute ``c = 1 / Lebesgue(B(0, 1))`` and store it on the group.
    Results are cached per process for a given (group, method, sample count, seed).

    :param g: the group
    :param method: "monte_carlo" (rejection sampling of the unit ball) or
        "quadrature" (one-dimensional integral, Heisenberg groups only)
    :param n_samples: Monte Carlo sample count (default 10**6 with a closed form distance, 4096 otherwise)
    :param seed: random seed
    :param verbose: Verbosity level: 0 no output, 1 info
    :return: the constant and its standard error
    """
    if method not in ("monte_carlo", "quadrature"):
        raise ValueError(f"Unknown calibration method {method!r}, expected 'monte_carlo' or 'quadrature'")
    if n_samples is None:
        n_samples = CLOSED_FORM_CALIBRATION_SAMPLES if g.closed_form is not None else OPTIMIZER_CALIBRATION_SAMPLES
    key = (g.key, method, n_samples, seed)
    with _CALIBRATIONS_LOCK:
        cached = _CALIBRATIONS.get(key)
    if cached is None:
        if g.is_abelian:
            cached = MonteCarloEstimate(1.0 / euclidean_ball_volume(g.total_dim), 0.0, 0)
        elif method == "quadrature":
            if g.closed_form != "heisenberg":
                raise ValueError(f"Quadrature calibration is only available for Heisenberg groups, got {g.name}")
            volume, error = heisenberg_unit_ball_volume(g.horizontal_dim // 2)
            cached = MonteCarloEstimate(1.0 / volume, error / volume**2, 0)
        else:
            # Avoid circular import
            from carnot_lab.cc_metric.balls import unit_ball_region

            volume = lebesgue_volume(unit_ball_region(g), n_samples=n_samples, seed=seed)
            if volume.value == 0:
                raise EmptyCalibrationError(g.name, n_samples, seed)
            cached = MonteCarloEstimate(1.0 / volume.value, volume.standard_error / volume.value**2, n_samples)
        if verbose >= 1:
            print(f"Calibrated {g.name} ({method}): c = {cached.value:.6g} +/- {cached.standard_error:.2g}")
        with _CALIBRATIONS_LOCK:
            _CALIBRATIONS[key] = cached
    g.set_measure_norm(cached.value, cached.standard_error)
    return cached
