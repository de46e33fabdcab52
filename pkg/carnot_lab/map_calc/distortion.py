"""
Spatial Jacobian, outer distortion ``K_p`` and the finite-distortion check.
"""
from typing import Any, Dict, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd

from carnot_lab.carnot_core.groups import multiply
from carnot_lab.cc_metric.balls import ball_bounding_box
from carnot_lab.cc_metric.distance import distance
from carnot_lab.common.type_aliases import PointLike, SpatialJacobian
from carnot_lab.common.utils import conjugate_exponent, get_rng
from carnot_lab.field_calc.domains import Domain
from carnot_lab.map_calc.differentials import homogeneous_norm, horizontal_differential, pansu_extend

DET_THRESHOLD = 1e-10


def spatial_jacobian(
    phi,
    x: PointLike,
    radii: Sequence[float] = (0.2, 0.1, 0.05),
    n_samples: int = 2 * 10**4,
    seed: int = 0,
    h: float = 1e-4,
) -> SpatialJacobian:
    """
    ``J(x, phi) = lim |phi(B(x, r))| / |B(x, r)|``.
    The image of each ball is measured through the inverse map: ``y`` lies in ``phi(B(x, r))``
    iff ``d(x, phi^-1(y)) < r``. Candidates are drawn in the coordinate box of ``B(0, L r)`` of the target
    (``L`` the Lipschitz constant of ``phi``) and left-translated to ``phi(x)``.
    The limit is the intercept of the weighted linear fit of the ratios against ``r``.

    :param phi: a homeomorphism with a known inverse
    :param x: the point
    :param radii: decreasing radii
    :param n_samples: Monte Carlo samples per radius
    :param seed: random seed
    :param h: step of the differential used for the comparison with ``|det D^phi(x)|``
    :return: the estimate, the ratio sequence and the gap to ``|det D^phi(x)|``
    """
    inverse_map = phi.inverse
    if inverse_map is None:
        raise ValueError(f"The spatial Jacobian needs the inverse of the map, {phi.kind} has none")
    source, target = phi.source, phi.target
    x = source.check_point(x)
    radii = np.asarray(radii, dtype=np.float64)
    if radii.ndim != 1 or len(radii) == 0 or np.any(radii <= 0):
        raise ValueError(f"Expected a non-empty list of positive radii, got {radii}")
    differential = horizontal_differential(phi, x, h=h)
    pansu = pansu_extend(source, target, differential.matrix)
    lipschitz = phi.lipschitz
    if lipschitz is None:
        # a margin over the local graded norm
        lipschitz = 2.0 * float(homogeneous_norm(pansu))
    center = phi(x)
    origin = np.zeros(target.total_dim)
    ratios, errors = [], []
    for index, radius in enumerate(radii):
        low, high = ball_bounding_box(target, origin, lipschitz * radius)
        box_volume = float(np.prod(high - low))
        candidates = get_rng(seed, index).uniform(low, high, size=(n_samples, target.total_dim))
        preimages = inverse_map(multiply(target, center, candidates))
        fraction = float(np.mean(distance(source, x, preimages) < radius))
        ball = radius**source.homogeneous_dim
        ratios.append(target.measure_norm * box_volume * fraction / ball)
        errors.append(target.measure_norm * box_volume * np.sqrt(fraction * (1 - fraction) / n_samples) / ball)
    ratios, errors = np.array(ratios), np.array(errors)
    if len(radii) >= 2:
        weights = 1.0 / np.maximum(errors, 1e-12 * np.max(np.abs(ratios)) + 1e-300)
        value = float(np.polyfit(radii, ratios, 1, w=weights)[1])
    else:
        value = float(ratios[0])
    det = abs(float(pansu.det))
    return SpatialJacobian(
        value=value,
        radii=radii,
        ratios=ratios,
        standard_errors=errors,
        det=det,
        relative_gap=abs(value - det) / det if det > 0 else None,
    )


class FiniteDistortionVerdict(NamedTuple):
    passed: bool
    worst: float
    n_zero_set: int
    violations: np.ndarray


def _outer_distortion(dh_norm: np.ndarray, det: np.ndarray, p: float, det_threshold: float) -> np.ndarray:
    nonzero = np.abs(det) >= det_threshold
    return np.where(nonzero, dh_norm / np.where(nonzero, np.abs(det), 1.0) ** (1.0 / p), 0.0)


def _zero_set_violations(
    phi, points: np.ndarray, dh_norm: np.ndarray, det: np.ndarray, h: float, det_threshold: float, tolerance: float
) -> FiniteDistortionVerdict:
    zero_set = np.abs(det) < det_threshold
    suspects = np.flatnonzero(zero_set & (dh_norm > tolerance))
    if len(suspects) > 0:
        # kinks of the map produce spurious differentials at a fixed step, a violation must persist at h / 10
        refined = horizontal_differential(phi, points[suspects], h=h / 10)
        refined_det = np.abs(pansu_extend(phi.source, phi.target, refined.matrix).det)
        suspects = suspects[(refined.norm > tolerance) & (refined_det < det_threshold)]
    worst = float(np.max(dh_norm[zero_set], initial=0.0))
    return FiniteDistortionVerdict(
        passed=len(suspects) == 0,
        worst=worst,
        n_zero_set=int(np.count_nonzero(zero_set)),
        violations=points[suspects],
    )


def finite_distortion_check(
    phi,
    domain: Domain,
    h: Optional[float] = None,
    det_threshold: float = DET_THRESHOLD,
    tolerance: float = 1e-6,
    n_samples: Optional[int] = None,
) -> FiniteDistortionVerdict:
    """
    Finite distortion: ``D_h phi = 0`` almost everywhere on ``{det D^phi = 0}``.
    Samples with ``|det| < det_threshold`` form the zero set; the map passes when ``|D_h phi|`` stays below
    ``tolerance`` there. Violations are confirmed with a ten times smaller step.

    :param phi: the map
    :param domain: the domain and its samples
    :param h: finite-difference step (default: 1e-4 times the diameter)
    :param det_threshold: threshold of the zero set
    :param tolerance: largest accepted ``|D_h phi|`` on the zero set
    :param n_samples: use only the first ``n_samples`` quadrature points
    :return: the verdict with the worst value and the violating samples
    """
    points = domain.points if n_samples is None else domain.points[:n_samples]
    if len(points) == 0:
        return FiniteDistortionVerdict(True, 0.0, 0, np.zeros((0, phi.source.total_dim)))
    h = h or domain.default_step
    differential = horizontal_differential(phi, points, h=h)
    det = pansu_extend(phi.source, phi.target, differential.matrix).det
    return _zero_set_violations(phi, points, differential.norm, det, h, det_threshold, tolerance)


class DistortionReport(object):
    """
    Pointwise ``K_p(x) = |D_h phi(x)| / |det D^phi(x)| ** (1 / p)`` (0 where the determinant vanishes)
    on the quadrature points of a domain, with its ``L_sigma`` norm.

    :param p: the exponent
    :param q: the second exponent (``1 / sigma = 1 / q - 1 / p``), None for ``sigma = p``
    :param sigma: the norm exponent
    :param points: the quadrature points
    :param dh_norm: ``|D_h phi|`` at the points
    :param det: ``det D^phi`` at the points
    :param kp: ``K_p`` at the points
    :param kp_norm: ``|| K_p | L_sigma ||``
    :param kp_norm_error: its error estimate
    :param finite_distortion: the finite-distortion verdict
    :param det_threshold: threshold of the zero set
    """

    def __init__(
        self,
        p: float,
        q: Optional[float],
        sigma: float,
        points: np.ndarray,
        dh_norm: np.ndarray,
        det: np.ndarray,
        kp: np.ndarray,
        kp_norm: float,
        kp_norm_error: float,
        finite_distortion: FiniteDistortionVerdict,
        det_threshold: float,
    ):
        self.p = p
        self.q = q
        self.sigma = sigma
        self.points = points
        self.dh_norm = dh_norm
        self.det = det
        self.kp = kp
        self.kp_norm = kp_norm
        self.kp_norm_error = kp_norm_error
        self.finite_distortion = finite_distortion
        self.det_threshold = det_threshold

    @property
    def zero_set(self) -> np.ndarray:
        return np.abs(self.det) < self.det_threshold

    @property
    def thresholded_count(self) -> int:
        return int(np.count_nonzero(self.zero_set))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "q": self.q,
            "sigma": self.sigma,
            "samples": int(len(self.kp)),
            "Kp_norm": self.kp_norm,
            "Kp_norm_error": self.kp_norm_error,
            "finite_distortion": {
                "verdict": "PASS" if self.finite_distortion.passed else "FAIL",
                "worst": self.finite_distortion.worst,
            },
            "thresholded_count": self.thresholded_count,
        }

    def to_frame(self) -> pd.DataFrame:
        """
        Per-sample table: coordinates, ``|D_h phi|``, ``det``, ``K_p`` and the zero-set flag.
        """
        columns = {f"x{index}": self.points[:, index] for index in range(self.points.shape[1])}
        columns.update(dh_norm=self.dh_norm, det=self.det, kp=self.kp, zero_set=self.zero_set)
        return pd.DataFrame(columns)


def distortion_Kp(
    phi,
    domain: Domain,
    p: float,
    q: Optional[float] = None,
    h: Optional[float] = None,
    det_threshold: float = DET_THRESHOLD,
    tolerance: float = 1e-6,
) -> DistortionReport:
    """
    Outer distortion ``K_p`` on the quadrature points of ``domain``.

    :param phi: the map
    :param domain: the domain and its quadrature
    :param p: exponent in ``[1, inf)``
    :param q: when given, the norm is taken in ``L_sigma`` with ``1 / sigma = 1 / q - 1 / p``
        (``sigma = inf`` for ``q = p``, a sample maximum); otherwise in ``L_p``
    :param h: finite-difference step (default: 1e-4 times the diameter)
    :param det_threshold: ``|det D^phi|`` below this value counts as zero
    :param tolerance: tolerance of the finite-distortion check
    :return: the report
    """
    if not 1 <= p < np.inf:
        raise ValueError(f"Expected 1 <= p < inf, got p={p}")
    sigma = float(p) if q is None else conjugate_exponent(p, q)
    points = domain.points
    h = h or domain.default_step
    if len(points) == 0:
        empty = np.zeros(0)
        verdict = FiniteDistortionVerdict(True, 0.0, 0, np.zeros((0, phi.source.total_dim)))
        return DistortionReport(p, q, sigma, points, empty, empty, empty, 0.0, 0.0, verdict, det_threshold)
    differential = horizontal_differential(phi, points, h=h)
    det = pansu_extend(phi.source, phi.target, differential.matrix).det
    kp = _outer_distortion(differential.norm, det, p, det_threshold)
    if np.isinf(sigma):
        kp_norm, kp_norm_error = float(np.max(kp)), 0.0
    else:
        integral = domain.integrate(kp**sigma)
        kp_norm = integral.value ** (1.0 / sigma)
        kp_norm_error = kp_norm / (sigma * integral.value) * integral.standard_error if integral.value > 0 else 0.0
    verdict = _zero_set_violations(phi, points, differential.norm, det, h, det_threshold, tolerance)
    return DistortionReport(
        p, q, sigma, points, differential.norm, det, kp, float(kp_norm), float(kp_norm_error), verdict, det_threshold
    )


def kp_values(phi, points: np.ndarray, p: float, h: float = 1e-4, det_threshold: float = DET_THRESHOLD) -> np.ndarray:
    """
    ``K_p`` at arbitrary points (no quadrature).
    """
    differential = horizontal_differential(phi, points, h=h)
    det = pansu_extend(phi.source, phi.target, differential.matrix).det
    return _outer_distortion(differential.norm, det, p, det_threshold)
