"""
Numerical checks of the norm equalities for composition operators:

- ``|| |grad_0 phi| | L_q(Omega) || = ||phi*||`` for ``phi*: Lip -> L1_q`` (q finite and q = inf),
- ``||phi*|| = || K_p(., phi) | L_sigma(Omega) ||`` for ``phi*: L1_p(Omega') -> L1_q(Omega)``,

together with their local forms on sub-balls and the Reshetnyak-class and support-transfer checks.
The estimators only give lower bounds, so a verdict passes when
``(1 - gap_tol) analytic <= estimate <= (1 + quad_tol) analytic``.
"""
from typing import Any, Dict, List, NamedTuple, Optional

import numpy as np

from carnot_lab.common.save_util import to_json_compatible
from carnot_lab.common.type_aliases import SetKind
from carnot_lab.common.utils import conjugate_exponent
from carnot_lab.field_calc.derivatives import metric_derivative
from carnot_lab.field_calc.domains import Domain
from carnot_lab.lipschitz_lab.families import family_generate
from carnot_lab.lipschitz_lab.targets import LipTestFunction, as_target
from carnot_lab.lipschitz_lab.test_functions import annulus_cutoff, refine
from carnot_lab.map_calc.differentials import horizontal_differential
from carnot_lab.map_calc.distortion import distortion_Kp, kp_values
from carnot_lab.map_calc.maps import GroupMap
from carnot_lab.operator_lab.open_sets import OpenSetSpec
from carnot_lab.operator_lab.set_function import (
    integral_set_function,
    phi_estimate,
    phi_ratio_estimate,
    pullback_gradient_norms,
    pullback_sample,
    set_derivative,
)

GAP_TOLERANCE = 0.10
QUADRATURE_TOLERANCE = 0.02
# quantile standing in for the essential supremum, stencils straddling kinks of the members are outliers
ESS_SUP_QUANTILE = 0.99
MAX_SANDWICH_POINTS = 64


def within_tolerance(
    analytic: float, estimate: float, gap_tol: float = GAP_TOLERANCE, quad_tol: float = QUADRATURE_TOLERANCE
) -> bool:
    """
    ``(1 - gap_tol) analytic <= estimate <= (1 + quad_tol) analytic``; for ``analytic = 0`` the estimate must
    stay below ``quad_tol``.
    """
    if analytic == 0:
        return abs(estimate) <= quad_tol
    return (1 - gap_tol) * analytic <= estimate <= (1 + quad_tol) * analytic


class NormVerdict(object):
    """
    Outcome of a norm-equality check.

    :param theorem: which equality was checked
    :param phi: the map
    :param p: target exponent (None for Lipschitz targets)
    :param q: source exponent
    :param sigma: ``1 / sigma = 1 / q - 1 / p``
    :param analytic: the trusted side
    :param estimate: the estimator lower bound
    :param witnesses: best test functions of the estimator
    :param checks: the local checks, each with a ``pass`` entry
    :param gap_tol: accepted relative shortfall of the estimate
    :param quad_tol: accepted relative excess of the estimate
    """

    def __init__(
        self,
        theorem: str,
        phi: GroupMap,
        p: Optional[float],
        q: float,
        sigma: Optional[float],
        analytic: float,
        estimate: float,
        witnesses: Optional[List[Dict[str, Any]]] = None,
        checks: Optional[List[Dict[str, Any]]] = None,
        gap_tol: float = GAP_TOLERANCE,
        quad_tol: float = QUADRATURE_TOLERANCE,
    ):
        self.theorem = theorem
        self.phi = phi
        self.p = p
        self.q = q
        self.sigma = sigma
        self.analytic = float(analytic)
        self.estimate = float(estimate)
        self.witnesses = witnesses or []
        self.checks = checks or []
        self.gap_tol = gap_tol
        self.quad_tol = quad_tol

    @property
    def gap(self) -> float:
        """
        Relative shortfall ``1 - estimate / analytic`` (the absolute difference when ``analytic = 0``).
        """
        if self.analytic == 0:
            return self.estimate
        return 1.0 - self.estimate / self.analytic

    @property
    def norm_passed(self) -> bool:
        return within_tolerance(self.analytic, self.estimate, self.gap_tol, self.quad_tol)

    @property
    def passed(self) -> bool:
        return self.norm_passed and all(check["pass"] for check in self.checks)

    @property
    def failed_checks(self) -> List[Dict[str, Any]]:
        return [check for check in self.checks if not check["pass"]]

    def to_dict(self) -> Dict[str, Any]:
        return to_json_compatible(
            {
                "theorem": self.theorem,
                "map": self.phi.describe(),
                "p": self.p,
                "q": self.q,
                "sigma": self.sigma,
                "analytic": self.analytic,
                "estimate": self.estimate,
                "gap": self.gap,
                "witnesses": self.witnesses,
                "pass": self.passed,
                "checks": self.checks,
            }
        )

    def __repr__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"NormVerdict({self.theorem}, analytic={self.analytic:.6g}, estimate={self.estimate:.6g}, {verdict})"


class UpperGradient(NamedTuple):
    # family maximum of |grad_h(u o phi)| / Lip(u)
    values: np.ndarray
    # |D_h phi|, the closed form of the upper gradient for maps between groups
    analytic: np.ndarray
    # max_j m X_j phi and (sum_j (m X_j phi)^2)^(1/2) on the first points
    lower: np.ndarray
    upper: np.ndarray


def _free_family(phi: GroupMap, points: np.ndarray, budget: int, seed: int) -> List[LipTestFunction]:
    return family_generate(as_target(phi.target), None, budget=budget, seed=seed, net_points=phi(points[:256]))


def upper_gradient_estimate(
    phi: GroupMap,
    points: np.ndarray,
    family: Optional[List[LipTestFunction]] = None,
    h: float = 1e-4,
    budget: int = 64,
    seed: int = 0,
    n_sandwich: int = MAX_SANDWICH_POINTS,
) -> UpperGradient:
    """
    Upper gradient ``|grad_0 phi|``: the largest ``|grad_h(u o phi)| / Lip(u)`` over a family,
    with the metric-derivative bounds ``m X_j phi <= |grad_0 phi| <= (sum_i (m X_i phi)^2)^(1/2)``.

    :param phi: the map
    :param points: shape (B, N) or (N,)
    :param family: the test functions (default: an unconstrained family of size ``budget``)
    :param h: finite-difference step
    :param budget: size of the default family
    :param seed: seed of the default family
    :param n_sandwich: number of points (from the first) where the metric-derivative bounds are computed
    :return: the estimates
    """
    points = np.atleast_2d(phi.source.check_point(points))
    if family is None:
        family = _free_family(phi, points, budget, seed)
    sample = pullback_sample(phi, points, h)
    values = np.zeros(len(points))
    for u in family:
        if u.lipschitz > 0:
            values = np.maximum(values, pullback_gradient_norms(u, sample) / u.lipschitz)
    analytic = horizontal_differential(phi, points, h=h).norm
    head = points[:n_sandwich]
    derivatives = np.array(
        [[metric_derivative(phi, j, x, h=h) for j in range(phi.source.horizontal_dim)] for x in head]
    ).reshape(len(head), phi.source.horizontal_dim)
    return UpperGradient(
        values=values,
        analytic=analytic,
        lower=np.max(derivatives, axis=-1, initial=0.0),
        upper=np.linalg.norm(derivatives, axis=-1),
    )


def _local_sets(phi: GroupMap, domain: Domain, n_sub_balls: int, seed: int, n_samples: int):
    """
    Sub-balls ``U`` of a ball domain with their images ``phi(U)``, or nothing when images are not available.
    """
    if domain.kind != "ball" or n_sub_balls == 0:
        return []
    if phi.inverse is None or phi.inverse_lipschitz is None:
        return []
    balls = domain.sub_balls(n_sub_balls, seed=seed, n_samples=n_samples)
    return [(U, OpenSetSpec.image(phi, U.ball.center, U.ball.radius)) for U in balls]


def verify_theorem_lip(
    phi: GroupMap,
    domain: Domain,
    q: float,
    budget: int = 256,
    seed: int = 0,
    n_sub_balls: int = 5,
    sub_ball_samples: int = 2048,
    h: Optional[float] = None,
    gap_tol: float = GAP_TOLERANCE,
    quad_tol: float = QUADRATURE_TOLERANCE,
) -> NormVerdict:
    """
    ``|| |grad_0 phi| | L_q(Omega) || = ||phi*: Lip(Y) -> L1_q(Omega)||`` and its local form
    ``int_U |grad_0 phi|^q = Phi(phi(U))`` on seeded sub-balls.
    The analytic side integrates ``|D_h phi|``; the estimate is ``Phi^(Y) ** (1 / q)``.

    :param phi: the map
    :param domain: ``Omega``
    :param q: exponent in ``[1, inf)`` (see :func:`verify_prop_qinf` for ``q = inf``)
    :param budget: family size for ``Y`` (a quarter of it on the sub-balls)
    :param seed: random seed
    :param n_sub_balls: number of sub-balls (only for homeomorphisms with a Lipschitz inverse)
    :param sub_ball_samples: quadrature size of each sub-ball
    :param h: finite-difference step
    :param gap_tol: accepted relative shortfall
    :param quad_tol: accepted relative excess
    :return: the verdict
    """
    if not 1 <= q < np.inf:
        raise ValueError(f"Expected 1 <= q < inf, got q={q}, use verify_prop_qinf for q = inf")
    h = h or domain.default_step

    def upper_gradient_integral(U: Domain) -> float:
        if U.is_empty:
            return 0.0
        return U.integrate(horizontal_differential(phi, U.points, h=h).norm ** q).value

    # Phi(phi(Omega)) = Phi(Y) once the integral is restricted to Omega
    estimate = phi_estimate(phi, OpenSetSpec.whole(phi.target), q, domain, budget=budget, seed=seed, h=h)
    analytic = upper_gradient_integral(domain) ** (1.0 / q)
    # Phi vanishes on the empty set
    empty = phi_estimate(phi, OpenSetSpec.empty(phi.target), q, domain).value
    checks = [{"set": "empty", "analytic": 0.0, "estimate": empty, "pass": empty == 0.0}]
    for index, (U, V) in enumerate(_local_sets(phi, domain, n_sub_balls, seed, sub_ball_samples)):
        local = phi_estimate(phi, V, q, U, budget=max(1, budget // 4), seed=seed + index + 1, h=h).value
        local_analytic = upper_gradient_integral(U)
        checks.append(
            {
                "set": U.describe(),
                "analytic": local_analytic,
                "estimate": local,
                "pass": within_tolerance(local_analytic ** (1.0 / q), local ** (1.0 / q), gap_tol, quad_tol),
            }
        )
    return NormVerdict(
        "lip",
        phi,
        None,
        q,
        q,
        analytic,
        estimate.value ** (1.0 / q),
        witnesses=estimate.witnesses(),
        checks=checks,
        gap_tol=gap_tol,
        quad_tol=quad_tol,
    )


def verify_theorem_sobolev(
    phi: GroupMap,
    domain: Domain,
    p: float,
    q: float,
    target_domain: Optional[Domain] = None,
    budget: int = 256,
    seed: int = 0,
    n_sub_balls: int = 5,
    sub_ball_samples: int = 2048,
    derivative_radius: float = 0.05,
    derivative_tol: float = 0.10,
    h: Optional[float] = None,
    gap_tol: float = GAP_TOLERANCE,
    quad_tol: float = QUADRATURE_TOLERANCE,
) -> NormVerdict:
    """
    ``||phi*: L1_p(Omega') -> L1_q(Omega)|| = || K_p(., phi) | L_sigma(Omega) ||``, compared three ways:

    - the analytic side, ``K_p`` integrated by quadrature,
    - the estimator ``Phi^(Omega') ** (1 / sigma)``, the best ratio ``||u o phi|| / ||u||`` over the family,
    - on seeded sub-balls ``U``: ``int_U K_p^sigma >= Phi^(phi(U))`` and the density
      ``(Phi o phi)'(x) = K_p(x)^sigma`` at the ball centers.

    For ``q = p`` (``sigma = inf``) the norm is the supremum of ``K_p`` and the local checks are skipped.

    :param phi: a homeomorphism with a known inverse
    :param domain: ``Omega``
    :param p: target exponent
    :param q: source exponent, ``1 <= q <= p < inf``
    :param target_domain: ``Omega'`` (default: the image ball, or the change of variables through ``phi``)
    :param budget: family size for ``Omega'`` (a quarter of it on the sub-balls)
    :param seed: random seed
    :param n_sub_balls: number of sub-balls
    :param sub_ball_samples: quadrature size of each sub-ball and derivative ball
    :param derivative_radius: radius of the density check
    :param derivative_tol: relative tolerance of the density check
    :param h: finite-difference step
    :param gap_tol: accepted relative shortfall
    :param quad_tol: accepted relative excess
    :return: the verdict
    """
    if not 1 <= q <= p < np.inf:
        raise ValueError(f"Expected 1 <= q <= p < inf, got q={q}, p={p}")
    if phi.inverse is None:
        raise ValueError(f"The Sobolev norm equality needs a homeomorphism, {phi.kind} has no inverse")
    sigma = conjugate_exponent(p, q)
    h = h or domain.default_step
    report = distortion_Kp(phi, domain, p, q, h=h)
    estimate = phi_ratio_estimate(phi, None, p, q, domain, target_domain=target_domain, budget=budget, seed=seed, h=h)
    checks = [
        {
            "set": "finite_distortion",
            "worst": report.finite_distortion.worst,
            "pass": report.finite_distortion.passed,
        }
    ]
    if not np.isinf(sigma):

        def kp_power(points: np.ndarray) -> np.ndarray:
            return kp_values(phi, points, p, h=h) ** sigma

        local_sets = _local_sets(phi, domain, n_sub_balls, seed, sub_ball_samples)
        for index, (U, V) in enumerate(local_sets):
            integral = U.integrate(kp_power(U.points)).value
            local = phi_ratio_estimate(phi, V, p, q, U, budget=max(1, budget // 4), seed=seed + index + 1, h=h).value
            checks.append(
                {
                    "set": U.describe(),
                    "analytic": integral,
                    "estimate": local,
                    "pass": local <= integral * (1 + quad_tol),
                }
            )
        for index, (U, _) in enumerate(local_sets):
            center = U.ball.center
            density = set_derivative(
                integral_set_function(kp_power),
                phi.source,
                center,
                radii=(derivative_radius,),
                n_samples=sub_ball_samples,
                seed=seed + index,
            ).value
            expected = float(kp_power(center[None])[0])
            checks.append(
                {
                    "set": "density",
                    "point": center,
                    "analytic": expected,
                    "estimate": density,
                    "pass": abs(density - expected) <= derivative_tol * abs(expected) + 1e-12,
                }
            )
    return NormVerdict(
        "sobolev",
        phi,
        p,
        q,
        sigma,
        report.kp_norm,
        estimate.ratio,
        witnesses=estimate.witnesses(),
        checks=checks,
        gap_tol=gap_tol,
        quad_tol=quad_tol,
    )


def _ess_sup_ratio(phi: GroupMap, domain: Domain, family: List[LipTestFunction], h: float) -> float:
    sample = pullback_sample(phi, domain.points, h)
    best = 0.0
    for u in family:
        if u.lipschitz > 0:
            ratios = pullback_gradient_norms(u, sample) / u.lipschitz
            best = max(best, float(np.quantile(ratios, ESS_SUP_QUANTILE)))
    return best


def verify_prop_qinf(
    phi: GroupMap,
    domain: Domain,
    budget: int = 64,
    seed: int = 0,
    n_samples: int = 4096,
    h: Optional[float] = None,
    gap_tol: float = 0.05,
    quad_tol: float = QUADRATURE_TOLERANCE,
) -> NormVerdict:
    """
    ``|| |grad_0 phi| | L_inf(Omega) || = ||phi*: Lip(Y) -> L1_inf(Omega)||``: the sample maximum of
    ``|D_h phi|`` against the best essential supremum of ``|grad_h(u o phi)| / Lip(u)`` over a family.

    :param phi: the map
    :param domain: ``Omega``
    :param budget: family size
    :param seed: random seed
    :param n_samples: number of sample points
    :param h: finite-difference step
    :param gap_tol: accepted relative shortfall
    :param quad_tol: accepted relative excess
    :return: the verdict
    """
    h = h or domain.default_step
    domain = domain.with_samples(min(n_samples, domain.n_samples))
    points = domain.points
    family = _free_family(phi, points, budget, seed)
    analytic = float(np.max(horizontal_differential(phi, points, h=h).norm, initial=0.0))
    estimate = _ess_sup_ratio(phi, domain, family, h)
    return NormVerdict("qinf", phi, None, np.inf, np.inf, analytic, estimate, gap_tol=gap_tol, quad_tol=quad_tol)


def composition_norm(
    phi: GroupMap, domain: Domain, q: float, budget: int = 256, seed: int = 0, h: Optional[float] = None
) -> float:
    """
    Lower estimate of ``||phi*: Lip(Y) -> L1_q(Omega)||``, that is ``Phi^(Y) ** (1 / q)``
    (the best essential supremum for ``q = inf``).
    """
    h = h or domain.default_step
    if np.isinf(q):
        return _ess_sup_ratio(phi, domain, _free_family(phi, domain.points, budget, seed), h)
    return phi_estimate(phi, None, q, domain, budget=budget, seed=seed, h=h).value ** (1.0 / q)


class ReshetnyakCheck(NamedTuple):
    passed: bool
    worst_ratio: float
    violation_fraction: float
    family_size: int


def reshetnyak_check(
    phi: GroupMap,
    points: np.ndarray,
    family: Optional[List[LipTestFunction]] = None,
    majorant: Optional[np.ndarray] = None,
    h: float = 1e-4,
    budget: int = 64,
    seed: int = 0,
    tolerance: float = 1e-3,
    max_violation_fraction: float = 0.01,
) -> ReshetnyakCheck:
    """
    Reshetnyak-class inequality ``|grad_h(u o phi)| <= Lip(u) g`` on samples, for every member.
    Difference quotients of a member across one of its kinks may exceed the bound on a set of size ``O(h)``,
    so a fraction ``max_violation_fraction`` of (member, sample) pairs may fail.

    :param phi: the map
    :param points: the samples
    :param family: the test functions (default: an unconstrained family of size ``budget``)
    :param majorant: ``g`` at the samples (default: ``|D_h phi|``)
    :param h: finite-difference step
    :param budget: size of the default family
    :param seed: seed of the default family
    :param tolerance: relative tolerance of each comparison
    :param max_violation_fraction: accepted fraction of failing pairs
    :return: the check
    """
    points = np.atleast_2d(phi.source.check_point(points))
    if family is None:
        family = _free_family(phi, points, budget, seed)
    if majorant is None:
        majorant = horizontal_differential(phi, points, h=h).norm
    majorant = np.asarray(majorant, dtype=np.float64)
    sample = pullback_sample(phi, points, h)
    worst, n_violations, n_pairs = 0.0, 0, 0
    for u in family:
        gradient = pullback_gradient_norms(u, sample)
        bound = u.lipschitz * majorant
        n_violations += int(np.count_nonzero(gradient > bound * (1 + tolerance) + 1e-12))
        n_pairs += len(gradient)
        positive = bound > 0
        if np.any(positive):
            worst = max(worst, float(np.max(gradient[positive] / bound[positive])))
    fraction = n_violations / n_pairs if n_pairs > 0 else 0.0
    return ReshetnyakCheck(fraction <= max_violation_fraction, worst, fraction, len(family))


class SupportTransferCheck(NamedTuple):
    passed: bool
    # largest int over phi^-1(K_2delta) of |grad_h(u o phi)|^q over the unconstrained members
    restricted_max: float
    phi_value: float
    delta: float
    n_transferred: int


def support_transfer_check(
    phi: GroupMap,
    V: OpenSetSpec,
    q: float,
    domain: Domain,
    delta: Optional[float] = None,
    budget: int = 64,
    seed: int = 0,
    h: Optional[float] = None,
    tolerance: float = 1e-3,
) -> SupportTransferCheck:
    """
    Removal of the support condition: every unconstrained member ``u``, refined below ``delta`` and cut in the
    annulus ``K_delta \\ K_2delta``, is admissible for ``V``, hence
    ``int over phi^-1(K_2delta) of |grad_h(u o phi)|^q <= Phi^(V)`` when the transferred members are in the family.

    :param phi: the map
    :param V: a proper open set
    :param q: exponent in ``[1, inf)``
    :param domain: ``Omega``
    :param delta: annulus width (default: a 64th of the inradius of ``V``)
    :param budget: size of the unconstrained family and of the family for ``V``
    :param seed: random seed
    :param h: finite-difference step
    :param tolerance: relative tolerance of the comparison
    :return: the check
    """
    if V.kind in (SetKind.EMPTY, SetKind.WHOLE):
        raise ValueError(f"Support transfer needs a proper non-empty open set, got {V.kind.value}")
    delta = V.inradius / 64 if delta is None else delta
    h = h or domain.default_step
    domain = domain.with_samples(min(domain.n_samples, 2**14))
    points = domain.points
    free = _free_family(phi, points, budget, seed)
    sample = pullback_sample(phi, points, h)
    deep = V.inner(2 * delta).contains(phi(points))
    transferred, restricted = [], []
    for u in free:
        try:
            transferred.append(annulus_cutoff(refine(u, V, delta), V, delta))
        except ValueError:
            continue
        integrand = np.where(deep, pullback_gradient_norms(u, sample) ** q, 0.0)
        restricted.append(domain.integrate(integrand).value / u.lipschitz**q)
    family = family_generate(as_target(phi.target), V, budget=budget, seed=seed) + transferred
    value = phi_estimate(phi, V, q, domain, seed=seed, h=h, family=family).value
    restricted_max = max(restricted, default=0.0)
    return SupportTransferCheck(
        passed=restricted_max <= value * (1 + tolerance) + 1e-12,
        restricted_max=restricted_max,
        phi_value=value,
        delta=float(delta),
        n_transferred=len(transferred),
    )
