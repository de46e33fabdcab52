"""
The set function ``Phi(V) = sup {int_Omega |grad_h(u o phi)|^q : Lip(u) <= 1, dist(spt u, Y \\ V) > 0}``,
its ratio form for Sobolev targets, quasi-additivity and derivatives of set functions.

The supremum is taken over a finite family of test functions, so every estimate is a lower bound.
"""
import warnings
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from carnot_lab.common.type_aliases import SetDerivative, SetKind
from carnot_lab.common.utils import conjugate_exponent, parallel_map
from carnot_lab.field_calc.domains import Domain
from carnot_lab.field_calc.stencil import HorizontalStencil, StencilSample
from carnot_lab.lipschitz_lab.families import describe_family, family_generate
from carnot_lab.lipschitz_lab.targets import LipTestFunction, as_target
from carnot_lab.lipschitz_lab.test_functions import disjoint_sum, refine
from carnot_lab.map_calc.differentials import horizontal_differential, pansu_extend
from carnot_lab.map_calc.maps import GroupMap, IdentityMap
from carnot_lab.operator_lab.open_sets import OpenSetSpec

ESTIMATOR_SAMPLES = 2**14
# relative slack of the exact quasi-additivity check (summation order)
ADDITIVITY_SLACK = 1e-12


class SetFunctionEstimate(object):
    """
    Lower estimate of a set function on an open set, with the per-member values.

    :param V: the open set
    :param value: the estimate (max over the family)
    :param values: the value of each member
    :param family: the members
    :param seed: seed of the family
    :param ratio: for the ratio form, the largest ratio (``value = ratio ** sigma``)
    """

    def __init__(
        self,
        V: Optional[OpenSetSpec],
        value: float,
        values: np.ndarray,
        family: List[LipTestFunction],
        seed: int,
        ratio: Optional[float] = None,
    ):
        self.V = V
        self.value = float(value)
        self.values = np.asarray(values, dtype=np.float64)
        self.family = family
        self.seed = seed
        self.ratio = ratio

    @property
    def family_size(self) -> int:
        return len(self.family)

    @property
    def witness_index(self) -> Optional[int]:
        return None if len(self.values) == 0 else int(np.argmax(self.values))

    @property
    def best(self) -> Optional[LipTestFunction]:
        return None if self.witness_index is None else self.family[self.witness_index]

    def witnesses(self, top: int = 5) -> List[Dict[str, Any]]:
        """
        The ``top`` best members with their values and provenance.
        """
        order = np.argsort(-self.values, kind="stable")[:top]
        descriptions = describe_family([self.family[index] for index in order])
        for index, description in zip(order, descriptions):
            description.update(index=int(index), value=float(self.values[index]))
        return descriptions

    def to_dict(self) -> Dict[str, Any]:
        return {
            "set": None if self.V is None else self.V.describe(),
            "value": self.value,
            "ratio": self.ratio,
            "family_size": self.family_size,
            "seed": self.seed,
            "witnesses": self.witnesses(),
        }


def _estimator_domain(domain: Domain, n_samples: Optional[int]) -> Domain:
    n_samples = min(domain.n_samples, ESTIMATOR_SAMPLES) if n_samples is None else n_samples
    return domain if n_samples == domain.n_samples else domain.with_samples(n_samples)


def pullback_sample(phi: GroupMap, points: np.ndarray, h: float) -> StencilSample:
    # the identity keeps the closed-form leaf gradients
    transform = None if isinstance(phi, IdentityMap) else phi
    return HorizontalStencil(phi.source, h=h, transform=transform, target=phi.target).sample(points)


def pullback_gradient_norms(u: LipTestFunction, sample: StencilSample) -> np.ndarray:
    _, gradient = u.value_and_gradient(sample)
    return np.linalg.norm(gradient.value, axis=-1)


def _family(phi: GroupMap, V: Optional[OpenSetSpec], budget: int, seed: int, points: np.ndarray) -> List[LipTestFunction]:
    constrained = V is not None and V.kind != SetKind.WHOLE
    net_points = None if constrained else phi(points[:256])
    return family_generate(as_target(phi.target), V, budget=budget, seed=seed, net_points=net_points)


def phi_estimate(
    phi: GroupMap,
    V: Optional[OpenSetSpec],
    q: float,
    domain: Domain,
    budget: int = 256,
    seed: int = 0,
    h: Optional[float] = None,
    family: Optional[List[LipTestFunction]] = None,
    n_samples: Optional[int] = None,
) -> SetFunctionEstimate:
    """
    ``Phi^(V) = max_u int_Omega |grad_h(u o phi)|^q`` over an admissible family for ``V``.

    :param phi: the map ``Omega -> Y``
    :param V: the open set (None for ``Y``, where members carry no support condition)
    :param q: exponent in ``[1, inf)``
    :param domain: the source domain ``Omega`` and its quadrature
    :param budget: family size
    :param seed: random seed of the family
    :param h: finite-difference step (default: the domain's)
    :param family: the family to use instead of a generated one
    :param n_samples: quadrature size (default: at most 16384 points of the domain)
    :return: the estimate
    """
    if not 1 <= q < np.inf:
        raise ValueError(f"Expected 1 <= q < inf, got q={q}")
    if V is not None and V.kind == SetKind.EMPTY:
        return SetFunctionEstimate(V, 0.0, np.zeros(0), [], seed)
    domain = _estimator_domain(domain, n_samples)
    points = domain.points
    if family is None:
        family = _family(phi, V, budget, seed, points)
    if len(family) == 0 or len(points) == 0:
        if len(family) == 0:
            warnings.warn(f"Empty test function family for {V!r}, the estimate is 0")
        return SetFunctionEstimate(V, 0.0, np.zeros(len(family)), family, seed)
    sample = pullback_sample(phi, points, h or domain.default_step)

    def integral(u: LipTestFunction) -> float:
        return domain.integrate(pullback_gradient_norms(u, sample) ** q).value / u.lipschitz**q if u.lipschitz > 0 else 0.0

    values = np.array(parallel_map(integral, family))
    return SetFunctionEstimate(V, float(np.max(values)), values, family, seed)


def phi_ratio_estimate(
    phi: GroupMap,
    V: Optional[OpenSetSpec],
    p: float,
    q: float,
    domain: Domain,
    target_domain: Optional[Domain] = None,
    budget: int = 256,
    seed: int = 0,
    h: Optional[float] = None,
    family: Optional[List[LipTestFunction]] = None,
    n_samples: Optional[int] = None,
) -> SetFunctionEstimate:
    """
    ``Phi^(V) = (max_u ||u o phi | L1_q(Omega)|| / ||u | L1_p(Omega')||) ** sigma`` with ``1/sigma = 1/q - 1/p``,
    over members vanishing off ``V``. For ``q = p`` the value is the ratio itself.

    :param phi: the homeomorphism ``Omega -> Omega'``
    :param V: the open set (None when the condition ``u = 0`` on ``Omega' \\ V`` is empty)
    :param p: target exponent
    :param q: source exponent, ``1 <= q <= p < inf``
    :param domain: the source domain ``Omega``
    :param target_domain: ``Omega'`` with its quadrature (default: the image ball when ``phi`` maps balls to balls,
        otherwise ``Omega'`` is integrated over ``Omega`` with the Jacobian ``|det D^phi|``)
    :param budget: family size
    :param seed: random seed of the family
    :param h: finite-difference step (default: the domain's)
    :param family: the family to use instead of a generated one
    :param n_samples: quadrature size of both domains
    :return: the estimate, with the best ratio
    """
    if not 1 <= q <= p < np.inf:
        raise ValueError(f"Expected 1 <= q <= p < inf, got q={q}, p={p}")
    sigma = conjugate_exponent(p, q)
    if V is not None and V.kind == SetKind.EMPTY:
        return SetFunctionEstimate(V, 0.0, np.zeros(0), [], seed, ratio=0.0)
    domain = _estimator_domain(domain, n_samples)
    points = domain.points
    h = h or domain.default_step
    if target_domain is None and domain.kind == "ball":
        image = phi.image_ball(domain.ball)
        if image is not None:
            target_domain = Domain.ball_domain(
                phi.target, image.center, image.radius, n_samples=domain.n_samples, seed=domain.seed + 1
            )
    if target_domain is not None:
        target_domain = _estimator_domain(target_domain, n_samples)
        target_points, jacobian, target_integral = target_domain.points, None, target_domain.integrate
    else:
        # change of variables y = phi(x)
        target_points = phi(points)
        jacobian = np.abs(pansu_extend(phi.source, phi.target, horizontal_differential(phi, points, h=h).matrix).det)
        target_integral = domain.integrate
    if family is None:
        family = _family(phi, V, budget, seed, points)
    if len(family) == 0:
        warnings.warn(f"Empty test function family for {V!r}, the estimate is 0")
        return SetFunctionEstimate(V, 0.0, np.zeros(0), family, seed, ratio=0.0)
    source_sample = pullback_sample(phi, points, h)
    target_sample = HorizontalStencil(phi.target, h=h).sample(target_points)

    def ratio(u: LipTestFunction) -> float:
        numerator = domain.integrate(pullback_gradient_norms(u, source_sample) ** q).value ** (1.0 / q)
        integrand = pullback_gradient_norms(u, target_sample) ** p
        if jacobian is not None:
            integrand = integrand * jacobian
        denominator = target_integral(integrand).value ** (1.0 / p)
        return numerator / denominator if denominator > 0 else 0.0

    ratios = np.array(parallel_map(ratio, family))
    best = float(np.max(ratios))
    values = ratios if np.isinf(sigma) else ratios**sigma
    return SetFunctionEstimate(V, float(np.max(values)), values, family, seed, ratio=best)


def _support_separation(first: SetFunctionEstimate, second: SetFunctionEstimate) -> float:
    """
    Lower bound of the distance between the supports of the two best witnesses.
    A point of ``spt u_1`` is at distance ``>= gap_1`` from ``Y \\ V_1``, which contains ``spt u_2``.
    """
    gap_1, gap_2 = first.best.support_gap, second.best.support_gap
    separation = max(gap_1, gap_2)
    if first.V.kind == SetKind.BALL and second.V.kind == SetKind.BALL:
        # supports lie in the closed balls of radii r_i - gap_i
        separation = max(separation, first.V.separation(second.V) + gap_1 + gap_2)
    return separation


def union_family(estimates: Sequence[SetFunctionEstimate]) -> List[LipTestFunction]:
    """
    Disjoint-sum composites of the best witnesses of estimates on pairwise disjoint sets:
    each witness is refined below half the smallest support separation, then the witnesses are added.

    :param estimates: estimates with support-constrained families
    :return: the composite and the refined witnesses
    """
    parts = [estimate for estimate in estimates if estimate.best is not None and estimate.value > 0]
    if len(parts) == 0:
        return []
    for estimate in parts:
        if estimate.best.support_gap is None:
            raise ValueError("Union families need witnesses with a support gap")
    if len(parts) == 1:
        return [parts[0].best]
    separation = min(
        _support_separation(parts[i], parts[j]) for i in range(len(parts)) for j in range(i + 1, len(parts))
    )
    refined = [refine(estimate.best, estimate.V, separation / 2) for estimate in parts]
    total = refined[0]
    for u in refined[1:]:
        total = disjoint_sum(total, u, separation)
    return [total] + refined


class QuasiAdditivityVerdict(NamedTuple):
    passed: bool
    parts_total: float
    union_value: float
    part_values: List[float]
    slack: float


def quasi_additivity_check(
    phi: GroupMap,
    parts: Sequence[OpenSetSpec],
    q: float,
    domain: Domain,
    V: Optional[OpenSetSpec] = None,
    budget: int = 64,
    seed: int = 0,
    h: Optional[float] = None,
    n_samples: Optional[int] = None,
) -> QuasiAdditivityVerdict:
    """
    ``sum_j Phi^(V_j) <= Phi^(V)`` for pairwise disjoint ``V_j`` in ``V``.
    The family for ``V`` is enlarged with the disjoint-sum composites of the witnesses of the ``V_j``,
    which makes the inequality exact (up to summation order) on a shared quadrature.

    :param phi: the map
    :param parts: the disjoint sets
    :param q: exponent
    :param domain: the source domain
    :param V: the containing set (default: the union of the parts)
    :param budget: family size of each estimate
    :param seed: random seed
    :param h: finite-difference step
    :param n_samples: quadrature size
    :return: the verdict
    """
    parts = list(parts)
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            if not parts[i].is_disjoint(parts[j]):
                raise ValueError(f"Sets {i} and {j} are not disjoint")
    domain = _estimator_domain(domain, n_samples)
    estimates = [phi_estimate(phi, part, q, domain, budget=budget, seed=seed, h=h) for part in parts]
    non_empty = [part for part in parts if part.kind != SetKind.EMPTY]
    if V is None:
        V = OpenSetSpec.union(non_empty) if non_empty else OpenSetSpec.empty(phi.target)
    if V.kind == SetKind.EMPTY:
        union_value = 0.0
    else:
        family = _family(phi, V, budget, seed, domain.points) + union_family(estimates)
        union_value = phi_estimate(phi, V, q, domain, seed=seed, h=h, family=family).value
    total = float(sum(estimate.value for estimate in estimates))
    return QuasiAdditivityVerdict(
        passed=total <= union_value * (1 + ADDITIVITY_SLACK) + 1e-300,
        parts_total=total,
        union_value=union_value,
        part_values=[estimate.value for estimate in estimates],
        slack=ADDITIVITY_SLACK,
    )


# Derivatives of set functions
# ----------------------------------------

DomainSetFunction = Callable[[Domain], float]


def set_derivative(
    set_function: DomainSetFunction,
    group,
    x,
    radii: Sequence[float] = (0.2, 0.1, 0.05),
    n_samples: int = 4096,
    seed: int = 0,
) -> SetDerivative:
    """
    ``Phi'(x) = lim Phi(B(x, r)) / |B(x, r)|``, the intercept of the linear fit of the ratios against ``r``
    (the single ratio for one radius).

    :param set_function: a function of ball domains
    :param group: the group
    :param x: the point
    :param radii: the radii
    :param n_samples: quadrature size of each ball
    :param seed: seed of the ball quadratures
    :return: the derivative and the ratios
    """
    radii = np.asarray(radii, dtype=np.float64)
    if radii.ndim != 1 or len(radii) == 0 or np.any(radii <= 0):
        raise ValueError(f"Expected a non-empty list of positive radii, got {radii}")
    ratios = []
    for index, radius in enumerate(radii):
        ball = Domain.ball_domain(group, x, radius, n_samples=n_samples, seed=seed + index)
        ratios.append(set_function(ball) / ball.measure)
    ratios = np.array(ratios)
    value = float(np.polyfit(radii, ratios, 1)[1]) if len(radii) >= 2 else float(ratios[0])
    return SetDerivative(value=value, radii=radii, ratios=ratios)


def integral_set_function(density: Callable[[np.ndarray], np.ndarray]) -> DomainSetFunction:
    """
    ``U -> int_U f``, an absolutely continuous set function.
    """

    def set_function(U: Domain) -> float:
        return U.integrate(np.asarray(density(U.points), dtype=np.float64)).value if not U.is_empty else 0.0

    return set_function


class IntegratedDerivative(NamedTuple):
    integral: float
    standard_error: float
    set_value: float
    passed: bool


def integrated_derivative(
    set_function: DomainSetFunction,
    domain: Domain,
    radius: float = 0.05,
    n_points: int = 64,
    n_samples: int = 2048,
    tolerance: float = 0.05,
    seed: int = 0,
) -> IntegratedDerivative:
    """
    ``int_U Phi' <= Phi(U)``: the derivative at ``n_points`` quadrature points (one radius), integrated by Monte Carlo.

    :param set_function: a function of ball domains
    :param domain: the set ``U``
    :param radius: radius of the derivative balls
    :param n_points: points where the derivative is taken
    :param n_samples: quadrature size of each derivative ball
    :param tolerance: relative tolerance of the inequality
    :param seed: random seed
    :return: both sides and the verdict
    """
    points = domain.with_samples(n_points, seed=seed).points
    derivatives = np.array(
        [
            set_derivative(set_function, domain.group, x, (radius,), n_samples, seed + index).value
            for index, x in enumerate(points)
        ]
    )
    mean, error = float(np.mean(derivatives)), float(np.std(derivatives) / np.sqrt(len(derivatives)))
    integral = domain.measure * mean
    set_value = set_function(domain)
    return IntegratedDerivative(
        integral=integral,
        standard_error=domain.measure * error,
        set_value=set_value,
        passed=integral <= set_value * (1 + tolerance) + 3 * domain.measure * error,
    )
