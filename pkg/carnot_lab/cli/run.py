"""
Verification suites and the experiment runner.

Each suite returns a list of checks (JSON-compatible mappings with a ``pass`` entry);
the report gathers them with the configuration, the calibration constants and the timings.
"""
import os
import time
from typing import Any, Callable, Dict, List, NamedTuple, Optional

import numpy as np

import carnot_lab
from carnot_lab.carnot_core import GroupDescriptor, calibrate_measure, dilate, flow, inverse, measure, multiply
from carnot_lab.cc_metric import ball_region, distance, make_ball
from carnot_lab.cli.config import ExperimentConfig
from carnot_lab.cli.zoo import make_group, make_map
from carnot_lab.common import logger as carnot_logger
from carnot_lab.common.save_util import save_to_json, to_json_compatible
from carnot_lab.common.utils import get_rng, set_random_seed
from carnot_lab.field_calc import (
    Domain,
    PolynomialField,
    abs_val,
    cutoff,
    horizontal_gradient,
    neg_part,
    pos_part,
    seminorm_Lq,
)
from carnot_lab.lipschitz_lab import coordinate_function, family_generate, mcshane_extend, symmetrize, validate_lipschitz
from carnot_lab.map_calc import (
    Automorphism,
    GroupMap,
    distortion_Kp,
    horizontal_differential,
    pansu_extend,
    spatial_jacobian,
)
from carnot_lab.operator_lab import (
    OpenSetSpec,
    quasi_additivity_check,
    verify_prop_qinf,
    verify_theorem_lip,
    verify_theorem_sobolev,
)

SCHEMA_VERSION = 1
KP_TABLE = "kp_samples.csv"


class SuiteContext(NamedTuple):
    config: ExperimentConfig
    group: GroupDescriptor
    domain: Domain
    phi: GroupMap
    output_dir: Optional[str]
    logger: carnot_logger.Logger


def _check(name: str, passed: bool, **values) -> Dict[str, Any]:
    return to_json_compatible(dict(name=name, **values, **{"pass": bool(passed)}))


def _points(ctx: SuiteContext, n: int, stream: int) -> np.ndarray:
    return get_rng(ctx.config.seed, stream).normal(scale=0.5, size=(n, ctx.group.total_dim))


# Suites
# ----------------------------------------


def suite_group_axioms(ctx: SuiteContext) -> List[Dict[str, Any]]:
    g = ctx.group
    a, b, c = (_points(ctx, 256, stream) for stream in (11, 12, 13))
    identity = np.zeros(g.total_dim)
    residuals = {
        "associativity": np.max(np.abs(multiply(g, multiply(g, a, b), c) - multiply(g, a, multiply(g, b, c)))),
        "inverse": np.max(np.abs(multiply(g, a, inverse(g, a)))),
        "identity": np.max(np.abs(multiply(g, a, identity) - a) + np.abs(multiply(g, identity, a) - a)),
        "dilation_homomorphism": np.max(
            np.abs(dilate(g, 1.7, multiply(g, a, b)) - multiply(g, dilate(g, 1.7, a), dilate(g, 1.7, b)))
        ),
        "jacobi": g.jacobi_residual(),
    }
    return [_check(name, value <= 1e-10, residual=float(value)) for name, value in residuals.items()]


def suite_metric(ctx: SuiteContext) -> List[Dict[str, Any]]:
    g, config = ctx.group, ctx.config
    closed_form = g.closed_form is not None
    checks = []
    relative_norm_error = g.measure_norm_error / g.measure_norm
    for index, radius in enumerate((0.5, 1.0, 2.0)):
        ball = make_ball(g, np.zeros(g.total_dim), radius)
        estimate = measure(g, ball_region(g, ball), n_samples=config.n_samples, seed=config.seed + index)
        expected = radius**g.homogeneous_dim
        error = np.hypot(estimate.standard_error, expected * relative_norm_error)
        checks.append(
            _check(
                f"ball_measure_r{radius:g}",
                abs(estimate.value - expected) <= 3 * error + 1e-12,
                estimate=estimate.value,
                expected=expected,
                standard_error=error,
            )
        )
    x = _points(ctx, 8, 21)
    times = np.array([-0.7, 0.3, 1.1])
    worst = 0.0
    for t in times:
        worst = max(worst, float(np.max(np.abs(distance(g, flow(g, 0, t, x), x) - abs(t)) / abs(t))))
    checks.append(_check("axis_distance", worst <= (1e-6 if closed_form else 1e-2), relative_error=worst))
    n_triples = 1000 if closed_form else 20
    a, b, c = (_points(ctx, n_triples, stream) for stream in (22, 23, 24))
    ab, bc, ac = distance(g, a, b), distance(g, b, c), distance(g, a, c)
    excess = float(np.max(ac - ab - bc))
    tolerance = 1e-9 if closed_form else 1e-3
    checks.append(_check("triangle_inequality", excess <= tolerance, worst_excess=excess, n_triples=n_triples))
    asymmetry = float(np.max(np.abs(ab - distance(g, b, a))))
    checks.append(_check("symmetry", asymmetry <= tolerance, residual=asymmetry))
    return checks


def suite_field_calculus(ctx: SuiteContext) -> List[Dict[str, Any]]:
    g = ctx.group
    first, second = np.eye(g.total_dim, dtype=int)[[0, 1 % g.total_dim]]
    u = PolynomialField(
        g, {tuple(first): 1.0, tuple(first + second): 0.5, tuple(np.zeros(g.total_dim, dtype=int)): -0.25}
    )
    points = _points(ctx, 512, 31)
    values = u(points)
    tree_u = horizontal_gradient(u, points, h=1e-4, use_tree=True).value
    composites = {
        "pos_part": (pos_part(u), (values > 0).astype(np.float64), np.abs(values)),
        "neg_part": (neg_part(u), -(values < 0).astype(np.float64), np.abs(values)),
        "abs": (abs_val(u), np.sign(values), np.abs(values)),
        "cutoff": (cutoff(u, 0.5), (np.abs(values) < 0.5).astype(np.float64), np.abs(np.abs(values) - 0.5)),
    }
    checks = []
    for name, (field, factor, kink_distance) in composites.items():
        tree = horizontal_gradient(field, points, h=1e-4, use_tree=True).value
        exact = float(np.max(np.abs(tree - factor[:, None] * tree_u)))
        away = kink_distance > 1e-2
        differences = horizontal_gradient(field, points[away], h=1e-4).value
        mismatch = float(np.max(np.abs(tree[away] - differences), initial=0.0))
        checks.append(
            _check(f"chain_rule_{name}", exact == 0.0 and mismatch <= 1e-4, identity_residual=exact, fd_mismatch=mismatch)
        )
    domain = ctx.domain.with_samples(min(4096, ctx.domain.n_samples))
    full = seminorm_Lq(u, domain, 2)
    levels = (1.0, 2.0, 4.0, 8.0)
    seminorms = [seminorm_Lq(cutoff(u, level), domain, 2).value for level in levels]
    monotone = all(low <= high + 1e-12 for low, high in zip(seminorms[:-1], seminorms[1:]))
    bounded = seminorms[-1] <= full.value + full.error
    checks.append(_check("cutoff_seminorms", monotone and bounded, levels=levels, seminorms=seminorms, limit=full.value))
    return checks


def suite_lipschitz_lab(ctx: SuiteContext) -> List[Dict[str, Any]]:
    g, config, domain = ctx.group, ctx.config, ctx.domain
    if domain.kind == "ball":
        V = OpenSetSpec.ball(g, domain.ball.center, domain.ball.radius)
    else:
        V = OpenSetSpec.whole(g)
    checks = []
    family = family_generate(g, V, budget=min(32, config.family_budget), seed=config.seed, logger=ctx.logger)
    failures, worst = [], 0.0
    for index, u in enumerate(family):
        report = validate_lipschitz(u, g, seed=config.seed + index)
        worst = max(worst, report.max_quotient / max(report.bound, 1e-300))
        if not report.passed:
            failures.append(index)
    checks.append(_check("family_validation", not failures, family_size=len(family), failures=failures, worst=worst))
    times = np.linspace(-1.0, 1.0, 201)
    line = np.zeros((len(times), g.total_dim))
    line[:, 0] = times
    folded = symmetrize(coordinate_function(g, 0), 1.0)(line)
    closed_form = np.abs(1.0 - np.abs(times - 0.5)) - 0.5
    residual = float(np.max(np.abs(folded - closed_form)))
    checks.append(_check("symmetrization_identity", residual <= 1e-15, residual=residual))
    net = V.sample(16, seed=config.seed)
    values = 0.5 * np.asarray(distance(g, net, net[0]))
    extension = mcshane_extend(g, net, values)
    interpolation = float(np.max(np.abs(extension(net) - values)))
    report = validate_lipschitz(extension, g, seed=config.seed)
    checks.append(
        _check(
            "mcshane_extension",
            interpolation <= 1e-12 and report.passed,
            interpolation=interpolation,
            worst=report.max_quotient,
        )
    )
    return checks


def suite_distortion(ctx: SuiteContext) -> List[Dict[str, Any]]:
    g, config, phi, domain = ctx.group, ctx.config, ctx.phi, ctx.domain
    p = config.p if np.isfinite(config.p) else float(g.homogeneous_dim)
    q = config.q if np.isfinite(config.p) and config.q < config.p else None
    report = distortion_Kp(phi, domain, p, q)
    if ctx.output_dir is not None:
        report.to_frame().to_csv(os.path.join(ctx.output_dir, KP_TABLE), index=False, float_format="%.12g")
    verdict = report.finite_distortion
    checks = [
        _check(
            "finite_distortion",
            verdict.passed,
            worst=verdict.worst,
            zero_set=verdict.n_zero_set,
            n_violations=len(verdict.violations),
            violations=verdict.violations[:10],
        ),
        _check("kp_norm", True, **report.to_dict()),
    ]
    center = domain.ball.center if domain.kind == "ball" else (domain.low + domain.high) / 2
    differential = horizontal_differential(phi, center)
    pansu = pansu_extend(phi.source, phi.target, differential.matrix)
    if isinstance(phi, Automorphism):
        checks.append(_check("homomorphism_residual", pansu.residual < 1e-8, residual=pansu.residual))
    if phi.inverse is not None and abs(pansu.det) > 0:
        jacobian = spatial_jacobian(phi, center, seed=config.seed)
        checks.append(
            _check(
                "spatial_jacobian",
                jacobian.relative_gap is not None and jacobian.relative_gap <= 0.05,
                value=jacobian.value,
                det=jacobian.det,
                relative_gap=jacobian.relative_gap,
            )
        )
    return checks


def suite_theorem_lip(ctx: SuiteContext) -> List[Dict[str, Any]]:
    config, phi, domain = ctx.config, ctx.phi, ctx.domain
    verdict = verify_theorem_lip(phi, domain, config.q, budget=config.family_budget, seed=config.seed)
    checks = [dict(name="norm_equality", **verdict.to_dict())]
    if domain.kind == "ball" and phi.inverse is not None and phi.inverse_lipschitz is not None:
        # two source balls at distance R, radius R / 4
        radius = domain.ball.radius
        centers = [flow(phi.source, 0, t, domain.ball.center) for t in (-radius / 2, radius / 2)]
        parts = [OpenSetSpec.image(phi, center, radius / 4) for center in centers]
        if parts[0].is_disjoint(parts[1]):
            additivity = quasi_additivity_check(
                phi, parts, config.q, domain, budget=max(8, config.family_budget // 4), seed=config.seed
            )
            checks.append(_check("quasi_additivity", additivity.passed, **additivity._asdict()))
    return checks


def suite_theorem_sobolev(ctx: SuiteContext) -> List[Dict[str, Any]]:
    config = ctx.config
    verdict = verify_theorem_sobolev(ctx.phi, ctx.domain, config.p, config.q, budget=config.family_budget, seed=config.seed)
    return [dict(name="norm_equality", **verdict.to_dict())]


def suite_prop_qinf(ctx: SuiteContext) -> List[Dict[str, Any]]:
    config = ctx.config
    verdict = verify_prop_qinf(ctx.phi, ctx.domain, budget=min(64, config.family_budget), seed=config.seed)
    return [dict(name="norm_equality", **verdict.to_dict())]


SUITE_RUNNERS: Dict[str, Callable[[SuiteContext], List[Dict[str, Any]]]] = {
    "group-axioms": suite_group_axioms,
    "metric": suite_metric,
    "field-calculus": suite_field_calculus,
    "lipschitz-lab": suite_lipschitz_lab,
    "distortion": suite_distortion,
    "lip-norm": suite_theorem_lip,
    "sobolev-norm": suite_theorem_sobolev,
    "lip-sup-norm": suite_prop_qinf,
}


# Runner
# ----------------------------------------


class Report(object):
    """
    Outcome of an experiment.

    :param config: the configuration that was run
    :param suites: checks of each suite, in run order
    :param calibration: normalization constants used
    :param timings: wall-clock seconds per suite
    """

    def __init__(
        self,
        config: ExperimentConfig,
        suites: Dict[str, List[Dict[str, Any]]],
        calibration: Dict[str, Any],
        timings: Dict[str, float],
    ):
        self.config = config
        self.suites = suites
        self.calibration = calibration
        self.timings = timings

    @property
    def passed(self) -> bool:
        return all(check["pass"] for checks in self.suites.values() for check in checks)

    def failures(self) -> List[str]:
        return [f"{suite}/{check['name']}" for suite, checks in self.suites.items() for check in checks if not check["pass"]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "version": carnot_lab.__version__,
            "config": self.config.to_dict(),
            "calibration": self.calibration,
            "suites": {
                suite: {"pass": all(check["pass"] for check in checks), "checks": checks}
                for suite, checks in self.suites.items()
            },
            "pass": self.passed,
            "timings": self.timings,
        }


def build_domain(config: ExperimentConfig, group: GroupDescriptor) -> Domain:
    spec = config.domain
    if spec.kind == "ball":
        center = np.zeros(group.total_dim) if spec.center is None else spec.center
        return Domain.ball_domain(group, center, spec.radius, n_samples=spec.n_samples, seed=config.seed)
    return Domain.box_domain(group, spec.low, spec.high, n_samples=spec.n_samples, seed=config.seed)


def run(config: ExperimentConfig, output_dir: Optional[str] = None, verbose: int = 0) -> Report:
    """
    Run the suites of a configuration and write ``report.json`` (and the ``K_p`` table) to ``output_dir``.

    :param config: a validated configuration
    :param output_dir: folder of the report (default: ``config.output``), nothing is written when both are None
    :param verbose: 0 silent, 1 suite verdicts, 2 every recorded value
    :return: the report
    """
    config.validate()
    set_random_seed(config.seed)
    output_dir = output_dir or config.output
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
    formats = (["stdout"] if verbose >= 2 else []) + (["log", "json"] if output_dir is not None else [])
    logger = carnot_logger.configure(output_dir or None, formats) if formats else carnot_logger.Logger(None, [])
    logger.set_level(carnot_logger.DEBUG if verbose >= 2 else carnot_logger.INFO)

    group = make_group(config.group)
    if config.calibration_samples is not None and not group.is_calibrated:
        calibrate_measure(group, n_samples=config.calibration_samples, seed=config.seed, verbose=verbose)
    phi = make_map(group, config.map.name, config.map.params)
    domain = build_domain(config, group)
    ctx = SuiteContext(config, group, domain, phi, output_dir, logger)

    suites, timings = {}, {}
    for suite in config.suites:
        start = time.perf_counter()
        checks = SUITE_RUNNERS[suite](ctx)
        timings[suite] = time.perf_counter() - start
        suites[suite] = checks
        for check in checks:
            logger.record_verdict(suite, check["name"], check)
        logger.dump()
        if verbose >= 1:
            verdict = "PASS" if all(check["pass"] for check in checks) else "FAIL"
            print(f"{suite:<16} {verdict}  ({timings[suite]:.1f} s)")
    # only what the suites used, reading measure_norm would start a calibration
    calibration = {"group": group.name, "measure_norm": None, "measure_norm_error": None}
    if group.is_calibrated:
        calibration.update(measure_norm=group.measure_norm, measure_norm_error=group.measure_norm_error)
    report = Report(config, suites, to_json_compatible(calibration), timings)
    if output_dir is not None:
        save_to_json(os.path.join(output_dir, "report.json"), report.to_dict())
    logger.close()
    return report
