"""
Experiment configurations: JSON files parsed into :class:`ExperimentConfig` and validated.
"""
import dataclasses
import json
import pathlib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np

SUITES = (
    "group-axioms",
    "metric",
    "field-calculus",
    "lipschitz-lab",
    "distortion",
    "lip-norm",
    "sobolev-norm",
    "lip-sup-norm",
)


class ConfigError(ValueError):
    """
    Invalid experiment configuration.

    :param problems: one message per offending field
    :param source: the file the configuration was read from
    """

    def __init__(self, problems: List[str], source: Optional[str] = None):
        self.problems = list(problems)
        self.source = source
        prefix = f"{source}: " if source else ""
        super(ConfigError, self).__init__(prefix + "; ".join(self.problems))


@dataclass
class DomainConfig:
    kind: str = "ball"
    center: Optional[List[float]] = None
    radius: float = 1.0
    low: Optional[List[float]] = None
    high: Optional[List[float]] = None
    n_samples: int = 2**14


@dataclass
class MapConfig:
    name: str = "identity"
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    """
    One experiment: a group, a domain, a map, the exponents, budgets and the suites to run.

    :param group: built-in group name or path to a descriptor file
    :param domain: the domain ``Omega``
    :param map: the map, a zoo name with its parameters (``composition`` takes ``outer`` and ``inner`` maps)
    :param p: target exponent (``inf`` for Lipschitz targets)
    :param q: source exponent, ``1 <= q <= p``
    :param seed: the seed of every stochastic step
    :param suites: suites to run, in order
    :param family_budget: size of the test-function families
    :param n_samples: default quadrature size
    :param calibration_samples: Monte Carlo size of the measure calibration (default: the library default)
    :param name: label of the experiment
    :param output: folder of the report
    """

    group: str
    seed: int
    domain: DomainConfig = field(default_factory=DomainConfig)
    map: MapConfig = field(default_factory=MapConfig)
    p: float = float("inf")
    q: float = 1.0
    suites: List[str] = field(default_factory=list)
    family_budget: int = 256
    n_samples: int = 2**14
    calibration_samples: Optional[int] = None
    name: str = "experiment"
    output: Optional[str] = None

    def validate(self) -> None:
        """
        :raises ConfigError: listing every invalid field
        """
        problems = []
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            problems.append(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not 1 <= self.q <= self.p:
            problems.append(f"exponents must satisfy 1 <= q <= p, got q={self.q}, p={self.p}")
        if "sobolev-norm" in self.suites and np.isinf(self.p):
            problems.append("suite sobolev-norm needs a finite p")
        if "lip-norm" in self.suites and np.isinf(self.q):
            problems.append("suite lip-norm needs a finite q, use lip-sup-norm for q = inf")
        unknown = [suite for suite in self.suites if suite not in SUITES]
        if unknown:
            problems.append(f"unknown suites {unknown}, available: {list(SUITES)}")
        if self.calibration_samples is not None and not self.calibration_samples > 0:
            problems.append(f"calibration_samples must be positive, got {self.calibration_samples}")
        for key in ("family_budget", "n_samples"):
            if not getattr(self, key) > 0:
                problems.append(f"{key} must be positive, got {getattr(self, key)}")
        if self.domain.kind not in ("ball", "box"):
            problems.append(f"domain.kind must be 'ball' or 'box', got {self.domain.kind!r}")
        elif self.domain.kind == "ball" and not self.domain.radius > 0:
            problems.append(f"domain.radius must be positive, got {self.domain.radius}")
        elif self.domain.kind == "box" and (self.domain.low is None or self.domain.high is None):
            problems.append("a box domain needs 'low' and 'high'")
        if not self.domain.n_samples > 0:
            problems.append(f"domain.n_samples must be positive, got {self.domain.n_samples}")
        if problems:
            raise ConfigError(problems)

    def scaled(self, budget_scale: float) -> "ExperimentConfig":
        """
        Same experiment with budgets (family sizes and quadrature sizes) multiplied by ``budget_scale``.
        """
        if not budget_scale > 0:
            raise ConfigError([f"budget scale must be positive, got {budget_scale}"])
        return dataclasses.replace(
            self,
            family_budget=max(1, int(round(self.family_budget * budget_scale))),
            n_samples=max(1, int(round(self.n_samples * budget_scale))),
            domain=dataclasses.replace(self.domain, n_samples=max(1, int(round(self.domain.n_samples * budget_scale)))),
        )

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        for key in ("p", "q"):
            if np.isinf(data[key]):
                data[key] = "inf"
        return data


def _exponent(value: Any, key: str, problems: List[str]) -> float:
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return float("inf")
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    problems.append(f"{key} must be a number or 'inf', got {value!r}")
    return float("nan")


def config_from_dict(data: Dict[str, Any], source: Optional[str] = None) -> ExperimentConfig:
    """
    Parse and validate a configuration.

    :param data: the decoded JSON object
    :param source: where the data comes from, for the messages
    :return: the configuration
    :raises ConfigError: on missing, unknown or invalid fields
    """
    if not isinstance(data, dict):
        raise ConfigError([f"expected a JSON object, got {type(data).__name__}"], source)
    problems = []
    known = {item.name for item in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        problems.append(f"unknown fields {unknown}")
    for key in ("group", "seed"):
        if key not in data:
            problems.append(f"missing field {key!r}")
    kwargs = {key: value for key, value in data.items() if key in known}
    for key in ("p", "q"):
        if key in kwargs:
            kwargs[key] = _exponent(kwargs[key], key, problems)
    try:
        if "domain" in kwargs:
            kwargs["domain"] = DomainConfig(**kwargs["domain"])
        if "map" in kwargs:
            kwargs["map"] = MapConfig(**kwargs["map"])
    except TypeError as error:
        problems.append(str(error))
    if problems:
        raise ConfigError(problems, source)
    config = ExperimentConfig(**kwargs)
    try:
        config.validate()
    except ConfigError as error:
        raise ConfigError(error.problems, source) from None
    return config


def load_config(path: Union[str, pathlib.Path]) -> ExperimentConfig:
    """
    Read a JSON configuration file.

    :param path: the file
    :return: the validated configuration
    :raises ConfigError: when the file cannot be read or is invalid
    """
    path = pathlib.Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as error:
        raise ConfigError([f"cannot read the file: {error.strerror}"], str(path)) from None
    except json.JSONDecodeError as error:
        raise ConfigError([f"invalid JSON at line {error.lineno} column {error.colno}: {error.msg}"], str(path)) from None
    return config_from_dict(data, str(path))


def bundled_config(name: str) -> pathlib.Path:
    """
    Path of a configuration shipped with the package (``carnot_lab/configs``).
    """
    folder = pathlib.Path(__file__).resolve().parent.parent / "configs"
    path = folder / (name if name.endswith(".json") else f"{name}.json")
    if not path.exists():
        available = sorted(item.name for item in folder.glob("*.json"))
        raise ConfigError([f"no bundled configuration {name!r}, available: {available}"])
    return path
