"""
Catalog of the built-in groups, maps and fields, with their parameter schemas.
"""
import pathlib
from typing import Any, Callable, Dict

import numpy as np

from carnot_lab.carnot_core import BUILTIN_GROUPS, GroupDescriptor, get_group, load_descriptor
from carnot_lab.cli.config import ConfigError
from carnot_lab.field_calc import CoordinateField, DistanceField, PolynomialField, ScalarField, bump_field
from carnot_lab.map_calc import (
    Automorphism,
    ComposedMap,
    ConstantMap,
    Dilation,
    GroupMap,
    IdentityMap,
    LeftTranslation,
    Projection,
    RadialSquash,
    Shear,
)

GROUP_DESCRIPTIONS = {
    "euclidean-1": "R^1, layers [1]",
    "euclidean-2": "R^2, layers [2]",
    "euclidean-3": "R^3, layers [3]",
    "heisenberg-1": "Heisenberg group H^1, layers [2, 1], [X, Y] = Z",
    "heisenberg-2": "Heisenberg group H^2, layers [4, 1]",
    "engel": "Engel group, layers [2, 1, 1], [X1, X2] = X3, [X1, X3] = X4",
}

# parameter -> description
MAP_SCHEMAS: Dict[str, Dict[str, str]] = {
    "identity": {},
    "translation": {"offset": "point of the group, phi(x) = offset * x"},
    "dilation": {"lambda": "positive factor, layer k scaled by lambda^k"},
    "shear": {"a": "Heisenberg shear X1 -> X1 + a Y1"},
    "automorphism": {"horizontal": "n x n horizontal block, row i is the image of X_i"},
    "composition": {"outer": "map applied second", "inner": "map applied first"},
    "constant": {"value": "point of the group (default: the origin)"},
    "radial-squash": {"a": "radius of the collapsed Euclidean ball"},
    "projection": {},
}

FIELD_SCHEMAS: Dict[str, Dict[str, str]] = {
    "coordinate": {"index": "exponential coordinate"},
    "distance": {"center": "point of the group"},
    "bump": {"center": "point of the group", "radius": "positive radius, max(r - d(x, c), 0)"},
    "polynomial": {"terms": "list of [exponents, coefficient] in exponential coordinates"},
}


def make_group(name: str) -> GroupDescriptor:
    """
    Built-in group by name, or a descriptor file (a path ending in ``.json``).
    """
    if name.endswith(".json") or pathlib.Path(name).exists():
        return load_descriptor(name)
    try:
        return get_group(name)
    except KeyError as error:
        raise ConfigError([str(error.args[0])]) from None


def _require(params: Dict[str, Any], key: str, kind: str) -> Any:
    if key not in params:
        raise ConfigError([f"map {kind!r} needs the parameter {key!r}"])
    return params[key]


def make_map(group: GroupDescriptor, name: str, params: Dict[str, Any]) -> GroupMap:
    """
    Build a zoo map on ``group``.

    :param group: source (and target) group
    :param name: zoo name, see :data:`MAP_SCHEMAS`
    :param params: its parameters
    :return: the map
    """
    builders: Dict[str, Callable[[], GroupMap]] = {
        "identity": lambda: IdentityMap(group),
        "translation": lambda: LeftTranslation(group, _require(params, "offset", name)),
        "dilation": lambda: Dilation(group, float(_require(params, "lambda", name))),
        "shear": lambda: Shear(group, float(_require(params, "a", name))),
        "automorphism": lambda: Automorphism(group, np.array(_require(params, "horizontal", name), dtype=np.float64)),
        "composition": lambda: ComposedMap(
            _nested_map(group, _require(params, "outer", name)), _nested_map(group, _require(params, "inner", name))
        ),
        "constant": lambda: ConstantMap(group, value=params.get("value")),
        "radial-squash": lambda: RadialSquash(group, float(_require(params, "a", name))),
        "projection": lambda: Projection(group),
    }
    if name not in builders:
        raise ConfigError([f"unknown map {name!r}, available: {sorted(builders)}"])
    unknown = sorted(set(params) - set(MAP_SCHEMAS[name]))
    if unknown:
        raise ConfigError([f"unknown parameters {unknown} for map {name!r}"])
    try:
        return builders[name]()
    except ValueError as error:
        if isinstance(error, ConfigError):
            raise
        raise ConfigError([f"map {name!r}: {error}"]) from None


def _nested_map(group: GroupDescriptor, spec: Any) -> GroupMap:
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError([f"expected a map object with a 'name', got {spec!r}"])
    return make_map(group, spec["name"], spec.get("params", {}))


def make_field(group: GroupDescriptor, name: str, params: Dict[str, Any]) -> ScalarField:
    """
    Build a zoo field on ``group``, see :data:`FIELD_SCHEMAS`.
    """
    if name == "coordinate":
        return CoordinateField(group, int(params.get("index", 0)))
    if name == "distance":
        return DistanceField(group, params.get("center", np.zeros(group.total_dim)))
    if name == "bump":
        return bump_field(group, params.get("center", np.zeros(group.total_dim)), float(params.get("radius", 1.0)))
    if name == "polynomial":
        return PolynomialField(group, {tuple(exponents): float(coefficient) for exponents, coefficient in params["terms"]})
    raise ConfigError([f"unknown field {name!r}, available: {sorted(FIELD_SCHEMAS)}"])


def list_zoo() -> Dict[str, Any]:
    """
    The catalog: groups, maps and fields with their parameter schemas (sorted, hence stable).
    """
    return {
        "groups": {name: GROUP_DESCRIPTIONS.get(name, "") for name in sorted(BUILTIN_GROUPS)},
        "maps": {name: dict(sorted(MAP_SCHEMAS[name].items())) for name in sorted(MAP_SCHEMAS)},
        "fields": {name: dict(sorted(FIELD_SCHEMAS[name].items())) for name in sorted(FIELD_SCHEMAS)},
    }


def format_zoo(catalog: Dict[str, Any]) -> str:
    lines = []
    for section in ("groups", "maps", "fields"):
        lines.append(f"{section}:")
        for name, entry in catalog[section].items():
            if isinstance(entry, str):
                lines.append(f"  {name:<16} {entry}")
                continue
            lines.append(f"  {name}")
            for key, description in entry.items():
                lines.append(f"    {key:<12} {description}")
    return "\n".join(lines)
