"""
Group descriptor files.

A descriptor is a JSON object::

    {
        "name": "engel",
        "step": 3,
        "layer_dims": [2, 1, 1],
        "structure_constants": [[0, 1, 2, 1.0], [0, 2, 3, 1.0]],
        "measure_norm": 12.3
    }

``structure_constants`` lists sparse triplets ``[i, j, k, value]`` (0-based indices over the graded basis)
meaning ``[X_i, X_j] = value X_k``; the antisymmetric partner ``[X_j, X_i]`` is filled in.
``measure_norm`` is optional.
"""
import json
import pathlib
from typing import Any, Dict, Optional, Union

import numpy as np

from carnot_lab.carnot_core.groups import DescriptorError, GroupDescriptor, heisenberg


def descriptor_from_dict(data: Dict[str, Any], source: Optional[str] = None) -> GroupDescriptor:
    """
    Build and validate a group from its JSON description.

    :param data: the parsed JSON object
    :param source: name of the file, used in error messages
    :return: the group
    """
    if not isinstance(data, dict):
        raise DescriptorError(f"expected a JSON object, got {type(data).__name__}", source)
    unknown = set(data) - {"name", "step", "layer_dims", "structure_constants", "measure_norm"}
    if unknown:
        raise DescriptorError(f"unknown fields {sorted(unknown)}", source)
    for field in ("layer_dims", "structure_constants"):
        if field not in data:
            raise DescriptorError(f"missing field '{field}'", source)

    layer_dims = data["layer_dims"]
    if not isinstance(layer_dims, list) or not all(isinstance(dim, int) and dim > 0 for dim in layer_dims):
        raise DescriptorError(f"field 'layer_dims' must be a list of positive integers, got {layer_dims!r}", source)
    if not layer_dims:
        raise DescriptorError("field 'layer_dims' is empty", source)
    step = data.get("step", len(layer_dims))
    if step != len(layer_dims):
        raise DescriptorError(f"field 'step' is {step} but 'layer_dims' has {len(layer_dims)} layers", source)

    n_total = sum(layer_dims)
    constants = np.zeros((n_total, n_total, n_total))
    triplets = data["structure_constants"]
    if not isinstance(triplets, list):
        raise DescriptorError("field 'structure_constants' must be a list of [i, j, k, value] entries", source)
    for position, entry in enumerate(triplets):
        where = f"field 'structure_constants[{position}]'"
        if not (isinstance(entry, list) and len(entry) == 4):
            raise DescriptorError(f"{where} must be [i, j, k, value], got {entry!r}", source)
        i, j, k, value = entry
        if not all(isinstance(index, int) and 0 <= index < n_total for index in (i, j, k)):
            raise DescriptorError(f"{where} has indices outside [0, {n_total - 1}]: {entry!r}", source)
        if not isinstance(value, (int, float)):
            raise DescriptorError(f"{where} has a non-numeric value {value!r}", source)
        if i == j and value != 0:
            raise DescriptorError(f"{where} sets [X_{i}, X_{i}] to a nonzero value", source)
        for (a, b, sign) in ((i, j, 1.0), (j, i, -1.0)):
            previous = constants[a, b, k]
            if previous != 0 and previous != sign * value:
                raise DescriptorError(f"{where} conflicts with an earlier entry for [X_{a}, X_{b}]", source)
            constants[a, b, k] = sign * value

    measure_norm = data.get("measure_norm")
    if measure_norm is not None and not (isinstance(measure_norm, (int, float)) and measure_norm > 0):
        raise DescriptorError(f"field 'measure_norm' must be a positive number, got {measure_norm!r}", source)

    closed_form = None
    if step == 1:
        closed_form = "euclidean"
    elif step == 2 and layer_dims[0] % 2 == 0 and layer_dims[1] == 1:
        if np.array_equal(constants, heisenberg(layer_dims[0] // 2).structure_constants):
            closed_form = "heisenberg"
    try:
        return GroupDescriptor(
            layer_dims,
            constants,
            name=str(data.get("name", "custom")),
            measure_norm=measure_norm,
            closed_form=closed_form,
        )
    except DescriptorError as error:
        raise DescriptorError(str(error), source) from error


def load_descriptor(path: Union[str, pathlib.Path]) -> GroupDescriptor:
    """
    Load a group descriptor file.
    Syntax errors are reported as ``file:line:col``.

    :param path: path to the JSON file
    :return: the validated group
    """
    path = pathlib.Path(path)
    try:
        text = path.read_text()
    except OSError as error:
        raise DescriptorError(f"cannot read descriptor: {error.strerror}", str(path)) from error
    try:
        data = json.loads(text)
    except json.JSONDecodeError as error:
        raise DescriptorError(error.msg, f"{path}:{error.lineno}:{error.colno}") from error
    return descriptor_from_dict(data, source=str(path))
