"""
Serialization helpers for reports, verdicts and family descriptions.
Everything written by the library goes through :func:`data_to_json` so that two runs
with the same configuration produce byte-identical files.
"""
import functools
import io
import json
import math
import pathlib
import warnings
from typing import Any, Dict, Optional, Union

import numpy as np


def to_json_compatible(item: Any) -> Any:
    """
    Recursively convert numpy scalars and arrays, tuples, NamedTuples and dataclass-like objects
    (anything exposing ``to_dict``) to plain JSON types.
    Non-finite floats are kept as strings ("inf", "-inf", "nan") since JSON has no literal for them.

    :param item: the object to convert
    :return: an object made of dict, list, str, int, float, bool and None
    """
    if hasattr(item, "to_dict"):
        return to_json_compatible(item.to_dict())
    if isinstance(item, dict):
        return {str(key): to_json_compatible(value) for key, value in item.items()}
    if hasattr(item, "_asdict"):
        return to_json_compatible(item._asdict())
    if isinstance(item, (list, tuple)):
        return [to_json_compatible(value) for value in item]
    if isinstance(item, np.ndarray):
        return to_json_compatible(item.tolist())
    if isinstance(item, (bool, np.bool_)):
        return bool(item)
    if isinstance(item, (int, np.integer)):
        return int(item)
    if isinstance(item, (float, np.floating)):
        value = float(item)
        if math.isfinite(value):
            return value
        return str(value)
    if item is None or isinstance(item, str):
        return item
    raise TypeError(f"Object of type {type(item).__name__} cannot be converted to JSON: {item!r}")


def data_to_json(data: Dict[str, Any]) -> str:
    """
    Turn data (verdicts, reports, descriptions) into a JSON string.
    Keys are sorted and floats use their shortest round-trip representation,
    so the output only depends on the values.

    :param data: Dictionary of values to serialize
    :return: JSON string of the data
    """
    return json.dumps(to_json_compatible(data), indent=4, sort_keys=True)


def json_to_data(json_string: str) -> Dict[str, Any]:
    """
    Turn JSON serialization back into a dictionary.
    The string encodings of non-finite floats are turned back into floats.

    :param json_string: JSON string of the data
    :return: Loaded data
    """

    def _restore(item: Any) -> Any:
        if isinstance(item, dict):
            return {key: _restore(value) for key, value in item.items()}
        if isinstance(item, list):
            return [_restore(value) for value in item]
        if item in ("inf", "-inf", "nan"):
            return float(item)
        return item

    return _restore(json.loads(json_string))


@functools.singledispatch
def open_path(path: Union[str, pathlib.Path, io.TextIOBase], mode: str, verbose: int = 0, suffix: Optional[str] = None):
    """
    Opens a path for reading or writing with a preferred suffix.
    If the provided path is already a text stream, it checks that it can be used with the mode.

    If the mode is "write" and the parent folder does not exist, it is created.

    :param path: the path to open.
    :param mode: how to open the file. "w"|"write" for writing, "r"|"read" for reading.
    :param verbose: Verbosity level, 0 means only warnings, 2 means debug information.
    :param suffix: The preferred suffix. If mode is "w" and the path has no suffix, it is added.
        If mode is "r" and the path is not found, we attempt to open the path with the suffix.
    :return: an opened text stream
    """
    if not isinstance(path, io.TextIOBase):
        raise TypeError("Path parameter has invalid type.", io.TextIOBase)
    if path.closed:
        raise ValueError("File stream is closed.")
    mode = mode.lower()
    try:
        mode = {"write": "w", "read": "r", "w": "w", "r": "r"}[mode]
    except KeyError:
        raise ValueError("Expected mode to be either 'w' or 'r'.")
    if ("w" == mode) and not path.writable() or ("r" == mode) and not path.readable():
        e1 = "writable" if "w" == mode else "readable"
        raise ValueError(f"Expected a {e1} file.")
    return path


@open_path.register(str)
def open_path_str(path: str, mode: str, verbose: int = 0, suffix: Optional[str] = None) -> io.TextIOBase:
    return open_path(pathlib.Path(path), mode, verbose, suffix)


@open_path.register(pathlib.Path)
def open_path_pathlib(path: pathlib.Path, mode: str, verbose: int = 0, suffix: Optional[str] = None) -> io.TextIOBase:
    mode = {"write": "w", "read": "r"}.get(mode, mode)
    if mode not in ("w", "r"):
        raise ValueError("Expected mode to be either 'w' or 'r'.")

    if mode == "r":
        if not path.exists() and suffix:
            newpath = pathlib.Path(f"{path}.{suffix}")
            if verbose == 2:
                warnings.warn(f"Path '{path}' not found. Attempting {newpath}.")
            path = newpath
        return open_path(path.open("r"), mode, verbose)

    if path.suffix == "" and suffix:
        path = pathlib.Path(f"{path}.{suffix}")
    if path.exists() and path.is_file() and verbose == 2:
        warnings.warn(f"Path '{path}' exists, will overwrite it.")
    if not path.parent.exists():
        if verbose >= 1:
            print(f"Creating folder {path.parent}")
        path.parent.mkdir(exist_ok=True, parents=True)
    return open_path(path.open("w"), mode, verbose)


def save_to_json(path: Union[str, pathlib.Path, io.TextIOBase], data: Dict[str, Any], verbose: int = 0) -> None:
    """
    Write ``data`` as JSON (see :func:`data_to_json`).

    :param path: file path or text stream
    :param data: the data to save
    :param verbose: Verbosity level, 0 means only warnings, 2 means debug information
    """
    file = open_path(path, "w", verbose=verbose, suffix="json")
    file.write(data_to_json(data) + "\n")
    if isinstance(path, (str, pathlib.Path)):
        file.close()


def load_from_json(path: Union[str, pathlib.Path, io.TextIOBase], verbose: int = 0) -> Dict[str, Any]:
    """
    Load a JSON file written by :func:`save_to_json`.

    :param path: file path or text stream
    :param verbose: Verbosity level, 0 means only warnings, 2 means debug information
    :return: the loaded data
    """
    file = open_path(path, "r", verbose=verbose, suffix="json")
    data = json_to_data(file.read())
    if isinstance(path, (str, pathlib.Path)):
        file.close()
    return data
