import io
import json
import pathlib
from typing import NamedTuple

import numpy as np
import pytest

from carnot_lab.common.save_util import (
    data_to_json,
    json_to_data,
    load_from_json,
    open_path,
    save_to_json,
    to_json_compatible,
)


class _Verdict(NamedTuple):
    passed: bool
    worst: float


class _Described(object):
    def to_dict(self):
        return {"kind": "described", "values": np.arange(3)}


def test_to_json_compatible():
    data = {
        "array": np.array([[1.0, 2.0]]),
        "integer": np.int64(3),
        "flag": np.bool_(True),
        "inf": np.inf,
        "negative_inf": -np.inf,
        "tuple": (1, 2.5),
        "verdict": _Verdict(False, 0.25),
        "object": _Described(),
        1: None,
    }
    converted = to_json_compatible(data)
    assert converted == {
        "array": [[1.0, 2.0]],
        "integer": 3,
        "flag": True,
        "inf": "inf",
        "negative_inf": "-inf",
        "tuple": [1, 2.5],
        "verdict": {"passed": False, "worst": 0.25},
        "object": {"kind": "described", "values": [0, 1, 2]},
        "1": None,
    }
    assert type(converted["flag"]) is bool
    with pytest.raises(TypeError):
        to_json_compatible({"set": {1, 2}})


def test_json_is_deterministic():
    first = data_to_json({"b": 1.0, "a": [np.float64(0.1), np.inf]})
    second = data_to_json({"a": [0.1, float("inf")], "b": 1.0})
    assert first == second
    assert first.index('"a"') < first.index('"b"')
    assert json_to_data(first) == {"a": [0.1, float("inf")], "b": 1.0}
    assert np.isnan(json_to_data(json.dumps({"x": "nan"}))["x"])


@pytest.mark.parametrize("pathtype", [str, pathlib.Path])
def test_save_and_load(tmp_path, pathtype):
    data = {"estimate": 1.5, "sigma": np.inf, "checks": [{"pass": True}]}
    # the suffix is added when missing
    save_to_json(pathtype(f"{tmp_path}/report"), data)
    assert (tmp_path / "report.json").exists()
    expected = {"estimate": 1.5, "sigma": float("inf"), "checks": [{"pass": True}]}
    assert load_from_json(pathtype(f"{tmp_path}/report")) == expected
    # custom suffix is kept
    save_to_json(pathtype(f"{tmp_path}/report.custom_ext"), data)
    assert load_from_json(pathtype(f"{tmp_path}/report.custom_ext"))["estimate"] == 1.5
    # missing folders are created
    save_to_json(pathtype(f"{tmp_path}/nested/folder/report.json"), data)
    assert (tmp_path / "nested" / "folder" / "report.json").exists()


def test_save_to_stream():
    buffer = io.StringIO()
    save_to_json(buffer, {"value": 2})
    assert not buffer.closed
    buffer.seek(0)
    assert load_from_json(buffer) == {"value": 2}


def test_open_path(tmp_path):
    # path must match the type
    with pytest.raises(TypeError):
        open_path(123, "w")

    path = tmp_path / "test1"
    stream = path.open("w")
    # provided stream must match the mode
    with pytest.raises(ValueError):
        open_path(stream, "r")
    with pytest.raises(ValueError):
        open_path(stream, "randomstuff")
    assert open_path(stream, "w") is stream
    assert open_path(stream, "write") is stream
    # can't use a closed stream
    stream.close()
    with pytest.raises(ValueError):
        open_path(stream, "w")

    with pytest.warns(UserWarning):
        open_path(tmp_path / "test1", "w", verbose=2).close()
