from typing import Sequence

import numpy as np
import pytest
from pandas.errors import EmptyDataError

from carnot_lab.common.logger import (
    DEBUG,
    DISABLED,
    INFO,
    CSVOutputFormat,
    FormatUnsupportedError,
    HumanOutputFormat,
    JSONOutputFormat,
    Logger,
    configure,
    make_output_format,
    read_csv,
    read_json,
)

KEY_VALUES = {
    "test": 1,
    "b": -3.14,
    "8": 9.9,
    "passed": True,
    "failed": np.bool_(False),
    "n": np.int64(7),
    "h": 'this ", ;is a \n tes:,t',
}

KEY_EXCLUDED = {}
for key in KEY_VALUES.keys():
    KEY_EXCLUDED[key] = None


class LogContent:
    """
    A simple wrapper class to provide a common interface to check content for emptiness and report the log format
    """

    def __init__(self, _format: str, lines: Sequence):
        self.format = _format
        self.lines = lines

    @property
    def empty(self):
        return len(self.lines) == 0

    def __repr__(self):
        return f"LogContent(_format={self.format}, lines={self.lines})"


@pytest.fixture
def read_log(tmp_path, capsys):
    def read_fn(_format):
        if _format == "csv":
            try:
                df = read_csv(tmp_path / "suites.csv")
            except EmptyDataError:
                return LogContent(_format, [])
            return LogContent(_format, [r for _, r in df.iterrows() if not r.empty])
        elif _format == "json":
            try:
                df = read_json(tmp_path / "suites.json")
            except EmptyDataError:
                return LogContent(_format, [])
            return LogContent(_format, [r for _, r in df.iterrows() if not r.empty])
        elif _format == "stdout":
            captured = capsys.readouterr()
            return LogContent(_format, captured.out.splitlines())
        elif _format == "log":
            return LogContent(_format, (tmp_path / "log.txt").read_text().splitlines())

    return read_fn


def test_main(tmp_path):
    """
    tests for the logger module
    """
    logger = configure(None, ["stdout"])
    logger.info("hi")
    logger.debug("shouldn't appear")
    assert logger.level == INFO
    logger.set_level(DEBUG)
    assert logger.level == DEBUG
    logger.debug("should appear")
    logger = configure(folder=str(tmp_path))
    assert logger.get_dir() == str(tmp_path)
    logger.record("a", 3)
    logger.record("b", 2.5)
    logger.dump()
    logger.record("b", -2.5)
    logger.record("a", 5.5)
    logger.dump()
    logger.info("^^^ should see a = 5.5")
    logger.record("f", "this text \n \r should appear in one line")
    logger.dump()
    logger.record_mean("b", -22.5)
    logger.record_mean("b", -44.4)
    logger.record("a", 5.5)
    logger.dump()

    logger.record("a", "longasslongasslongasslongasslongasslongassvalue")
    logger.dump()
    logger.warn("hey")
    logger.error("oh")
    logger.close()


def test_configure_from_environment(tmp_path, monkeypatch):
    folder = tmp_path / "from_env"
    monkeypatch.setenv("CARNOT_LAB_LOGDIR", str(folder))
    monkeypatch.setenv("CARNOT_LAB_LOG_FORMAT", "log,json")
    logger = configure()
    assert logger.get_dir() == str(folder)
    assert [type(writer) for writer in logger.output_formats] == [HumanOutputFormat, JSONOutputFormat]
    logger.close()
    assert (folder / "log.txt").exists()
    assert (folder / "suites.json").exists()


@pytest.mark.parametrize("_format", ["stdout", "log", "json", "csv"])
def test_make_output(tmp_path, read_log, _format):
    """
    test make output

    :param _format: (str) output format
    """
    writer = make_output_format(_format, tmp_path)
    writer.write(KEY_VALUES, KEY_EXCLUDED)
    assert not read_log(_format).empty
    writer.close()


def test_make_output_fail(tmp_path):
    """
    test value error on logger
    """
    with pytest.raises(ValueError):
        make_output_format("dummy_format", tmp_path)


@pytest.mark.parametrize("_format", ["stdout", "log", "json", "csv"])
@pytest.mark.filterwarnings("ignore:Tried to write empty key-value dict")
def test_exclude_keys(tmp_path, read_log, _format):
    writer = make_output_format(_format, tmp_path)
    writer.write(dict(some_tag=42), key_excluded=dict(some_tag=(_format)))
    writer.close()
    assert read_log(_format).empty


@pytest.mark.parametrize("unsupported_format", ["stdout", "log", "csv"])
def test_report_array_to_unsupported_format_raises_error(tmp_path, unsupported_format):
    writer = make_output_format(unsupported_format, tmp_path)

    with pytest.raises(FormatUnsupportedError) as exec_info:
        writer.write({"samples": np.arange(4.0)}, key_excluded={"samples": ()})
    assert unsupported_format in str(exec_info.value)
    writer.close()


def test_report_array_to_json(tmp_path, read_log):
    writer = make_output_format("json", tmp_path)
    writer.write({"samples": np.arange(3.0), "sigma": np.inf}, key_excluded={})
    writer.close()
    row = read_log("json").lines[0]
    assert list(row["samples"]) == [0.0, 1.0, 2.0]
    assert row["sigma"] == "inf"


def test_verdicts_shown_as_pass_fail(tmp_path):
    logger = configure(str(tmp_path), ["log", "csv"])
    verdict = {
        "pass": False,
        "analytic": 1.4142135,
        "estimate": 1.21,
        "theorem": "sobolev",
        "witnesses": [{"index": 0}],
        "checks": [],
    }
    logger.record_verdict("sobolev-norm", "norm_equality", verdict)
    # lists are left to the JSON report
    assert "sobolev-norm/norm_equality.witnesses" not in logger.name_to_value
    assert logger.name_to_value["sobolev-norm/norm_equality.estimate"] == 1.21
    logger.dump()
    logger.close()
    text = (tmp_path / "log.txt").read_text()
    assert "sobolev-norm/" in text
    assert "FAIL" in text
    table = read_csv(tmp_path / "suites.csv")
    assert table["sobolev-norm/norm_equality.analytic"][0] == pytest.approx(1.4142135)


def test_csv_header_grows(tmp_path):
    writer = CSVOutputFormat(str(tmp_path / "suites.csv"))
    writer.write({"a": 1}, {})
    writer.write({"a": 2, "b": 3.5}, {})
    writer.close()
    table = read_csv(tmp_path / "suites.csv")
    assert list(table.columns) == ["a", "b"]
    assert list(table["a"]) == [1, 2]
    assert np.isnan(table["b"][0])
    assert table["b"][1] == 3.5


class InMemoryLogger(Logger):
    """
    Logger that keeps key/value pairs in memory without any writers.
    """

    def __init__(self):
        super().__init__("", [])

    def dump(self, step: int = 0) -> None:
        pass


def test_record_mean_and_disabled():
    logger = InMemoryLogger()
    for value in (1.0, 2.0, 6.0):
        logger.record_mean("suite/value", value)
    assert logger.name_to_value["suite/value"] == pytest.approx(3.0)
    logger.record_mean("suite/none", None)
    assert logger.name_to_value["suite/none"] is None

    disabled = Logger(None, [])
    disabled.set_level(DISABLED)
    disabled.record("a", 1)
    disabled.dump()
    # nothing was written, so nothing was cleared
    assert disabled.name_to_value["a"] == 1
