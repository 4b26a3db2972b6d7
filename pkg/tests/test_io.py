#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

import pathlib
import struct
import tempfile

import numpy
from ward import fixture, raises, test

from mmtrack.io import (
    MAGIC,
    FormatError,
    dump_record,
    read_csv,
    read_records,
    read_tensors,
    write_csv,
    write_records,
    write_tensors,
)


@fixture
def tmp_dir():
    with tempfile.TemporaryDirectory() as name:
        yield pathlib.Path(name)


@test("tensor file keeps names, dtypes and shapes")
def _(tmp=tmp_dir):
    tensors = {
        "weights": numpy.arange(12, dtype=float).reshape(3, 4),
        "gains": numpy.array([1 + 2j, -0.5j]),
        "scalar": numpy.array(3.5),
    }
    path = tmp / "t.mmt"
    write_tensors(path, tensors)
    assert path.read_bytes().startswith(MAGIC)
    result = read_tensors(path)
    assert list(result) == ["weights", "gains", "scalar"]
    for name, value in tensors.items():
        assert result[name].dtype == value.dtype
        assert result[name].shape == value.shape
        assert numpy.array_equal(result[name], value)


@test("tensor file layout")
def _(tmp=tmp_dir):
    path = tmp / "t.mmt"
    write_tensors(path, {"ab": numpy.array([1.0, 2.0])})
    data = path.read_bytes()
    assert struct.unpack_from("<II", data, 8) == (1, 1)
    assert struct.unpack_from("<H", data, 16) == (2,)
    assert data[18:20] == b"ab"
    assert data[20:22] == bytes([0, 1])
    assert struct.unpack_from("<I", data, 22) == (2,)
    assert struct.unpack_from("<2d", data, 26) == (1.0, 2.0)
    assert len(data) == 26 + 16


@test("malformed tensor files")
def _(tmp=tmp_dir):
    path = tmp / "bad.mmt"
    path.write_bytes(b"NOTMMTRK" + bytes(8))
    with raises(FormatError) as error:
        read_tensors(path)
    assert "not an mmtrack tensor file" in error.raised.args[0]

    path.write_bytes(MAGIC + struct.pack("<II", 99, 0))
    with raises(FormatError) as error:
        read_tensors(path)
    assert "version 99" in error.raised.args[0]

    path.write_bytes(b"MM")
    with raises(FormatError):
        read_tensors(path)

    write_tensors(path, {"x": numpy.zeros(8)})
    path.write_bytes(path.read_bytes()[:-8])
    with raises(FormatError) as error:
        read_tensors(path)
    assert "truncated" in error.raised.args[0]


@test("records are written with sorted keys and complex pairs")
def _():
    line = dump_record({"b": 1, "a": numpy.array([0.5, 1.5]), "alpha": 1 - 2j, "n": numpy.int64(3)})
    assert line == '{"a": [0.5, 1.5], "alpha": [1.0, -2.0], "b": 1, "n": 3}'


@test("records refuse NaN")
def _():
    with raises(ValueError):
        dump_record({"x": float("nan")})


@test("record files")
def _(tmp=tmp_dir):
    path = tmp / "r.jsonl"
    records = [{"schema": 1, "snapshot": n, "x": 0.1 * n} for n in range(3)]
    assert write_records(path, records) == 3
    assert read_records(path) == records
    first = path.read_bytes()
    write_records(path, records)
    assert path.read_bytes() == first

    path.write_text('{"schema": 1}\n{oops\n', encoding="utf-8")
    with raises(FormatError) as error:
        read_records(path)
    assert ":2:" in error.raised.args[0]


@test("csv floats are exact")
def _(tmp=tmp_dir):
    path = tmp / "x.csv"
    value = 0.1 + 0.2
    write_csv(path, ("name", "value", "empty"), [("a", value, None), ("b", 2, "")])
    rows = read_csv(path)
    assert rows[0] == {"name": "a", "value": repr(value), "empty": ""}
    assert float(rows[0]["value"]) == value
    assert rows[1]["value"] == "2"
