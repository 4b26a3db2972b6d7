#
# This file is part of the mmtrack project
#
# Copyright (c) 2024 mmtrack contributors
# Distributed under the GPLv3 license. See LICENSE for more info.

"""
File formats shared by the harness and the networks.

Line records are JSON objects, one per line, keys sorted so that reruns are
byte-identical.

Tensor files (network checkpoints, measurement dumps) have the layout:

```
offset  type        field
0       8 bytes     magic  b"MMTRACK\\0"
8       uint32 LE   format version
12      uint32 LE   number of tensors T
then T header entries:
        uint16 LE   name length n, n bytes UTF-8 name
        uint8       dtype code (0 = float64, 1 = complex128)
        uint8       ndim d, d x uint32 LE shape
then T payloads in header order, little-endian, row-major
```
"""

import csv
import json
import logging
import math
import pathlib
import struct

import numpy

from .types import Array, Iterable, Iterator, Mapping, PathLike, Sequence

log = logging.getLogger(__name__)

MAGIC = b"MMTRACK\0"
FORMAT_VERSION = 1

_DTYPE_CODES = {
    numpy.dtype("<f8"): 0,
    numpy.dtype("<c16"): 1,
}
_CODE_DTYPES = {code: dtype for dtype, code in _DTYPE_CODES.items()}

_HEADER = struct.Struct("<8sII")
_NAME_LEN = struct.Struct("<H")
_TENSOR_INFO = struct.Struct("<BB")


class FormatError(Exception):
    """Malformed mmtrack file"""


def write_tensors(path: PathLike, tensors: Mapping[str, Array]):
    """Write named arrays to a tensor file. Order of the mapping is preserved."""
    arrays = []
    header = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(tensors))]
    for name, value in tensors.items():
        value = numpy.asarray(value)
        dtype = numpy.dtype("<c16") if numpy.iscomplexobj(value) else numpy.dtype("<f8")
        value = numpy.ascontiguousarray(value, dtype=dtype)
        raw_name = name.encode()
        header.append(_NAME_LEN.pack(len(raw_name)))
        header.append(raw_name)
        header.append(_TENSOR_INFO.pack(_DTYPE_CODES[dtype], value.ndim))
        header.append(struct.pack(f"<{value.ndim}I", *value.shape))
        arrays.append(value)
    path = pathlib.Path(path)
    with path.open("wb") as fobj:
        fobj.write(b"".join(header))
        for value in arrays:
            fobj.write(value.tobytes(order="C"))
    log.info("wrote %d tensors to %s", len(arrays), path)


def read_tensors(path: PathLike) -> dict[str, Array]:
    """Read a tensor file written by [`write_tensors`][mmtrack.io.write_tensors]"""
    data = pathlib.Path(path).read_bytes()
    try:
        magic, version, count = _HEADER.unpack_from(data, 0)
    except struct.error:
        raise FormatError(f"{path}: truncated header") from None
    if magic != MAGIC:
        raise FormatError(f"{path}: not an mmtrack tensor file")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    offset = _HEADER.size
    infos = []
    for _ in range(count):
        (name_len,) = _NAME_LEN.unpack_from(data, offset)
        offset += _NAME_LEN.size
        name = data[offset : offset + name_len].decode()
        offset += name_len
        code, ndim = _TENSOR_INFO.unpack_from(data, offset)
        offset += _TENSOR_INFO.size
        shape = struct.unpack_from(f"<{ndim}I", data, offset)
        offset += 4 * ndim
        infos.append((name, _CODE_DTYPES[code], shape))
    result = {}
    for name, dtype, shape in infos:
        size = math.prod(shape) * dtype.itemsize
        if offset + size > len(data):
            raise FormatError(f"{path}: truncated payload for {name!r}")
        result[name] = numpy.frombuffer(data, dtype=dtype, count=math.prod(shape), offset=offset).reshape(shape).copy()
        offset += size
    return result


def _to_json(value):
    if isinstance(value, numpy.ndarray):
        return _to_json(value.tolist())
    if isinstance(value, (numpy.floating, numpy.integer, numpy.bool_)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (list, tuple)):
        return [_to_json(item) for item in value]
    if isinstance(value, dict):
        return {key: _to_json(item) for key, item in value.items()}
    return value


def dump_record(record: Mapping) -> str:
    return json.dumps(_to_json(record), sort_keys=True, allow_nan=False)


def write_records(path: PathLike, records: Iterable[Mapping]) -> int:
    """Write records as JSON lines. Returns the number of records written"""
    path = pathlib.Path(path)
    n = 0
    with path.open("w", encoding="utf-8", newline="\n") as fobj:
        for record in records:
            fobj.write(dump_record(record))
            fobj.write("\n")
            n += 1
    log.info("wrote %d records to %s", n, path)
    return n


def iter_records(path: PathLike) -> Iterator[dict]:
    with pathlib.Path(path).open(encoding="utf-8") as fobj:
        for line_nb, line in enumerate(fobj, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as error:
                raise FormatError(f"{path}:{line_nb}: {error.msg}") from None


def read_records(path: PathLike) -> list[dict]:
    return list(iter_records(path))


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]):
    path = pathlib.Path(path)
    with path.open("w", encoding="utf-8", newline="") as fobj:
        writer = csv.writer(fobj, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, numpy.floating)) else v for v in row])
    log.info("wrote %s", path)


def read_csv(path: PathLike) -> list[dict]:
    with pathlib.Path(path).open(encoding="utf-8", newline="") as fobj:
        return list(csv.DictReader(fobj))
