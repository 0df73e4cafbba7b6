"""Binary primitives: LEB128 varints, length-prefixed strings, tagged values."""

from __future__ import annotations

import struct

from .errors import ProtocolViolation, TruncatedData

_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

TAG_NULL = 0
TAG_FALSE = 1
TAG_TRUE = 2
TAG_INT = 3
TAG_FLOAT = 4
TAG_STR = 5


def write_uvarint(buf: bytearray, n: int) -> None:
    while n > 0x7F:
        buf.append((n & 0x7F) | 0x80)
        n >>= 7
    buf.append(n)


def read_uvarint(data, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    try:
        while True:
            b = data[pos]
            pos += 1
            result |= (b & 0x7F) << shift
            if b < 0x80:
                return result, pos
            shift += 7
    except IndexError:
        raise TruncatedData("varint runs past end of data") from None


def write_str(buf: bytearray, s: str) -> None:
    raw = s.encode("utf-8", "surrogatepass")
    n = len(raw)
    if n < 0x80:
        buf.append(n)
    else:
        write_uvarint(buf, n)
    buf += raw


def read_str(data: bytes, pos: int) -> tuple[str, int]:
    try:
        n = data[pos]
    except IndexError:
        raise TruncatedData("string length past end of data") from None
    if n < 0x80:
        pos += 1
    else:
        n, pos = read_uvarint(data, pos)
    end = pos + n
    if end > len(data):
        raise TruncatedData("string runs past end of data")
    return data[pos:end].decode("utf-8", "surrogatepass"), end


def write_strs(buf: bytearray, items) -> None:
    write_uvarint(buf, len(items))
    for s in items:
        write_str(buf, s)


def read_strs(data: bytes, pos: int) -> tuple[tuple[str, ...], int]:
    n, pos = read_uvarint(data, pos)
    out = []
    append = out.append
    size = len(data)
    for _ in range(n):
        if pos >= size:
            raise TruncatedData("string length past end of data")
        m = data[pos]
        if m < 0x80:
            pos += 1
        else:
            m, pos = read_uvarint(data, pos)
        end = pos + m
        if end > size:
            raise TruncatedData("string runs past end of data")
        append(data[pos:end].decode("utf-8", "surrogatepass"))
        pos = end
    return tuple(out), pos


def write_u64(buf: bytearray, n: int) -> None:
    buf += _U64.pack(n)


def read_u64(data, pos: int) -> tuple[int, int]:
    if pos + 8 > len(data):
        raise TruncatedData("u64 runs past end of data")
    return _U64.unpack_from(data, pos)[0], pos + 8


def write_i64(buf: bytearray, n: int) -> None:
    buf += _I64.pack(n)


def read_i64(data, pos: int) -> tuple[int, int]:
    if pos + 8 > len(data):
        raise TruncatedData("i64 runs past end of data")
    return _I64.unpack_from(data, pos)[0], pos + 8


def write_value(buf: bytearray, v) -> None:
    """One-byte type tag followed by the value's encoding.

    Integers use zigzag varints (any size), floats 8-byte IEEE doubles,
    strings length-prefixed UTF-8.
    """
    t = type(v)
    if t is str:
        buf.append(TAG_STR)
        write_str(buf, v)
    elif t is int:
        buf.append(TAG_INT)
        write_uvarint(buf, (v << 1) if v >= 0 else ((-v << 1) - 1))
    elif t is bool:
        buf.append(TAG_TRUE if v else TAG_FALSE)
    elif t is float:
        buf.append(TAG_FLOAT)
        buf += _F64.pack(v)
    elif v is None:
        buf.append(TAG_NULL)
    else:
        raise TypeError(f"cannot encode value of type {t.__name__}")


def read_value(data, pos: int):
    try:
        tag = data[pos]
    except IndexError:
        raise TruncatedData("value tag past end of data") from None
    pos += 1
    if tag == TAG_STR:
        return read_str(data, pos)
    if tag == TAG_INT:
        z, pos = read_uvarint(data, pos)
        return ((z >> 1) if not z & 1 else -((z + 1) >> 1)), pos
    if tag == TAG_FLOAT:
        if pos + 8 > len(data):
            raise TruncatedData("float runs past end of data")
        return _F64.unpack_from(data, pos)[0], pos + 8
    if tag == TAG_NULL:
        return None, pos
    if tag == TAG_TRUE:
        return True, pos
    if tag == TAG_FALSE:
        return False, pos
    raise ProtocolViolation(f"unknown value tag {tag}")
