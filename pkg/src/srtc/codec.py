"""Span compression against the tree, and decompression against receiver state."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

from .deltas import Op
from .errors import ArityMismatch, ProtocolViolation, UnknownPathId
from .spans import FlatSpan
from .srt import NameSubtree, SpanRetrievalTree
from .sync import ReceiverState
from .wire import (
    INT64_MAX,
    INT64_MIN,
    read_i64,
    read_str,
    read_u64,
    read_uvarint,
    read_value,
    write_i64,
    write_str,
    write_u64,
    write_uvarint,
    write_value,
)


@dataclass(frozen=True)
class CompressedSpan:
    path_id: str
    local_values: tuple
    time_offsets: tuple[int, ...]


@dataclass(frozen=True)
class FallbackSpan:
    span: FlatSpan


Encoded = Union[CompressedSpan, FallbackSpan]


def _encode(span: FlatSpan, sub: NameSubtree, path_id: str, time_base: int) -> Encoded:
    pairs = span.pairs
    times = span.time_fields
    offsets = tuple([times[k] - time_base for k in sub.time_keys])
    for off in offsets:
        if off < INT64_MIN or off > INT64_MAX:
            return FallbackSpan(span)
    return CompressedSpan(path_id, tuple([pairs[k] for k in sub.local_keys]), offsets)


def compress(span: FlatSpan, srt: SpanRetrievalTree) -> tuple[Encoded, list[Op]]:
    """Insert ``span`` and encode it against the resulting structure."""
    outcome = srt.insert(span)
    if outcome.path_id is None:
        return FallbackSpan(span), outcome.deltas
    return _encode(span, srt.subtrees[span.name], outcome.path_id, srt.time_base), outcome.deltas


def compress_batch(spans: Sequence[FlatSpan], srt: SpanRetrievalTree) -> tuple[list[Encoded], list[Op]]:
    """Insert a whole batch, then encode every span against the final state.

    Spans are encoded only after the last insertion so none of them can
    reference a path that a later insertion in the same batch merged away.
    """
    outcomes = [srt.insert(s) for s in spans]
    ops: list[Op] = []
    for o in outcomes:
        ops.extend(o.deltas)
    out: list[Encoded] = []
    subtrees = srt.subtrees
    tb = srt.time_base
    for span, o in zip(spans, outcomes):
        pid = o.path_id
        if pid is None:
            out.append(FallbackSpan(span))
            continue
        sub = subtrees[span.name]
        if sub.epoch != o.epoch:
            pid = srt.lookup(span)
            if pid is None:
                raise RuntimeError(f"span of {span.name!r} lost its path during the batch")
        out.append(_encode(span, sub, pid, tb))
    return out, ops


def decompress(cs: Encoded, state: ReceiverState) -> FlatSpan:
    if type(cs) is FallbackSpan:
        return cs.span
    entry = state.paths.get(cs.path_id)
    if entry is None:
        raise UnknownPathId(f"unknown path id {cs.path_id!r}")
    name, kvs = entry
    local_keys = state.local_keys.get(name, ())
    time_keys = state.time_keys.get(name, ())
    if len(cs.local_values) != len(local_keys) or len(cs.time_offsets) != len(time_keys):
        raise ArityMismatch(
            f"path {cs.path_id!r}: got {len(cs.local_values)}/{len(cs.time_offsets)} values "
            f"for {len(local_keys)}/{len(time_keys)} keys"
        )
    pairs = dict(kvs)
    pairs.update(zip(local_keys, cs.local_values))
    tb = state.time_base
    return FlatSpan(name, pairs, {k: off + tb for k, off in zip(time_keys, cs.time_offsets)})


# --- SpanBatch payload ----------------------------------------------------------

_KIND_COMPRESSED = 0
_KIND_FALLBACK = 1


def encode_span_batch(items: Sequence[Encoded]) -> bytes:
    """Count-prefixed sequence of compressed or fallback spans."""
    buf = bytearray()
    write_uvarint(buf, len(items))
    for item in items:
        if type(item) is CompressedSpan:
            buf.append(_KIND_COMPRESSED)
            write_str(buf, item.path_id)
            write_uvarint(buf, len(item.local_values))
            for v in item.local_values:
                write_value(buf, v)
            write_uvarint(buf, len(item.time_offsets))
            for off in item.time_offsets:
                write_i64(buf, off)
        else:
            span = item.span
            buf.append(_KIND_FALLBACK)
            write_str(buf, span.name)
            write_uvarint(buf, len(span.pairs))
            for k, v in span.pairs.items():
                write_str(buf, k)
                write_value(buf, v)
            write_uvarint(buf, len(span.time_fields))
            for k, t in span.time_fields.items():
                write_str(buf, k)
                write_u64(buf, t)
    return bytes(buf)


def decode_span_batch(data) -> list[Encoded]:
    n, pos = read_uvarint(data, 0)
    out: list[Encoded] = []
    for _ in range(n):
        if pos >= len(data):
            raise ProtocolViolation("span batch truncated")
        kind = data[pos]
        pos += 1
        if kind == _KIND_COMPRESSED:
            pid, pos = read_str(data, pos)
            count, pos = read_uvarint(data, pos)
            values = []
            for _ in range(count):
                v, pos = read_value(data, pos)
                values.append(v)
            count, pos = read_uvarint(data, pos)
            offsets = []
            for _ in range(count):
                off, pos = read_i64(data, pos)
                offsets.append(off)
            out.append(CompressedSpan(pid, tuple(values), tuple(offsets)))
        elif kind == _KIND_FALLBACK:
            name, pos = read_str(data, pos)
            count, pos = read_uvarint(data, pos)
            pairs = {}
            for _ in range(count):
                k, pos = read_str(data, pos)
                pairs[k], pos = read_value(data, pos)
            count, pos = read_uvarint(data, pos)
            times = {}
            for _ in range(count):
                k, pos = read_str(data, pos)
                times[k], pos = read_u64(data, pos)
            out.append(FallbackSpan(FlatSpan(name, pairs, times)))
        else:
            raise ProtocolViolation(f"unknown span kind {kind}")
    if pos != len(data):
        raise ProtocolViolation("trailing bytes after span batch")
    return out
