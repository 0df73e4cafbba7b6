"""Delta stream: sequencing, coalescing, binary layout and receiver-side state."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .deltas import (
    DeltaMessage,
    DictAdd,
    Freeze,
    KeyOrder,
    LocalKeySet,
    Op,
    PathAdd,
    PathDelete,
    TimeBase,
)
from .dictionary import DEFAULT_DELIMITERS, LITERAL, decode_key, decode_value
from .errors import (
    ArityMismatch,
    DuplicatePathId,
    ProtocolViolation,
    SequenceGap,
    UnknownIdentifier,
    UnknownPathId,
)
from .spans import token_value, value_token
from .wire import read_str, read_strs, read_u64, read_uvarint, write_str, write_strs, write_u64, write_uvarint

OP_PATH_ADD = 1
OP_PATH_DELETE = 2
OP_KEY_ORDER = 3
OP_LOCAL_KEYS = 4
OP_DICT_ADD = 5
OP_TIME_BASE = 6
OP_FREEZE = 7


@dataclass
class ReceiverState:
    """Receiver mirror of the exporter structure: ``{path id: path}`` plus leaf keys."""

    delimiters: frozenset[str] = DEFAULT_DELIMITERS
    paths: dict[str, tuple[str, tuple[tuple[str, object], ...]]] = field(default_factory=dict)
    key_order: dict[str, tuple[str, ...]] = field(default_factory=dict)
    local_keys: dict[str, tuple[str, ...]] = field(default_factory=dict)
    time_keys: dict[str, tuple[str, ...]] = field(default_factory=dict)
    dict_reverse: dict[str, str] = field(default_factory=dict)
    time_base: int = 0
    last_seq: int = -1
    frozen: bool = False
    name_paths: dict[str, set[str]] = field(default_factory=dict)
    # decoded attribute value per dictionary identifier; identifiers never rebind
    value_memo: dict[str, object] = field(default_factory=dict, repr=False, compare=False)

    def materialize(self) -> dict[str, tuple[str, frozenset[tuple[str, str]]]]:
        return {
            pid: (name, frozenset((k, value_token(v)) for k, v in kvs))
            for pid, (name, kvs) in self.paths.items()
        }

    def _name(self, encoded: str) -> str:
        return decode_value(encoded, self.dict_reverse)

    def _keys(self, encoded: Iterable[str]) -> tuple[str, ...]:
        return tuple(decode_key(k, self.dict_reverse, self.delimiters) for k in encoded)

    def _values(self, encoded: Iterable[str]) -> list[object]:
        memo = self.value_memo
        rev = self.dict_reverse
        out = []
        for v in encoded:
            try:
                out.append(memo[v])
                continue
            except KeyError:
                pass
            value = token_value(decode_value(v, rev))
            if not v.startswith(LITERAL):
                memo[v] = value
            out.append(value)
        return out


def apply_delta(state: ReceiverState, d: DeltaMessage) -> ReceiverState:
    if d.seq != state.last_seq + 1:
        raise SequenceGap(f"expected delta seq {state.last_seq + 1}, got {d.seq}")
    op = d.op
    try:
        _apply_op(state, op)
    except UnknownIdentifier as exc:
        raise ProtocolViolation(f"delta {d.seq}: {exc}") from None
    state.last_seq = d.seq
    return state


def _apply_op(state: ReceiverState, op: Op) -> None:
    t = type(op)
    if t is PathAdd:
        if op.path_id in state.paths:
            raise DuplicatePathId(f"path {op.path_id!r} already present")
        name = state._name(op.name)
        keys = state.key_order.get(name)
        if keys is None:
            raise ProtocolViolation(f"path {op.path_id!r} added before key order of {name!r}")
        if len(keys) != len(op.values):
            raise ArityMismatch(f"path {op.path_id!r} has {len(op.values)} values for {len(keys)} keys")
        kvs = tuple(zip(keys, state._values(op.values)))
        state.paths[op.path_id] = (name, kvs)
        state.name_paths.setdefault(name, set()).add(op.path_id)
    elif t is PathDelete:
        entry = state.paths.pop(op.path_id, None)
        if entry is None:
            raise UnknownPathId(f"cannot delete unknown path {op.path_id!r}")
        state.name_paths[entry[0]].discard(op.path_id)
    elif t is KeyOrder:
        name = state._name(op.name)
        keys = state._keys(op.keys)
        old = state.key_order.get(name)
        state.key_order[name] = keys
        if old is not None and not set(old) <= set(keys):
            keep = set(keys)
            for pid in state.name_paths.get(name, ()):
                pname, kvs = state.paths[pid]
                state.paths[pid] = (pname, tuple(kv for kv in kvs if kv[0] in keep))
    elif t is LocalKeySet:
        name = state._name(op.name)
        state.local_keys[name] = state._keys(op.local_keys)
        state.time_keys[name] = state._keys(op.time_keys)
    elif t is DictAdd:
        prev = state.dict_reverse.get(op.identifier)
        if prev is not None and prev != op.token:
            raise ProtocolViolation(f"identifier {op.identifier!r} rebound")
        state.dict_reverse[op.identifier] = op.token
    elif t is TimeBase:
        state.time_base = op.nanos
    elif t is Freeze:
        state.frozen = True
    else:
        raise ProtocolViolation(f"unknown delta op {op!r}")


def coalesce(ops: Sequence[Op]) -> list[Op]:
    """Drop a ``PathAdd`` together with a later ``PathDelete`` of the same id."""
    pending: dict[str, int] = {}
    dead: set[int] = set()
    for i, op in enumerate(ops):
        t = type(op)
        if t is PathAdd:
            pending[op.path_id] = i
        elif t is PathDelete:
            j = pending.pop(op.path_id, None)
            if j is not None:
                dead.add(j)
                dead.add(i)
    if not dead:
        return list(ops)
    return [op for i, op in enumerate(ops) if i not in dead]


def _ops_of(item) -> Sequence[Op]:
    return item.deltas if hasattr(item, "deltas") else item


def collect_deltas(outcomes: Iterable, start_seq: int = 0, coalesce_pairs: bool = True) -> list[DeltaMessage]:
    """Concatenate the ops of several insert outcomes into sequenced deltas.

    ``outcomes`` may hold ``InsertOutcome`` objects or plain op lists.
    """
    ops: list[Op] = []
    for item in outcomes:
        ops.extend(_ops_of(item))
    if coalesce_pairs:
        ops = coalesce(ops)
    return [DeltaMessage(start_seq + i, op) for i, op in enumerate(ops)]


class DeltaSequencer:
    """Hands out contiguous sequence numbers across batches of one session."""

    def __init__(self) -> None:
        self.next_seq = 0

    def collect(self, outcomes: Iterable, coalesce_pairs: bool = True) -> list[DeltaMessage]:
        msgs = collect_deltas(outcomes, self.next_seq, coalesce_pairs)
        self.next_seq += len(msgs)
        return msgs


# --- binary layout ------------------------------------------------------------

def encode_delta(buf: bytearray, d: DeltaMessage) -> None:
    op = d.op
    t = type(op)
    if t is PathAdd:
        buf.append(OP_PATH_ADD)
        write_u64(buf, d.seq)
        write_str(buf, op.path_id)
        write_str(buf, op.name)
        write_strs(buf, op.values)
    elif t is PathDelete:
        buf.append(OP_PATH_DELETE)
        write_u64(buf, d.seq)
        write_str(buf, op.path_id)
    elif t is KeyOrder:
        buf.append(OP_KEY_ORDER)
        write_u64(buf, d.seq)
        write_str(buf, op.name)
        write_strs(buf, op.keys)
    elif t is LocalKeySet:
        buf.append(OP_LOCAL_KEYS)
        write_u64(buf, d.seq)
        write_str(buf, op.name)
        write_strs(buf, op.local_keys)
        write_strs(buf, op.time_keys)
    elif t is DictAdd:
        buf.append(OP_DICT_ADD)
        write_u64(buf, d.seq)
        write_str(buf, op.identifier)
        write_str(buf, op.token)
    elif t is TimeBase:
        buf.append(OP_TIME_BASE)
        write_u64(buf, d.seq)
        write_u64(buf, op.nanos)
    elif t is Freeze:
        buf.append(OP_FREEZE)
        write_u64(buf, d.seq)
    else:
        raise TypeError(f"unknown op {op!r}")


def decode_delta(data, pos: int) -> tuple[DeltaMessage, int]:
    if pos >= len(data):
        raise ProtocolViolation("delta tag past end of payload")
    tag = data[pos]
    seq, pos = read_u64(data, pos + 1)
    if tag == OP_PATH_ADD:
        pid, pos = read_str(data, pos)
        name, pos = read_str(data, pos)
        values, pos = read_strs(data, pos)
        op: Op = PathAdd(pid, name, values)
    elif tag == OP_PATH_DELETE:
        pid, pos = read_str(data, pos)
        op = PathDelete(pid)
    elif tag == OP_KEY_ORDER:
        name, pos = read_str(data, pos)
        keys, pos = read_strs(data, pos)
        op = KeyOrder(name, keys)
    elif tag == OP_LOCAL_KEYS:
        name, pos = read_str(data, pos)
        local, pos = read_strs(data, pos)
        times, pos = read_strs(data, pos)
        op = LocalKeySet(name, local, times)
    elif tag == OP_DICT_ADD:
        ident, pos = read_str(data, pos)
        token, pos = read_str(data, pos)
        op = DictAdd(ident, token)
    elif tag == OP_TIME_BASE:
        nanos, pos = read_u64(data, pos)
        op = TimeBase(nanos)
    elif tag == OP_FREEZE:
        op = Freeze()
    else:
        raise ProtocolViolation(f"unknown delta tag {tag}")
    return DeltaMessage(seq, op), pos


def encode_deltas(deltas: Sequence[DeltaMessage]) -> bytes:
    buf = bytearray()
    write_uvarint(buf, len(deltas))
    for d in deltas:
        encode_delta(buf, d)
    return bytes(buf)


def decode_deltas(data) -> list[DeltaMessage]:
    n, pos = read_uvarint(data, 0)
    out = []
    for _ in range(n):
        d, pos = decode_delta(data, pos)
        out.append(d)
    if pos != len(data):
        raise ProtocolViolation("trailing bytes after delta set")
    return out
