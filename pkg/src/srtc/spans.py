"""Span parsing, flattening and the canonical text form of attribute values.

Everything downstream works on :class:`FlatSpan`: a span name, an ordered
mapping of flattened keys to primitive values, and the integer time fields.
Nested objects become ``parent-child`` keys up to a depth limit; anything
deeper, every array, and every empty object is stored as its canonical JSON
text.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Union

from .errors import KeyCollision, MalformedJson, MissingName

AttributeValue = Union[str, int, float, bool, None]
RawSpan = dict

DEFAULT_DEPTH_LIMIT = 2
DEFAULT_TIME_KEYS = frozenset({"start_time", "end_time"})
KEY_JOIN = "-"
U64_MAX = 2**64 - 1

# first characters of every non-string token; strings starting with one of
# these get the "\'" marker so the token stays unambiguous
_NON_STRING_START = frozenset("-0123456789tfnNI")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# --- value tokens -----------------------------------------------------------

def _escape_component(s: str) -> str:
    if "\\" in s:
        s = s.replace("\\", "\\\\")
    if "," in s:
        s = s.replace(",", "\\,")
    return s


def _unescape_component(s: str) -> str:
    if "\\" not in s:
        return s
    out = []
    i = 0
    n = len(s)
    while i < n:
        c = s[i]
        if c == "\\" and i + 1 < n:
            out.append(s[i + 1])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def _float_text(v: float) -> str:
    if v != v:
        return "NaN"
    if v == math.inf:
        return "Infinity"
    if v == -math.inf:
        return "-Infinity"
    return repr(v)


def value_token(v: AttributeValue) -> str:
    """Canonical, type-preserving text of a primitive value.

    Strings are kept readable (``MySQL`` stays ``MySQL``) with ``,`` and
    ``\\`` escaped; numbers, booleans and null use their JSON spelling. A
    string that starts like a non-string token is prefixed with ``\\'``.
    The token never contains an unescaped comma, so tokens can be joined
    into path strings directly.
    """
    t = type(v)
    if t is str:
        tok = _escape_component(v) if ("\\" in v or "," in v) else v
        if v and v[0] in _NON_STRING_START:
            return "\\'" + tok
        return tok
    if t is bool:
        return "true" if v else "false"
    if t is int:
        return str(v)
    if t is float:
        return _float_text(v)
    if v is None:
        return "null"
    raise TypeError(f"not a primitive attribute value: {v!r}")


def token_value(tok: str) -> AttributeValue:
    """Inverse of :func:`value_token`."""
    if tok.startswith("\\'"):
        return _unescape_component(tok[2:])
    if tok and tok[0] in _NON_STRING_START:
        return json.loads(tok)
    return _unescape_component(tok)


# --- FlatSpan ---------------------------------------------------------------

@dataclass(eq=False)
class FlatSpan:
    """A span as name + flat key/value pairs + integer time fields.

    Equality is exact on types (``1``, ``1.0`` and ``True`` differ) and
    ignores key order.
    """

    name: str
    pairs: dict[str, AttributeValue] = field(default_factory=dict)
    time_fields: dict[str, int] = field(default_factory=dict)

    def canonical(self) -> tuple:
        return (
            self.name,
            tuple(sorted((k, value_token(v)) for k, v in self.pairs.items())),
            tuple(sorted(self.time_fields.items())),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FlatSpan):
            return NotImplemented
        return self.canonical() == other.canonical()

    __hash__ = None  # type: ignore[assignment]

    def key_set(self) -> frozenset[str]:
        return frozenset(self.pairs)

    def estimated_size(self) -> int:
        size = len(self.name)
        for k, v in self.pairs.items():
            size += len(k) + (len(v) if type(v) is str else 8)
        for k in self.time_fields:
            size += len(k) + 8
        return size


# --- parsing ----------------------------------------------------------------

def check_raw_span(obj: Any) -> RawSpan:
    if not isinstance(obj, dict):
        raise MalformedJson("span must be a JSON object")
    name = obj.get("name")
    if not isinstance(name, str) or not name:
        raise MissingName('span lacks a non-empty string "name" field')
    return obj


def parse_span(data: bytes | str, line: int | None = None) -> RawSpan:
    """Parse one JSON document into a raw span dict."""
    try:
        obj = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedJson(str(exc), line) from None
    if not isinstance(obj, dict):
        raise MalformedJson("span must be a JSON object", line)
    return check_raw_span(obj)


# --- flatten / unflatten ----------------------------------------------------

def escape_key(key: str) -> str:
    if "\\" in key:
        key = key.replace("\\", "\\\\")
    if KEY_JOIN in key:
        key = key.replace(KEY_JOIN, "\\" + KEY_JOIN)
    return key


def split_key(flat_key: str) -> list[str]:
    """Split a flattened key on unescaped joins and unescape each part."""
    if "\\" not in flat_key:
        return flat_key.split(KEY_JOIN)
    parts: list[str] = []
    cur: list[str] = []
    i = 0
    n = len(flat_key)
    while i < n:
        c = flat_key[i]
        if c == "\\" and i + 1 < n:
            cur.append(flat_key[i + 1])
            i += 2
            continue
        if c == KEY_JOIN:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(c)
        i += 1
    parts.append("".join(cur))
    return parts


def flatten(
    span: Mapping[str, Any],
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
    time_keys: Iterable[str] = DEFAULT_TIME_KEYS,
) -> FlatSpan:
    if depth_limit < 1:
        raise ValueError("depth_limit must be >= 1")
    check_raw_span(span)
    if not isinstance(time_keys, (set, frozenset)):
        time_keys = frozenset(time_keys)
    pairs: dict[str, AttributeValue] = {}
    times: dict[str, int] = {}

    def put(key: str, value: AttributeValue) -> None:
        if key in pairs or key in times:
            raise KeyCollision(f"flattened key {key!r} appears twice")
        if (
            key in time_keys
            and type(value) is int
            and 0 <= value <= U64_MAX
        ):
            times[key] = value
        else:
            pairs[key] = value

    def walk(obj: Mapping[str, Any], prefix: str, depth: int) -> None:
        for k, v in obj.items():
            key = prefix + escape_key(k)
            t = type(v)
            if t is dict:
                if v and depth < depth_limit:
                    walk(v, key + KEY_JOIN, depth + 1)
                else:
                    put(key, canonical_json(v))
            elif t is list:
                put(key, canonical_json(v))
            else:
                put(key, v)

    for k, v in span.items():
        if k == "name":
            continue
        key = escape_key(k)
        t = type(v)
        if t is dict:
            if v and depth_limit > 1:
                walk(v, key + KEY_JOIN, 2)
            else:
                put(key, canonical_json(v))
        elif t is list:
            put(key, canonical_json(v))
        elif t in (str, int, float, bool) or v is None:
            put(key, v)
        else:
            put(key, canonical_json(v))
    return FlatSpan(span["name"], pairs, times)


def unflatten(span: FlatSpan) -> RawSpan:
    out: dict[str, Any] = {"name": span.name}
    for items in (span.pairs.items(), span.time_fields.items()):
        for flat_key, value in items:
            parts = split_key(flat_key)
            node = out
            for part in parts[:-1]:
                child = node.get(part)
                if child is None:
                    child = node[part] = {}
                elif not isinstance(child, dict):
                    raise KeyCollision(f"{flat_key!r} nests under a non-object value")
                node = child
            last = parts[-1]
            if last in node or (node is out and last == "name"):
                raise KeyCollision(f"{flat_key!r} collides with an existing key")
            node[last] = value
    return out


def canonicalize(span: Mapping[str, Any], depth_limit: int = DEFAULT_DEPTH_LIMIT) -> RawSpan:
    """Apply the depth boundary directly: what a flatten/unflatten trip yields.

    Objects past the depth limit, empty objects and arrays turn into their
    canonical JSON text; everything else is kept.
    """

    def conv(obj: Mapping[str, Any], depth: int) -> dict:
        res = {}
        for k, v in obj.items():
            if isinstance(v, dict):
                res[k] = conv(v, depth + 1) if (v and depth < depth_limit) else canonical_json(v)
            elif isinstance(v, list):
                res[k] = canonical_json(v)
            else:
                res[k] = v
        return res

    return conv(span, 1)
