"""Token dictionary: short alphanumeric identifiers for repeated strings.

Identifiers are allocated in the order ``0..9, a..z, A..Z, 00, 01, ...``.
Keys are split on delimiters and interned token by token; values are
interned whole. In encoded positions a literal (un-interned) token is
written with a ``\\~`` prefix so it can never be mistaken for an identifier.
"""

from __future__ import annotations

import string
from typing import Iterable

from .deltas import DictAdd
from .errors import Frozen, UnknownIdentifier

ALPHABET = string.digits + string.ascii_lowercase + string.ascii_uppercase
BASE = len(ALPHABET)
_INDEX = {c: i for i, c in enumerate(ALPHABET)}
LITERAL = "\\~"
DEFAULT_DELIMITERS = frozenset("._")
ENTRY_OVERHEAD = 16


def identifier(index: int) -> str:
    """Return the ``index``-th identifier (0-based) of the allocation order."""
    if index < 0:
        raise ValueError("index must be non-negative")
    length = 1
    block = BASE
    while index >= block:
        index -= block
        length += 1
        block *= BASE
    chars = []
    for _ in range(length):
        index, r = divmod(index, BASE)
        chars.append(ALPHABET[r])
    return "".join(reversed(chars))


def identifier_index(ident: str) -> int:
    """Allocation position of an identifier; inverse of :func:`identifier`."""
    if not ident:
        raise ValueError("empty identifier")
    offset = 0
    block = BASE
    for _ in range(len(ident) - 1):
        offset += block
        block *= BASE
    value = 0
    for c in ident:
        value = value * BASE + _INDEX[c]
    return offset + value


class IdentifierSequence:
    """Cursor over the identifier order; one per independent namespace."""

    def __init__(self, start: int = 0):
        self.next_index = start

    def __call__(self) -> str:
        ident = identifier(self.next_index)
        self.next_index += 1
        return ident

    def peek(self) -> str:
        return identifier(self.next_index)


def check_delimiters(delimiters: Iterable[str]) -> frozenset[str]:
    delims = frozenset(delimiters)
    if not delims:
        raise ValueError("at least one delimiter is required")
    for d in delims:
        if len(d) != 1 or d.isalnum() or d in "\\~":
            raise ValueError(f"invalid key delimiter {d!r}")
    return delims


def tokenize_key(key: str, delimiters: Iterable[str] = DEFAULT_DELIMITERS) -> tuple[list[str], list[str]]:
    """Split ``key`` into tokens plus the delimiter found at each boundary.

    ``len(boundaries) == len(tokens) - 1`` always holds, and
    :func:`reassemble` puts the key back together exactly.
    """
    tokens: list[str] = []
    boundaries: list[str] = []
    cur = 0
    for i, c in enumerate(key):
        if c in delimiters:
            tokens.append(key[cur:i])
            boundaries.append(c)
            cur = i + 1
    tokens.append(key[cur:])
    return tokens, boundaries


def reassemble(tokens: list[str], boundaries: list[str]) -> str:
    parts = [tokens[0]]
    for b, t in zip(boundaries, tokens[1:]):
        parts.append(b)
        parts.append(t)
    return "".join(parts)


class TokenDictionary:
    """Bidirectional token <-> identifier map.

    ``intern`` returns the identifier and, when a new entry was created, the
    ``DictAdd`` op that announces it to the receiver.
    """

    def __init__(self, delimiters: Iterable[str] = DEFAULT_DELIMITERS):
        self.delimiters = check_delimiters(delimiters)
        self.forward: dict[str, str] = {}
        self.reverse: dict[str, str] = {}
        self._ids = IdentifierSequence()
        self.frozen = False
        self.size_bytes = 0
        self._journal: list[str] | None = None

    def __len__(self) -> int:
        return len(self.forward)

    @property
    def next_id(self) -> int:
        return self._ids.next_index

    def next_identifier(self) -> str:
        return self._ids()

    def intern(self, token: str) -> tuple[str, DictAdd | None]:
        ident = self.forward.get(token)
        if ident is not None:
            return ident, None
        if self.frozen:
            raise Frozen(f"dictionary frozen; cannot intern {token!r}")
        ident = self._ids()
        self.forward[token] = ident
        self.reverse[ident] = token
        self.size_bytes += ENTRY_OVERHEAD + len(token.encode("utf-8", "surrogatepass")) + len(ident)
        if self._journal is not None:
            self._journal.append(token)
        return ident, DictAdd(ident, token)

    def lookup(self, ident: str) -> str:
        try:
            return self.reverse[ident]
        except KeyError:
            raise UnknownIdentifier(f"unknown dictionary identifier {ident!r}") from None

    # transactional interning, used by the exporter's budget check
    def begin(self) -> None:
        self._journal = []

    def commit(self) -> None:
        self._journal = None

    def rollback(self) -> None:
        journal, self._journal = self._journal or [], None
        for token in reversed(journal):
            ident = self.forward.pop(token)
            del self.reverse[ident]
            self.size_bytes -= ENTRY_OVERHEAD + len(token.encode("utf-8", "surrogatepass")) + len(ident)
            self._ids.next_index -= 1

    # --- encoded forms ------------------------------------------------------
    def encode_token(self, token: str, ops: list | None = None, intern: bool = True) -> str:
        """Identifier for ``token``, interning it when allowed, else a literal.

        New ``DictAdd`` ops are appended to ``ops``.
        """
        ident = self.forward.get(token)
        if ident is not None:
            return ident
        if intern and not self.frozen:
            ident, op = self.intern(token)
            if ops is not None:
                ops.append(op)
            return ident
        return LITERAL + token

    def decode_token(self, encoded: str) -> str:
        if encoded.startswith(LITERAL):
            return encoded[len(LITERAL):]
        return self.lookup(encoded)

    def encode_key(self, key: str, ops: list | None = None) -> str:
        tokens, boundaries = tokenize_key(key, self.delimiters)
        return reassemble([self.encode_token(t, ops) for t in tokens], boundaries)

    def decode_key(self, encoded: str) -> str:
        return decode_key(encoded, self.reverse, self.delimiters)


def decode_key(encoded: str, reverse: dict[str, str], delimiters: Iterable[str]) -> str:
    """Decode an encoded key against a reverse map (usable receiver-side)."""
    parts, boundaries = tokenize_key(encoded, delimiters)
    out = []
    for p in parts:
        if p.startswith(LITERAL):
            out.append(p[len(LITERAL):])
            continue
        try:
            out.append(reverse[p])
        except KeyError:
            raise UnknownIdentifier(f"unknown dictionary identifier {p!r}") from None
    return reassemble(out, boundaries)


def decode_value(encoded: str, reverse: dict[str, str]) -> str:
    if encoded.startswith(LITERAL):
        return encoded[len(LITERAL):]
    try:
        return reverse[encoded]
    except KeyError:
        raise UnknownIdentifier(f"unknown dictionary identifier {encoded!r}") from None
