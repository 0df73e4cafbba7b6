"""Span Retrieval Tree: the exporter-side structure that spans are matched against.

One :class:`NameSubtree` per span name holds a prefix tree over the values
of that name's *universal* keys (keys with at most ``psi`` distinct values),
a leaf list of *local* keys whose values travel with every span, and a
path-string table for O(m) matching. A new path triggers the counting,
demotion and reordering steps; everything that changes is reported as
delta ops so a receiver can mirror it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .deltas import Freeze, KeyOrder, LocalKeySet, Op, PathAdd, PathDelete, TimeBase
from .dictionary import (
    DEFAULT_DELIMITERS,
    LITERAL,
    IdentifierSequence,
    TokenDictionary,
    check_delimiters,
    identifier_index,
)
from .spans import DEFAULT_DEPTH_LIMIT, DEFAULT_TIME_KEYS, FlatSpan, _escape_component, value_token

NODE_OVERHEAD = 16
DEFAULT_BUDGET = 5 * 2**20


def _blen(s: str) -> int:
    return len(s) if s.isascii() else len(s.encode("utf-8", "surrogatepass"))


@dataclass(frozen=True)
class SrtConfig:
    psi: int = 1000
    depth_limit: int = DEFAULT_DEPTH_LIMIT
    budget_bytes: int = DEFAULT_BUDGET
    time_base_period_ns: int = 1_000_000_000
    time_keys: frozenset[str] = DEFAULT_TIME_KEYS
    delimiters: frozenset[str] = DEFAULT_DELIMITERS

    def __post_init__(self):
        if self.psi < 1:
            raise ValueError("psi must be >= 1")
        if self.depth_limit < 1:
            raise ValueError("depth_limit must be >= 1")
        if self.budget_bytes <= 0:
            raise ValueError("budget_bytes must be positive")
        if self.time_base_period_ns < 0:
            raise ValueError("time_base_period_ns must be >= 0")
        object.__setattr__(self, "time_keys", frozenset(self.time_keys))
        object.__setattr__(self, "delimiters", check_delimiters(self.delimiters))


def compose_path_string(name: str, values: Iterable) -> str:
    """Join a name and universal values into the path-table key.

    ``values`` are attribute values in universal-key order. Components are
    separated by ``,``; commas and backslashes inside components are escaped.
    """
    return ",".join([_escape_component(name), *(value_token(v) for v in values)])


def _path_string(name_token: str, tokens: tuple[str, ...]) -> str:
    if not tokens:
        return name_token
    return name_token + "," + ",".join(tokens)


@dataclass
class InsertOutcome:
    path_id: str | None
    deltas: list[Op] = field(default_factory=list)
    epoch: int = 0
    fallback_reason: str | None = None

    @property
    def is_fallback(self) -> bool:
        return self.path_id is None


class NameSubtree:
    """Tree, key lists and counters for all spans sharing one name."""

    def __init__(self, name: str, universal_keys: list[str], local_keys: list[str], time_keys: tuple[str, ...]):
        self.name = name
        self.name_token = _escape_component(name)
        self.universal_keys = universal_keys
        self.local_keys = local_keys
        self.time_keys = time_keys
        self.time_key_set = frozenset(time_keys)
        self.n_keys = len(universal_keys) + len(local_keys)
        self.value_sets: dict[str, set[str]] = {k: set() for k in universal_keys}
        self.root: dict = {}
        self.path_tokens: dict[str, tuple[str, ...]] = {}
        self.path_table: dict[str, str] = {}
        self.node_count = 0
        self.size_bytes = 0
        self.epoch = 0

    @property
    def value_counts(self) -> dict[str, int]:
        return {k: len(self.value_sets[k]) for k in self.universal_keys}

    def base_size(self) -> int:
        size = NODE_OVERHEAD + _blen(self.name)
        for k in self.universal_keys:
            size += NODE_OVERHEAD + _blen(k)
        for k in self.local_keys:
            size += NODE_OVERHEAD + _blen(k)
        for k in self.time_keys:
            size += NODE_OVERHEAD + _blen(k)
        return size

    def graft_depth(self, tokens: tuple[str, ...]) -> int:
        node = self.root
        d = 0
        n = len(tokens)
        while d < n:
            child = node.get(tokens[d])
            if child is None:
                return d
            node = child
            d += 1
        return d

    def _graft(self, tokens: tuple[str, ...], path_id: str) -> int:
        """Add one path; returns the estimated bytes of the nodes it created."""
        node = self.root
        last = len(tokens) - 1
        added = 0
        for i, tok in enumerate(tokens):
            if i == last:
                node[tok] = path_id
                added += NODE_OVERHEAD + _blen(tok)
            else:
                child = node.get(tok)
                if child is None:
                    child = node[tok] = {}
                    self.node_count += 1
                    added += NODE_OVERHEAD + _blen(tok)
                node = child
        if tokens:
            self.node_count += 1
        return added

    def iter_nodes(self) -> Iterator[tuple[int, str, str, object]]:
        """Yield ``(depth, key, token, child)`` in depth-first order."""
        keys = self.universal_keys

        def walk(node: dict, depth: int):
            for tok, child in node.items():
                yield depth, keys[depth], tok, child
                if isinstance(child, dict):
                    yield from walk(child, depth + 1)

        yield from walk(self.root, 0)


class SpanRetrievalTree:
    """Per-session exporter structure: name subtrees, path table, time base."""

    def __init__(self, config: SrtConfig | None = None, dictionary: TokenDictionary | None = None):
        self.config = config or SrtConfig()
        self.dictionary = dictionary or TokenDictionary(self.config.delimiters)
        self.subtrees: dict[str, NameSubtree] = {}
        self._path_ids = IdentifierSequence()
        self.time_base = 0
        self.revision = 0
        self.frozen = False
        self.locality_violations = 0
        self.frozen_fallbacks = 0
        self._subtree_bytes = 0
        self.peak_size_bytes = 0

    # --- views ------------------------------------------------------------
    @property
    def next_path_id(self) -> int:
        return self._path_ids.next_index

    @property
    def path_table(self) -> dict[str, str]:
        table: dict[str, str] = {}
        for sub in self.subtrees.values():
            table.update(sub.path_table)
        return table

    def estimated_size(self) -> int:
        return self._subtree_bytes + self.dictionary.size_bytes

    def node_count(self) -> int:
        return sum(sub.node_count for sub in self.subtrees.values())

    def materialize(self) -> dict[str, tuple[str, frozenset[tuple[str, str]]]]:
        """``{path_id: (name, {(key, value token), ...})}`` for every live path."""
        out = {}
        for sub in self.subtrees.values():
            for pid, tokens in sub.path_tokens.items():
                out[pid] = (sub.name, frozenset(zip(sub.universal_keys, tokens)))
        return out

    # --- matching ---------------------------------------------------------
    def _span_tokens(self, sub: NameSubtree, span: FlatSpan) -> tuple[str, ...] | None:
        pairs = span.pairs
        if len(pairs) != sub.n_keys or span.time_fields.keys() != sub.time_key_set:
            return None
        try:
            tokens = tuple([value_token(pairs[k]) for k in sub.universal_keys])
        except KeyError:
            return None
        for k in sub.local_keys:
            if k not in pairs:
                return None
        return tokens

    def lookup(self, span: FlatSpan) -> str | None:
        """Path id of ``span`` under the current structure, without mutating."""
        sub = self.subtrees.get(span.name)
        if sub is None:
            return None
        tokens = self._span_tokens(sub, span)
        if tokens is None:
            return None
        return sub.path_table.get(_path_string(sub.name_token, tokens))

    def insert(self, span: FlatSpan) -> InsertOutcome:
        sub = self.subtrees.get(span.name)
        if sub is None:
            return self._insert_new_name(span)
        tokens = self._span_tokens(sub, span)
        if tokens is None:
            self.locality_violations += 1
            return InsertOutcome(None, [], sub.epoch, "locality")
        pstr = _path_string(sub.name_token, tokens)
        pid = sub.path_table.get(pstr)
        if pid is not None:
            return InsertOutcome(pid, [], sub.epoch)
        if self.frozen:
            self.frozen_fallbacks += 1
            return InsertOutcome(None, [], sub.epoch, "frozen")
        return self._add_path(sub, tokens, pstr)

    # --- encoding helpers -------------------------------------------------
    def _enc_name(self, name: str, ops: list[Op]) -> str:
        return self.dictionary.encode_token(name, ops)

    def _enc_keys(self, keys: Iterable[str], ops: list[Op]) -> tuple[str, ...]:
        enc = self.dictionary.encode_key
        return tuple(enc(k, ops) for k in keys)

    def _enc_values(self, keys: list[str], tokens: tuple[str, ...], seen: dict[str, set[str]], ops: list[Op]) -> tuple[str, ...]:
        # a value is interned from its second appearance under the same key
        d = self.dictionary
        out = []
        for k, tok in zip(keys, tokens):
            ident = d.forward.get(tok)
            if ident is not None:
                out.append(ident)
            elif tok in seen.get(k, ()):
                out.append(d.encode_token(tok, ops))
            else:
                out.append(LITERAL + tok)
        return tuple(out)

    def _fits(self, subtree_bytes: int) -> bool:
        return subtree_bytes + self.dictionary.size_bytes <= self.config.budget_bytes

    def _freeze(self, epoch: int) -> InsertOutcome:
        self.frozen = True
        self.dictionary.frozen = True
        self.frozen_fallbacks += 1
        self.revision += 1
        return InsertOutcome(None, [Freeze()], epoch, "frozen")

    def _note_size(self) -> None:
        size = self.estimated_size()
        if size > self.peak_size_bytes:
            self.peak_size_bytes = size

    # --- insertion paths --------------------------------------------------
    def _insert_new_name(self, span: FlatSpan) -> InsertOutcome:
        if self.frozen:
            self.frozen_fallbacks += 1
            return InsertOutcome(None, [], 0, "frozen")
        keys = list(span.pairs)
        tokens = tuple(value_token(v) for v in span.pairs.values())
        sub = NameSubtree(span.name, keys, [], tuple(span.time_fields))
        pid = self._path_ids.peek()
        pstr = _path_string(sub.name_token, tokens)
        added = sub.base_size()
        added += sum(NODE_OVERHEAD + _blen(t) for t in tokens)  # chain nodes
        added += NODE_OVERHEAD * len(tokens)  # value-set entries
        added += NODE_OVERHEAD + _blen(pstr) + len(pid)

        d = self.dictionary
        d.begin()
        ops: list[Op] = []
        name_enc = self._enc_name(span.name, ops)
        key_order = KeyOrder(name_enc, self._enc_keys(keys, ops))
        local_set = LocalKeySet(name_enc, (), self._enc_keys(sub.time_keys, ops))
        values = self._enc_values(keys, tokens, {}, ops)
        if not self._fits(self._subtree_bytes + added):
            d.rollback()
            return self._freeze(0)
        d.commit()

        self._path_ids()
        for k, tok in zip(keys, tokens):
            sub.value_sets[k].add(tok)
        sub._graft(tokens, pid)
        sub.path_tokens[pid] = tokens
        sub.path_table[pstr] = pid
        sub.size_bytes = added
        self._subtree_bytes += added
        self.subtrees[span.name] = sub
        self.revision += 1
        self._note_size()
        ops.extend([key_order, local_set, PathAdd(pid, name_enc, values)])
        return InsertOutcome(pid, ops, sub.epoch)

    def _add_path(self, sub: NameSubtree, tokens: tuple[str, ...], pstr: str) -> InsertOutcome:
        keys = sub.universal_keys
        psi = self.config.psi
        counts = {}
        fresh = []
        for k, tok in zip(keys, tokens):
            vs = sub.value_sets[k]
            if tok in vs:
                counts[k] = len(vs)
            else:
                counts[k] = len(vs) + 1
                fresh.append(k)
        demoted = [k for k in keys if counts[k] > psi]
        remaining = [k for k in keys if counts[k] <= psi]
        order = sorted(remaining, key=counts.__getitem__)  # stable
        if not demoted and order == keys:
            return self._graft_path(sub, tokens, pstr, fresh)
        return self._rebuild(sub, order, demoted, tokens)

    def _graft_path(self, sub: NameSubtree, tokens: tuple[str, ...], pstr: str, fresh: list[str]) -> InsertOutcome:
        depth = sub.graft_depth(tokens)
        pid = self._path_ids.peek()
        added = sum(NODE_OVERHEAD + _blen(t) for t in tokens[depth:])
        added += NODE_OVERHEAD * len(fresh)
        added += NODE_OVERHEAD + _blen(pstr) + len(pid)

        d = self.dictionary
        d.begin()
        ops: list[Op] = []
        name_enc = self._enc_name(sub.name, ops)
        values = self._enc_values(sub.universal_keys, tokens, sub.value_sets, ops)
        if not self._fits(self._subtree_bytes + added):
            d.rollback()
            return self._freeze(sub.epoch)
        d.commit()

        self._path_ids()
        for k, tok in zip(sub.universal_keys, tokens):
            sub.value_sets[k].add(tok)
        sub._graft(tokens, pid)
        sub.path_tokens[pid] = tokens
        sub.path_table[pstr] = pid
        sub.size_bytes += added
        self._subtree_bytes += added
        self.revision += 1
        self._note_size()
        ops.append(PathAdd(pid, name_enc, values))
        return InsertOutcome(pid, ops, sub.epoch)

    def _build_subtree(
        self,
        old: NameSubtree,
        order: list[str],
        demoted: list[str],
        groups: dict[tuple[str, ...], str],
        value_sets: dict[str, set[str]],
    ) -> NameSubtree:
        new = NameSubtree(old.name, list(order), old.local_keys + demoted, old.time_keys)
        new.value_sets = value_sets
        new.epoch = old.epoch
        size = new.base_size() + NODE_OVERHEAD * sum(len(v) for v in value_sets.values())
        for tokens, pid in groups.items():
            size += new._graft(tokens, pid)
            new.path_tokens[pid] = tokens
            pstr = _path_string(new.name_token, tokens)
            new.path_table[pstr] = pid
            size += NODE_OVERHEAD + _blen(pstr) + len(pid)
        new.size_bytes = size
        return new

    def _rebuild(
        self,
        sub: NameSubtree,
        order: list[str],
        demoted: list[str],
        extra: tuple[str, ...] | None = None,
    ) -> InsertOutcome:
        """Reorder keys, splice out demoted ones and merge equal paths.

        ``extra`` is the value tuple of a not-yet-inserted path (old key
        order). Surviving paths keep their ids; paths that become equal are
        merged into the one allocated first.
        """
        old_keys = sub.universal_keys
        pos = {k: i for i, k in enumerate(old_keys)}
        idx = [pos[k] for k in order]

        groups: dict[tuple[str, ...], str] = {}
        dropped: list[str] = []
        for pid, toks in sub.path_tokens.items():
            proj = tuple([toks[i] for i in idx])
            cur = groups.get(proj)
            if cur is None:
                groups[proj] = pid
            elif identifier_index(pid) < identifier_index(cur):
                groups[proj] = pid
                dropped.append(cur)
            else:
                dropped.append(pid)

        new_pid = None
        extra_proj = None
        if extra is not None:
            extra_proj = tuple([extra[i] for i in idx])
            if extra_proj not in groups:
                new_pid = self._path_ids.peek()
                groups[extra_proj] = new_pid

        value_sets = {k: set(sub.value_sets[k]) for k in order}
        if extra is not None:
            for k in order:
                value_sets[k].add(extra[pos[k]])

        new = self._build_subtree(sub, order, demoted, groups, value_sets)
        if dropped:
            new.epoch = sub.epoch + 1
        subtree_bytes = self._subtree_bytes - sub.size_bytes + new.size_bytes

        d = self.dictionary
        d.begin()
        ops: list[Op] = []
        name_enc = self._enc_name(sub.name, ops)
        if order != old_keys:
            ops.append(KeyOrder(name_enc, self._enc_keys(order, ops)))
        if demoted:
            ops.append(
                LocalKeySet(name_enc, self._enc_keys(new.local_keys, ops), self._enc_keys(new.time_keys, ops))
            )
        for pid in sorted(dropped, key=identifier_index):
            ops.append(PathDelete(pid))
        if new_pid is not None:
            ops.append(PathAdd(new_pid, name_enc, self._enc_values(order, extra_proj, sub.value_sets, ops)))
        if not self._fits(subtree_bytes):
            d.rollback()
            return self._freeze(sub.epoch)
        d.commit()

        if new_pid is not None:
            self._path_ids()
        self.subtrees[sub.name] = new
        self._subtree_bytes = subtree_bytes
        self.revision += 1
        self._note_size()
        pid = groups[extra_proj] if extra is not None else None
        return InsertOutcome(pid, ops, new.epoch)

    # --- explicit operations ----------------------------------------------
    def restructure(self, name: str) -> list[Op]:
        """Sort a subtree's universal keys by ascending distinct-value count.

        Ties keep their previous order. Identical nodes end up merged since
        the tree is rebuilt as a trie. Returns the delta ops (empty when the
        order is already sorted).
        """
        sub = self.subtrees[name]
        counts = sub.value_counts
        psi = self.config.psi
        demoted = [k for k in sub.universal_keys if counts[k] > psi]
        order = sorted((k for k in sub.universal_keys if counts[k] <= psi), key=counts.__getitem__)
        if order == sub.universal_keys and not demoted:
            return []
        if self.frozen:
            return []
        outcome = self._rebuild(sub, order, demoted)
        return outcome.deltas

    def enforce_budget(self) -> list[Op]:
        """Freeze the structure when its estimated size exceeds the budget."""
        if self.frozen or self.estimated_size() <= self.config.budget_bytes:
            return []
        return self._freeze(0).deltas

    def freeze(self) -> list[Op]:
        if self.frozen:
            return []
        return self._freeze(0).deltas

    def reset_time_base(self, now: int) -> TimeBase:
        self.time_base = now
        return TimeBase(now)

    # --- debugging --------------------------------------------------------
    def dump(self) -> str:
        """Deterministic text rendering, one node per line."""
        lines = [f"srt revision={self.revision} time_base={self.time_base} frozen={self.frozen}"]
        for sub in self.subtrees.values():
            lines.append(
                f"{sub.name} universal=[{', '.join(sub.universal_keys)}] "
                f"local=[{', '.join(sub.local_keys)}] time=[{', '.join(sub.time_keys)}]"
            )
            for depth, key, tok, child in sub.iter_nodes():
                pad = "  " * (depth + 1)
                if isinstance(child, dict):
                    lines.append(f"{pad}{key}={tok}")
                else:
                    lines.append(f"{pad}{key}={tok} -> {child}")
            if not sub.universal_keys:
                for pid in sub.path_tokens:
                    lines.append(f"  -> {pid}")
        return "\n".join(lines) + "\n"
