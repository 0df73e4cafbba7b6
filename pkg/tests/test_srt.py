import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srtc.deltas import Freeze, KeyOrder, LocalKeySet, PathAdd, PathDelete
from srtc.spans import FlatSpan, flatten, value_token
from srtc.srt import NODE_OVERHEAD, SpanRetrievalTree, SrtConfig, compose_path_string

ACCESS_MEM = [
    ("WRITE", "address1", "64 bytes", "id1"),
    ("READ", "address2", "128 bytes", "id2"),
    ("READ", "address2", "64 bytes", "id3"),
    ("WRITE", "address1", "64 bytes", "id4"),
    ("READ", "address2", "256 bytes", "id5"),
]
ACCESS_DB = [
    ("INSERT", "MySQL", "SUCCESS", 1),
    ("SELECT", "MySQL", "SUCCESS", 1),
    ("DELETE", "MySQL", "SUCCESS", 1),
]


def mem_span(row):
    op, addr, size, sid = row
    return flatten({"name": "Access Mem", "operation": op, "address": addr, "data_size": size, "span_id": sid})


def db_span(row):
    typ, system, status, num = row
    return flatten({"name": "Access DB", "type": typ, "DB system": system, "status": status, "row.num": num})


# --- reference model ----------------------------------------------------------

class ReferenceTree:
    """Set-level model of the insertion rules, ignoring tree shape and ids."""

    def __init__(self, psi):
        self.psi = psi
        self.names = {}

    def insert(self, span: FlatSpan):
        entry = self.names.get(span.name)
        tokens = {k: value_token(v) for k, v in span.pairs.items()}
        if entry is None:
            entry = {"keys": set(tokens), "local": set(), "values": {k: set() for k in tokens}, "paths": set()}
            self.names[span.name] = entry
        elif set(tokens) != entry["keys"]:
            return "fallback"
        universal = entry["keys"] - entry["local"]
        proj = frozenset((k, tokens[k]) for k in universal)
        if proj in entry["paths"]:
            return "match"
        for k in universal:
            entry["values"][k].add(tokens[k])
        demote = {k for k in universal if len(entry["values"][k]) > self.psi}
        entry["local"] |= demote
        keep = entry["keys"] - entry["local"]
        entry["paths"] = {frozenset(kv for kv in p if kv[0] in keep) for p in entry["paths"]}
        entry["paths"].add(frozenset(kv for kv in proj if kv[0] in keep))
        return "new"

    def path_set(self):
        return {(name, p) for name, e in self.names.items() for p in e["paths"]}


def trie_nodes(paths, order):
    seen = set()
    for p in paths:
        for d in range(1, len(order) + 1):
            seen.add(tuple(p[i] for i in order[:d]))
    return len(seen)


def recomputed_size(srt: SpanRetrievalTree) -> int:
    """Size estimate rebuilt from scratch."""
    total = srt.dictionary.size_bytes
    for sub in srt.subtrees.values():
        total += NODE_OVERHEAD + len(sub.name.encode())
        for k in sub.universal_keys + sub.local_keys + list(sub.time_keys):
            total += NODE_OVERHEAD + len(k.encode())
        total += NODE_OVERHEAD * sum(len(v) for v in sub.value_sets.values())
        for pstr, pid in sub.path_table.items():
            total += NODE_OVERHEAD + len(pstr.encode()) + len(pid)
        for _d, _k, tok, _c in sub.iter_nodes():
            total += NODE_OVERHEAD + len(tok.encode())
    return total


def check_structure(srt: SpanRetrievalTree):
    psi = srt.config.psi
    ids = []
    for sub in srt.subtrees.values():
        counts = sub.value_counts
        assert all(c <= psi for c in counts.values())
        assert not set(sub.universal_keys) & set(sub.local_keys)
        assert [counts[k] for k in sub.universal_keys] == sorted(counts[k] for k in sub.universal_keys)
        leaves = []

        def walk(node, depth):
            for tok, child in node.items():
                if isinstance(child, dict):
                    walk(child, depth + 1)
                else:
                    assert depth == len(sub.universal_keys) - 1
                    leaves.append(child)

        if sub.universal_keys:
            walk(sub.root, 0)
        else:
            leaves = list(sub.path_tokens)
        assert sorted(leaves) == sorted(sub.path_tokens)
        assert len(set(sub.path_table.values())) == len(sub.path_table) == len(sub.path_tokens)
        for pstr, pid in sub.path_table.items():
            assert pstr == ",".join([sub.name_token, *sub.path_tokens[pid]])
        ids.extend(sub.path_tokens)
        nodes = sum(1 for _ in sub.iter_nodes())
        assert nodes == sub.node_count
    assert len(ids) == len(set(ids))
    assert srt.estimated_size() == recomputed_size(srt)


# --- golden scenarios ---------------------------------------------------------

def test_first_span_chains_all_fields():
    srt = SpanRetrievalTree(SrtConfig(psi=3))
    out = srt.insert(mem_span(ACCESS_MEM[0]))
    assert out.path_id == "0"
    sub = srt.subtrees["Access Mem"]
    assert sub.universal_keys == ["operation", "address", "data_size", "span_id"]
    assert sub.node_count == 4
    assert any(type(op) is PathAdd for op in out.deltas)


def test_access_mem_rows():
    srt = SpanRetrievalTree(SrtConfig(psi=3))
    outs = [srt.insert(mem_span(r)) for r in ACCESS_MEM]
    assert [o.path_id for o in outs] == ["0", "1", "2", "0", "3"]
    sub = srt.subtrees["Access Mem"]
    assert sub.local_keys == ["span_id"]
    universal = {
        tuple(dict(kvs)[k] for k in ("operation", "address", "data_size"))
        for _name, kvs in srt.materialize().values()
    }
    assert universal == {
        ("WRITE", "address1", value_token("64 bytes")),
        ("READ", "address2", value_token("128 bytes")),
        ("READ", "address2", value_token("64 bytes")),
        ("READ", "address2", value_token("256 bytes")),
    }
    check_structure(srt)


def test_row_four_reuses_row_one_path_and_demotes_span_id():
    srt = SpanRetrievalTree(SrtConfig(psi=3))
    for r in ACCESS_MEM[:3]:
        srt.insert(mem_span(r))
    out = srt.insert(mem_span(ACCESS_MEM[3]))
    assert out.path_id == "0"
    # the fourth distinct span_id exceeds psi=3, so this insertion demotes it
    kinds = [type(op) for op in out.deltas]
    assert KeyOrder in kinds and LocalKeySet in kinds
    assert PathAdd not in kinds and PathDelete not in kinds


def test_access_db_restructure():
    srt = SpanRetrievalTree()
    for r in ACCESS_DB:
        srt.insert(db_span(r))
    sub = srt.subtrees["Access DB"]
    assert sub.universal_keys[-1] == "type"
    toks = [tok for _d, _k, tok, _c in sub.iter_nodes()]
    for v in ("MySQL", "SUCCESS", 1):
        assert toks.count(value_token(v)) == 1
    leaf_level = [tok for d, _k, tok, _c in sub.iter_nodes() if d == 3]
    assert len(leaf_level) == 3
    assert "Access DB,MySQL,SUCCESS,1,SELECT" in sub.path_table
    check_structure(srt)


def test_restructure_fixed_point():
    srt = SpanRetrievalTree()
    for r in ACCESS_DB:
        srt.insert(db_span(r))
    before = srt.dump()
    assert srt.restructure("Access DB") == []
    assert srt.dump() == before


def test_sorted_order_is_not_always_minimal():
    # keys A (2 values), B (3), C (4) where C determines A
    rows = [(1, 1, 3), (0, 0, 0), (1, 2, 3), (1, 0, 2), (0, 1, 1)]
    srt = SpanRetrievalTree()
    for a, b, c in rows:
        srt.insert(FlatSpan("n", {"A": f"a{a}", "B": f"b{b}", "C": f"c{c}"}))
    sub = srt.subtrees["n"]
    assert sub.universal_keys == ["A", "B", "C"]
    assert sub.node_count == trie_nodes(rows, (0, 1, 2)) == 12
    assert trie_nodes(rows, (0, 2, 1)) == 11


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(*(st.integers(0, 3) for _ in range(4))), min_size=1, max_size=25))
def test_restructured_node_count_within_all_orders(rows):
    srt = SpanRetrievalTree()
    for r in rows:
        srt.insert(FlatSpan("n", {f"k{i}": v for i, v in enumerate(r)}))
    sub = srt.subtrees["n"]
    counts = [trie_nodes(set(rows), o) for o in itertools.permutations(range(4))]
    assert min(counts) <= sub.node_count <= max(counts)
    order = tuple(int(k[1:]) for k in sub.universal_keys)
    assert sub.node_count == trie_nodes(set(rows), order)


# --- path strings ---------------------------------------------------------------

def test_compose_path_string():
    assert compose_path_string("Access DB", ["MySQL", "SUCCESS", 1, "SELECT"]) == "Access DB,MySQL,SUCCESS,1,SELECT"
    assert compose_path_string("n", []) == "n"
    assert compose_path_string("n", ["a,b"]) == "n,a\\,b"


values = st.one_of(st.text(alphabet="a,\\1t", max_size=4), st.integers(-2, 2), st.booleans(), st.none())


@given(st.text(alphabet="n,\\", min_size=1, max_size=3), st.lists(values, max_size=3),
       st.text(alphabet="n,\\", min_size=1, max_size=3), st.lists(values, max_size=3))
def test_compose_is_injective(n1, v1, n2, v2):
    if compose_path_string(n1, v1) == compose_path_string(n2, v2):
        assert n1 == n2
        assert [value_token(v) for v in v1] == [value_token(v) for v in v2]


# --- invariants under random streams --------------------------------------------

name_keys = {"alpha": ["a", "b", "c"], "beta": ["p.q", "r_s", "t", "u"], "gamma": []}


@st.composite
def span_streams(draw):
    out = []
    for _ in range(draw(st.integers(1, 60))):
        name = draw(st.sampled_from(sorted(name_keys)))
        pairs = {k: draw(st.one_of(st.integers(0, 6), st.sampled_from(["x", "y", "1", "true"]))) for k in name_keys[name]}
        out.append(FlatSpan(name, pairs))
    return out


@settings(max_examples=200, deadline=None)
@given(span_streams(), st.sampled_from([1, 2, 3, 5, 1000]))
def test_matches_reference_model(stream, psi):
    srt = SpanRetrievalTree(SrtConfig(psi=psi))
    ref = ReferenceTree(psi)
    for span in stream:
        expect = ref.insert(span)
        out = srt.insert(span)
        assert out.path_id is not None
        if expect == "match":
            assert out.deltas == []
        else:
            assert out.deltas
        assert srt.lookup(span) == out.path_id
    got = {(name, kvs) for name, kvs in srt.materialize().values()}
    assert got == ref.path_set()
    for name, e in ref.names.items():
        assert set(srt.subtrees[name].local_keys) == e["local"]
    check_structure(srt)


@settings(max_examples=50, deadline=None)
@given(span_streams(), st.sampled_from([1, 3, 1000]))
def test_insert_is_deterministic(stream, psi):
    dumps = []
    for _ in range(2):
        srt = SpanRetrievalTree(SrtConfig(psi=psi))
        for span in stream:
            srt.insert(span)
        dumps.append(srt.dump())
    assert dumps[0] == dumps[1]


@settings(max_examples=100, deadline=None)
@given(span_streams())
def test_revision_increases_only_on_mutation(stream):
    srt = SpanRetrievalTree(SrtConfig(psi=2))
    for span in stream:
        rev = srt.revision
        out = srt.insert(span)
        if out.deltas:
            assert srt.revision > rev
        else:
            assert srt.revision == rev


def test_path_ids_survive_demotion_merges():
    srt = SpanRetrievalTree(SrtConfig(psi=2))
    a = srt.insert(FlatSpan("n", {"k": "x", "id": "1"})).path_id
    b = srt.insert(FlatSpan("n", {"k": "y", "id": "2"})).path_id
    out = srt.insert(FlatSpan("n", {"k": "x", "id": "3"}))
    assert (a, b) == ("0", "1")
    assert out.path_id == "0"
    assert srt.materialize() == {"0": ("n", frozenset({("k", "x")})), "1": ("n", frozenset({("k", "y")}))}


def test_merge_keeps_smallest_id_and_deletes_others():
    srt = SpanRetrievalTree(SrtConfig(psi=2))
    srt.insert(FlatSpan("n", {"k": "x", "id": "1"}))
    srt.insert(FlatSpan("n", {"k": "x", "id": "2"}))
    out = srt.insert(FlatSpan("n", {"k": "x", "id": "3"}))
    assert out.path_id == "0"
    assert PathDelete("1") in out.deltas
    assert srt.subtrees["n"].epoch == 1


# --- locality, budget, time base -------------------------------------------------

def test_locality_violation_falls_back():
    srt = SpanRetrievalTree()
    srt.insert(FlatSpan("n", {"a": 1}))
    before = srt.dump()
    out = srt.insert(FlatSpan("n", {"a": 1, "b": 2}))
    assert out.is_fallback and out.fallback_reason == "locality"
    assert out.deltas == []
    assert srt.locality_violations == 1
    assert srt.dump() == before


def test_enforce_budget_noop_under_budget():
    srt = SpanRetrievalTree()
    srt.insert(FlatSpan("n", {"a": 1}))
    assert srt.enforce_budget() == []
    assert not srt.frozen


def test_tiny_budget_freezes_once():
    srt = SpanRetrievalTree(SrtConfig(budget_bytes=1))
    first = srt.insert(FlatSpan("n", {"a": 1}))
    assert first.is_fallback and first.deltas == [Freeze()]
    second = srt.insert(FlatSpan("m", {"a": 2}))
    assert second.is_fallback and second.deltas == []
    assert srt.estimated_size() == 0


@settings(max_examples=100, deadline=None)
@given(span_streams(), st.integers(200, 3000))
def test_budget_never_exceeded(stream, budget):
    srt = SpanRetrievalTree(SrtConfig(psi=3, budget_bytes=budget))
    freezes = 0
    for span in stream:
        out = srt.insert(span)
        freezes += out.deltas.count(Freeze())
        assert srt.estimated_size() <= budget
        if srt.frozen and not out.is_fallback:
            assert srt.lookup(span) == out.path_id
    assert freezes == (1 if srt.frozen else 0)
    assert srt.peak_size_bytes <= budget


def test_reset_time_base():
    srt = SpanRetrievalTree()
    op = srt.reset_time_base(1234)
    assert srt.time_base == 1234
    assert op.nanos == 1234


def test_config_validation():
    with pytest.raises(ValueError):
        SrtConfig(psi=0)
    with pytest.raises(ValueError):
        SrtConfig(budget_bytes=0)
    with pytest.raises(ValueError):
        SrtConfig(depth_limit=0)


def test_dump_format():
    srt = SpanRetrievalTree(SrtConfig(psi=3))
    for r in ACCESS_MEM:
        srt.insert(mem_span(r))
    assert srt.dump() == (
        "srt revision=5 time_base=0 frozen=False\n"
        "Access Mem universal=[operation, address, data_size] local=[span_id] time=[]\n"
        "  operation=WRITE\n"
        "    address=address1\n"
        "      data_size=\\'64 bytes -> 0\n"
        "  operation=READ\n"
        "    address=address2\n"
        "      data_size=\\'128 bytes -> 1\n"
        "      data_size=\\'64 bytes -> 2\n"
        "      data_size=\\'256 bytes -> 3\n"
    )
