"""Deterministic synthetic trace corpora with a controlled redundancy profile.

Each span name owns a fixed set of attribute templates; spans cycle through
all templates in a freshly shuffled order per cycle, so every template (and
thus every attribute value) occurs an exactly predictable number of times.
Trace and span ids, timestamps and "cold" attribute values are random and
unique. The share of key-value instances that repeat at least ``threshold``
times is tuned by turning trailing attribute keys cold.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import IO, Iterator

from .errors import InfeasibleSpec

DEFAULT_CARDINALITIES = (2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 8, 4)

# (attribute key, base vocabulary); vocabularies are extended by suffixing
_ATTRIBUTES: list[tuple[str, list]] = [
    ("http.method", ["GET", "POST", "PUT", "DELETE", "PATCH", "HEAD", "OPTIONS"]),
    ("http.flavor", ["1.1", "2", "3", "1.0"]),
    ("span.kind", ["SERVER", "CLIENT", "INTERNAL", "PRODUCER", "CONSUMER"]),
    ("db.system", ["mysql", "postgresql", "redis", "mongodb", "cassandra", "elasticsearch"]),
    ("rpc.system", ["grpc", "http", "thrift", "dubbo"]),
    ("http.status_code", [200, 201, 204, 301, 302, 400, 401, 403, 404, 409, 429, 500, 502, 503, 504]),
    ("db.operation", ["SELECT", "INSERT", "UPDATE", "DELETE", "GET", "SET", "HGETALL", "find", "aggregate"]),
    ("net.peer.name", ["ts-order-service", "ts-user-service", "ts-route-service", "ts-price-service"]),
    ("net.peer.port", [8080, 8081, 8443, 9090, 3306, 6379, 27017, 5432]),
    ("http.route", ["/api/v1/orders", "/api/v1/users", "/api/v1/routes", "/api/v1/prices", "/api/v1/travel"]),
    ("thread.name", ["http-nio-exec", "grpc-default-executor", "pool-worker", "scheduler"]),
    ("http.target", ["/api/v1/orders/query", "/api/v1/users/login", "/api/v1/travel/trips", "/api/v1/prices/all"]),
    ("user_agent.original", ["Mozilla/5.0 (X11; Linux x86_64)", "python-requests/2.31", "okhttp/4.9.3", "Go-http-client/1.1"]),
    ("messaging.system", ["kafka", "rabbitmq", "pulsar"]),
    ("db.name", ["orders", "users", "routes", "prices"]),
    ("exception.type", ["java.lang.NullPointerException", "java.net.SocketTimeoutException", "none"]),
]

_LOCAL_EXTRA = ["request.id", "session.id", "request.seq", "client.ip", "message.id"]

_VERBS = ["GET", "POST", "PUT", "DELETE"]
_RESOURCES = [
    "orders", "users", "routes", "prices", "travel", "stations", "trains", "tickets",
    "payments", "seats", "food", "contacts", "assurance", "config", "security", "notify",
]


def attribute_value(key_index: int, i: int):
    """The ``i``-th value of an attribute's vocabulary."""
    base = _ATTRIBUTES[key_index][1]
    v = base[i % len(base)]
    lap = i // len(base)
    if lap == 0:
        return v
    if type(v) is int:
        return v + 1000 * lap
    return f"{v}-{lap}"


def span_names(n: int) -> list[str]:
    names = []
    for i in range(n):
        verb = _VERBS[i % len(_VERBS)]
        res = _RESOURCES[(i // len(_VERBS) + i) % len(_RESOURCES)]
        lap = i // (len(_VERBS) * len(_RESOURCES))
        names.append(f"{verb} /api/v1/{res}" + (f"/{lap}" if lap else ""))
    return names


@dataclass(frozen=True)
class WorkloadSpec:
    span_name_count: int = 8
    cardinalities: tuple[int, ...] = DEFAULT_CARDINALITIES
    local_key_count: int = 3
    redundancy_target: float = 0.7
    span_count: int = 10_000
    seed: int = 0
    templates_per_name: int = 40
    threshold: int = 1000
    max_trace_size: int = 8
    start_ns: int = 1_700_000_000_000_000_000

    @property
    def universal_key_count(self) -> int:
        return len(self.cardinalities)

    @property
    def pairs_per_span(self) -> int:
        # name, service, attributes, locals, start/end time
        return 2 + self.universal_key_count + self.local_key_count + 2

    @property
    def cold_slots(self) -> float:
        """Attribute slots per span that must carry a unique value."""
        hot_max = 2 + self.universal_key_count
        return hot_max - self.redundancy_target * self.pairs_per_span

    def validate(self, check_counts: bool = True) -> None:
        if self.span_name_count < 1:
            raise InfeasibleSpec("span_name_count must be >= 1")
        if self.span_count < 0:
            raise InfeasibleSpec("span_count must be >= 0")
        if self.local_key_count < 0 or self.local_key_count > 3 + len(_LOCAL_EXTRA):
            raise InfeasibleSpec(f"local_key_count must be in [0, {3 + len(_LOCAL_EXTRA)}]")
        if self.universal_key_count > len(_ATTRIBUTES):
            raise InfeasibleSpec(f"at most {len(_ATTRIBUTES)} attribute keys are supported")
        if any(c < 1 for c in self.cardinalities):
            raise InfeasibleSpec("cardinalities must be >= 1")
        if self.templates_per_name < 1 or self.threshold < 1 or self.max_trace_size < 1:
            raise InfeasibleSpec("templates_per_name, threshold and max_trace_size must be >= 1")
        if not 0.0 <= self.redundancy_target <= 1.0:
            raise InfeasibleSpec("redundancy_target must be in [0, 1]")
        x = self.cold_slots
        if x < -1e-9:
            best = (2 + self.universal_key_count) / self.pairs_per_span
            raise InfeasibleSpec(f"redundancy_target {self.redundancy_target} exceeds the attainable {best:.3f}")
        if x > self.universal_key_count + 1e-9:
            worst = 2 / self.pairs_per_span
            raise InfeasibleSpec(f"redundancy_target {self.redundancy_target} is below the attainable {worst:.3f}")
        if self.span_count == 0 or not check_counts:
            return
        if self.max_trace_size >= self.threshold:
            raise InfeasibleSpec("trace ids would repeat threshold times; lower max_trace_size")
        lo = self.min_hot_count()
        if lo < self.threshold:
            raise InfeasibleSpec(
                f"a frequent pair may occur only {lo} times (< threshold {self.threshold}); "
                "raise span_count or lower the cardinalities"
            )

    def _cold_layout(self) -> tuple[int, float]:
        """(number of fully cold trailing keys, cold share of the next key)."""
        x = max(0.0, self.cold_slots)
        full = int(math.floor(x + 1e-9))
        frac = x - full
        if frac < 1e-9:
            frac = 0.0
        return full, frac

    def min_hot_count(self) -> int:
        """Lower bound on the occurrence count of every frequent pair."""
        g = self.span_name_count * self.templates_per_name
        per_template = self.span_count // g
        names = self.span_count // self.span_name_count
        lo = names
        full, frac = self._cold_layout()
        u = self.universal_key_count
        for k in range(u - full):
            card = self.cardinalities[k]
            templates = max(1, g // card)
            hits = per_template
            if k == u - full - 1 and frac:
                hits = per_template - math.ceil((per_template + 1) * frac)
            lo = min(lo, templates * max(0, hits))
        return lo


class _Plan:
    def __init__(self, spec: WorkloadSpec, rng: random.Random):
        self.names = span_names(spec.span_name_count)
        n_services = max(1, spec.span_name_count // 2)
        self.services = [f"ts-{_RESOURCES[s % len(_RESOURCES)]}-service" + (f"-{s // len(_RESOURCES)}" if s >= len(_RESOURCES) else "") for s in range(n_services)]
        self.keys = [_ATTRIBUTES[k][0] for k in range(spec.universal_key_count)]
        locals_ = ["trace_id", "span_id", "parent_span_id"] + [f"attributes-{k}" for k in _LOCAL_EXTRA]
        self.local_keys = locals_[: spec.local_key_count]
        g = spec.span_name_count * spec.templates_per_name
        self.g = g
        mults = []
        for card in spec.cardinalities:
            choices = [m for m in range(1, max(2, card)) if math.gcd(m, card) == 1] or [1]
            mults.append((rng.choice(choices), rng.randrange(card)))
        self.templates = [
            tuple(attribute_value(k, (t * m + o) % card) for k, (card, (m, o)) in enumerate(zip(spec.cardinalities, mults)))
            for t in range(g)
        ]
        self.full_cold, self.frac = spec._cold_layout()


def generate_spans(spec: WorkloadSpec, check_counts: bool = True) -> Iterator[dict]:
    """Yield the corpus spans in order; deterministic given ``spec``."""
    spec.validate(check_counts)
    if spec.span_count == 0:
        return
    rng = random.Random(spec.seed)
    plan = _Plan(spec, rng)
    g = plan.g
    tpn = spec.templates_per_name
    u = spec.universal_key_count
    cold_from = u - plan.full_cold
    partial = cold_from - 1 if plan.frac else None
    frac = plan.frac
    uses = [0] * g
    order: list[int] = []
    trace_id = ""
    trace_left = 0
    last_span_id = ""
    t = spec.start_ns
    for i in range(spec.span_count):
        pos = i % g
        if pos == 0:
            order = list(range(g))
            rng.shuffle(order)
        tpl = order[pos]
        name_idx = tpl // tpn
        r = uses[tpl]
        uses[tpl] = r + 1

        if trace_left == 0:
            trace_id = f"{rng.getrandbits(128):032x}"
            trace_left = rng.randint(1, spec.max_trace_size)
            last_span_id = f"{rng.getrandbits(64):016x}"
        trace_left -= 1
        span_id = f"{rng.getrandbits(64):016x}"

        attrs = {}
        values = plan.templates[tpl]
        for k in range(u):
            v = values[k]
            if k >= cold_from or (k == partial and math.floor((r + 1) * frac) > math.floor(r * frac)):
                v = f"{v}/{i:x}{rng.getrandbits(24):06x}"
            attrs[plan.keys[k]] = v
        local_vals = [trace_id, span_id, last_span_id]
        for key in plan.local_keys[3:]:
            attrs[key.split("-", 1)[1]] = f"{rng.getrandbits(48):012x}-{i:x}"
        span = {"name": plan.names[name_idx]}
        for key, val in zip(plan.local_keys[:3], local_vals):
            span[key] = val
        span["resource"] = {"service.name": plan.services[name_idx % len(plan.services)]}
        if attrs:
            span["attributes"] = attrs
        t += 100_000 + rng.randrange(400_000)
        span["start_time"] = t
        span["end_time"] = t + 20_000 + rng.randrange(50_000_000)
        last_span_id = span_id
        yield span


def span_line(span: dict) -> str:
    return json.dumps(span, separators=(",", ":"), ensure_ascii=False)


def write_corpus(spec: WorkloadSpec, out: IO[str], check_counts: bool = True) -> int:
    """Write newline-delimited JSON; returns the number of bytes written."""
    total = 0
    for span in generate_spans(spec, check_counts):
        line = span_line(span) + "\n"
        out.write(line)
        total += len(line.encode("utf-8"))
    return total


def corpus_bytes(spec: WorkloadSpec, check_counts: bool = True) -> bytes:
    return "".join(span_line(s) + "\n" for s in generate_spans(spec, check_counts)).encode("utf-8")


def span_count_for_size(target_bytes: int, sample: WorkloadSpec | None = None, margin: float = 1.02) -> int:
    """Span count whose corpus is expected to reach ``target_bytes``."""
    sample = sample or WorkloadSpec()
    probe = WorkloadSpec(**{**sample.__dict__, "span_count": 2000})
    size = sum(len(span_line(s).encode("utf-8")) + 1 for s in generate_spans(probe, check_counts=False))
    avg = size / probe.span_count
    return int(math.ceil(target_bytes / avg * margin))
