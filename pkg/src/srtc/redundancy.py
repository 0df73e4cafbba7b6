"""Key-value redundancy analysis over flattened spans."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .spans import FlatSpan, value_token

SERVICE_KEY = "resource-service.name"
DEFAULT_THRESHOLD = 1000


def span_pairs(span: FlatSpan) -> list[tuple[str, str]]:
    """Every key-value instance of a span, the name and time fields included."""
    out = [("name", value_token(span.name))]
    out.extend((k, value_token(v)) for k, v in span.pairs.items())
    out.extend((k, str(t)) for k, t in span.time_fields.items())
    return out


@dataclass
class ServiceShare:
    total: int
    frequent: int

    @property
    def frequent_fraction(self) -> float:
        return self.frequent / self.total if self.total else 0.0

    @property
    def rare_fraction(self) -> float:
        return 1.0 - self.frequent_fraction if self.total else 0.0


@dataclass
class RedundancyReport:
    threshold: int
    counts: Counter
    total: int
    frequent: int
    per_service: dict[str, ServiceShare] = field(default_factory=dict)

    @property
    def frequent_fraction(self) -> float:
        """Share of pair instances whose pair occurs at least ``threshold`` times."""
        return self.frequent / self.total if self.total else 0.0

    @property
    def rare_fraction(self) -> float:
        return 1.0 - self.frequent_fraction if self.total else 0.0

    def ratio(self, key: str, value) -> float:
        """Occurrences of one pair over all pair instances."""
        if not self.total:
            return 0.0
        return self.counts[(key, value_token(value))] / self.total

    def top(self, n: int = 10) -> list[tuple[tuple[str, str], int]]:
        return self.counts.most_common(n)


def redundancy_report(spans: Iterable[FlatSpan], threshold: int = DEFAULT_THRESHOLD) -> RedundancyReport:
    """Exact hash-map count of every flattened pair.

    Per-service shares count occurrences within each service, keyed on the
    flattened ``resource.service.name`` attribute.
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    counts: Counter = Counter()
    by_service: dict[str, Counter] = {}
    for span in spans:
        pairs = span_pairs(span)
        counts.update(pairs)
        svc = span.pairs.get(SERVICE_KEY)
        if svc is not None:
            by_service.setdefault(str(svc), Counter()).update(pairs)
    total = sum(counts.values())
    frequent = sum(c for c in counts.values() if c >= threshold)
    per_service = {
        svc: ServiceShare(sum(c.values()), sum(n for n in c.values() if n >= threshold))
        for svc, c in sorted(by_service.items())
    }
    return RedundancyReport(threshold, counts, total, frequent, per_service)
