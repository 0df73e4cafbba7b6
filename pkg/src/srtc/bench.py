"""Corpus-level commands: compress, decompress, redundancy, bench, generate, throughput."""

from __future__ import annotations

import io
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import EmptyCorpus
from .pipeline import BatchConfig, Exporter, LoopbackTransport, Receiver
from .redundancy import DEFAULT_THRESHOLD, RedundancyReport, redundancy_report
from .spans import FlatSpan, canonical_json, flatten, parse_span, unflatten
from .srt import SrtConfig
from .stages import get_stage
from .workload import WorkloadSpec, write_corpus


# --- corpus io ----------------------------------------------------------------

def iter_corpus_lines(data: bytes) -> Iterator[tuple[int, bytes]]:
    """(1-based line number, line) for each non-blank line."""
    for n, line in enumerate(data.splitlines(), 1):
        if line.strip():
            yield n, line


def parse_corpus(data: bytes) -> list[dict]:
    return [parse_span(line, n) for n, line in iter_corpus_lines(data)]


def flatten_corpus(data: bytes, config: SrtConfig | None = None) -> list[FlatSpan]:
    config = config or SrtConfig()
    return [
        flatten(parse_span(line, n), config.depth_limit, config.time_keys)
        for n, line in iter_corpus_lines(data)
    ]


def render_spans(spans: Iterable[FlatSpan]) -> bytes:
    """Newline-delimited canonical JSON of the rebuilt spans."""
    return "".join(canonical_json(unflatten(s)) + "\n" for s in spans).encode("utf-8")


# --- ratios -------------------------------------------------------------------

def format_ratio(value: Fraction, places: int = 2) -> str:
    """Exact decimal rendering, round-half-even."""
    scale = 10**places
    q = round(value * scale)
    sign = "-" if q < 0 else ""
    q = abs(q)
    return f"{sign}{q // scale}.{q % scale:0{places}d}"


def improvement(stage_bytes: int | Fraction, combined_bytes: int | Fraction) -> Fraction:
    """Share of the stage-alone output removed by compressing with the tree first."""
    return (Fraction(stage_bytes) - Fraction(combined_bytes)) / Fraction(stage_bytes)


@dataclass(frozen=True)
class BenchResult:
    label: str
    original_bytes: int
    compressed_bytes: int
    improvement: Fraction | None = None

    @property
    def cr(self) -> Fraction:
        if self.compressed_bytes == 0:
            raise ZeroDivisionError("compressed size is zero")
        return Fraction(self.original_bytes, self.compressed_bytes)

    @property
    def speedup(self) -> Fraction | None:
        """Combined CR over stage-alone CR, when this row has a baseline."""
        if self.improvement is None:
            return None
        return 1 / (1 - self.improvement)


def bench_csv(rows: Sequence[BenchResult]) -> str:
    buf = io.StringIO()
    buf.write("label,original_bytes,compressed_bytes,cr,improvement_pct,x_factor\n")
    for r in rows:
        imp = format_ratio(r.improvement * 100, 1) if r.improvement is not None else ""
        xf = format_ratio(r.speedup) if r.speedup is not None else ""
        buf.write(f"{r.label},{r.original_bytes},{r.compressed_bytes},{format_ratio(r.cr)},{imp},{xf}\n")
    return buf.getvalue()


def bench_table(rows: Sequence[BenchResult]) -> str:
    head = f"{'method':<22}{'bytes':>14}{'CR':>9}{'improvement':>14}"
    lines = [head, "-" * len(head)]
    for r in rows:
        imp = ""
        if r.improvement is not None:
            imp = f"{format_ratio(r.improvement * 100, 1)}% ({format_ratio(r.speedup)}x)"
        lines.append(f"{r.label:<22}{r.compressed_bytes:>14}{format_ratio(r.cr):>9}{imp:>14}")
    return "\n".join(lines) + "\n"


# --- session helpers ----------------------------------------------------------

def compress_corpus(
    data: bytes,
    config: SrtConfig | None = None,
    batch: BatchConfig | None = None,
) -> tuple[bytes, Exporter]:
    """Run the corpus through one exporter session; returns the session bytes."""
    config = config or SrtConfig()
    transport = LoopbackTransport()
    exp = Exporter(config, batch, transport)
    exp.open()
    n_spans = 0
    for n, line in iter_corpus_lines(data):
        exp.push(flatten(parse_span(line, n), config.depth_limit, config.time_keys))
        n_spans += 1
    if n_spans == 0:
        raise EmptyCorpus("corpus holds no spans")
    exp.close()
    return transport.recv(), exp


def decompress_stream(stream: bytes) -> list[FlatSpan]:
    r = Receiver()
    spans = r.feed(stream)
    r.finish()
    return spans


# --- commands -----------------------------------------------------------------

def cmd_compress(
    input_path: str | Path,
    output_path: str | Path,
    config: SrtConfig | None = None,
    batch: BatchConfig | None = None,
    stage: str = "identity",
) -> BenchResult:
    st = get_stage(stage)
    data = Path(input_path).read_bytes()
    stream, _ = compress_corpus(data, config, batch)
    out = st.compress(stream)
    Path(output_path).write_bytes(out)
    label = "srt" if st.name == "identity" else f"srt+{st.name}"
    return BenchResult(label, len(data), len(out))


def cmd_decompress(stream_path: str | Path, output_path: str | Path, stage: str = "identity") -> int:
    raw = Path(stream_path).read_bytes()
    stream = get_stage(stage).decompress(raw) if raw else b""
    spans = decompress_stream(stream)
    Path(output_path).write_bytes(render_spans(spans))
    return len(spans)


def cmd_redundancy(
    input_path: str | Path,
    threshold: int = DEFAULT_THRESHOLD,
    config: SrtConfig | None = None,
) -> RedundancyReport:
    spans = flatten_corpus(Path(input_path).read_bytes(), config)
    return redundancy_report(spans, threshold)


def bench_bytes(
    data: bytes,
    stages: Sequence[str] = ("deflate",),
    config: SrtConfig | None = None,
    batch: BatchConfig | None = None,
) -> list[BenchResult]:
    """Raw, tree-only, and per stage: stage-alone and tree-then-stage rows."""
    resolved = [get_stage(s) for s in stages]
    stream, _ = compress_corpus(data, config, batch)
    n = len(data)
    rows = [BenchResult("raw", n, n), BenchResult("srt", n, len(stream))]
    for st in resolved:
        alone = len(st.compress(data))
        combined = len(st.compress(stream))
        rows.append(BenchResult(st.name, n, alone))
        rows.append(BenchResult(f"srt+{st.name}", n, combined, improvement(alone, combined)))
    return rows


def cmd_bench(
    input_path: str | Path,
    stages: Sequence[str] = ("deflate",),
    config: SrtConfig | None = None,
    batch: BatchConfig | None = None,
) -> list[BenchResult]:
    return bench_bytes(Path(input_path).read_bytes(), stages, config, batch)


def cmd_generate(spec: WorkloadSpec, output_path: str | Path) -> int:
    """Write the corpus; returns its size in bytes."""
    spec.validate()
    with open(output_path, "w", encoding="utf-8", newline="\n") as fh:
        return write_corpus(spec, fh)


@dataclass
class ThroughputResult:
    spans: int
    raw_bytes: int
    wire_bytes: int
    compress_seconds: float
    decompress_seconds: float
    runs: int
    config: dict = field(default_factory=dict)

    @property
    def compress_spans_per_s(self) -> float:
        return self.spans / self.compress_seconds

    @property
    def compress_bytes_per_s(self) -> float:
        return self.raw_bytes / self.compress_seconds

    @property
    def decompress_spans_per_s(self) -> float:
        return self.spans / self.decompress_seconds

    @property
    def decompress_bytes_per_s(self) -> float:
        return self.raw_bytes / self.decompress_seconds

    def render(self) -> str:
        cfg = " ".join(f"{k}={v}" for k, v in self.config.items())
        return (
            f"config: {cfg}\n"
            f"spans={self.spans} raw_bytes={self.raw_bytes} wire_bytes={self.wire_bytes} runs={self.runs}\n"
            f"compress:   {self.compress_spans_per_s:,.0f} spans/s  {self.compress_bytes_per_s / 1e6:,.2f} MB/s\n"
            f"decompress: {self.decompress_spans_per_s:,.0f} spans/s  {self.decompress_bytes_per_s / 1e6:,.2f} MB/s\n"
        )


def _clock_floor(seconds: float) -> float:
    return max(seconds, 1e-9)


def throughput_bytes(
    data: bytes,
    config: SrtConfig | None = None,
    batch: BatchConfig | None = None,
    runs: int = 3,
    warmup: int = 1,
) -> ThroughputResult:
    """Median wall-clock time of whole-corpus compress and decompress.

    Throughput is the uncompressed corpus size over the elapsed time.
    """
    config = config or SrtConfig()
    batch = batch or BatchConfig()
    runs = max(3, runs)
    lines = [line for _, line in iter_corpus_lines(data)]
    raw = len(data)
    comp_t, decomp_t = [], []
    stream = b""
    for i in range(warmup + runs):
        transport = LoopbackTransport()
        exp = Exporter(config, batch, transport)
        t0 = time.perf_counter()
        exp.open()
        for line in lines:
            exp.push(line)
        exp.close()
        stream = transport.recv()
        t1 = time.perf_counter()
        r = Receiver()
        r.feed(stream)
        t2 = time.perf_counter()
        if i >= warmup:
            comp_t.append(t1 - t0)
            decomp_t.append(t2 - t1)
    cfg = {
        "psi": config.psi,
        "depth_limit": config.depth_limit,
        "budget_bytes": config.budget_bytes,
        "batch_spans": batch.max_spans,
        "batch_bytes": batch.max_bytes,
    }
    return ThroughputResult(
        len(lines), raw, len(stream),
        _clock_floor(statistics.median(comp_t)), _clock_floor(statistics.median(decomp_t)),
        runs, cfg,
    )


def cmd_throughput(
    input_path: str | Path,
    config: SrtConfig | None = None,
    batch: BatchConfig | None = None,
    runs: int = 3,
) -> ThroughputResult:
    return throughput_bytes(Path(input_path).read_bytes(), config, batch, runs)


def timed_roundtrip(
    chunks: Iterable[Sequence[str | bytes]],
    config: SrtConfig | None = None,
    batch: BatchConfig | None = None,
) -> tuple[float, int, int]:
    """Corpus lines in, rebuilt corpus lines out, over exporter and receiver.

    The timed work is parsing and compressing each line, then decompressing
    and rendering the spans back to JSON. Producing the chunks is not timed.
    Returns (seconds, spans, wire bytes).
    """
    transport = LoopbackTransport()
    exp = Exporter(config, batch, transport)
    rec = Receiver()
    elapsed = 0.0
    spans = 0
    t0 = time.perf_counter()
    exp.open()
    rec.feed(transport.recv())
    elapsed += time.perf_counter() - t0
    for chunk in chunks:
        t0 = time.perf_counter()
        for line in chunk:
            exp.push(line)
        out = rec.feed(transport.recv())
        render_spans(out)
        spans += len(out)
        elapsed += time.perf_counter() - t0
    t0 = time.perf_counter()
    exp.close()
    out = rec.feed(transport.recv())
    render_spans(out)
    spans += len(out)
    rec.finish()
    elapsed += time.perf_counter() - t0
    return elapsed, spans, exp.bytes_out
