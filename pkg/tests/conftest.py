import time

import pytest

from srtc.bench import compress_corpus
from srtc.workload import WorkloadSpec, corpus_bytes, span_count_for_size

CALIBRATED_MIN_BYTES = 50_000_000

_results: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    _results[criterion] = (passed, detail)


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        passed, detail = _results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def calibrated_corpus() -> bytes:
    spec = WorkloadSpec(span_count=span_count_for_size(CALIBRATED_MIN_BYTES), seed=7)
    data = corpus_bytes(spec)
    assert len(data) >= CALIBRATED_MIN_BYTES
    return data


@pytest.fixture(scope="session")
def calibrated_stream(calibrated_corpus):
    """(session bytes, exporter, seconds) for the calibrated corpus at default settings."""
    t0 = time.perf_counter()
    stream, exporter = compress_corpus(calibrated_corpus)
    return stream, exporter, time.perf_counter() - t0
