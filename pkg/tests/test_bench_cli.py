import json
from fractions import Fraction

import pytest

from srtc.bench import (
    BenchResult,
    bench_bytes,
    bench_csv,
    bench_table,
    compress_corpus,
    decompress_stream,
    format_ratio,
    improvement,
    render_spans,
    throughput_bytes,
)
from srtc.cli import main
from srtc.errors import EmptyCorpus, MalformedJson
from srtc.spans import canonical_json, flatten
from srtc.workload import WorkloadSpec, corpus_bytes

SAMPLE = corpus_bytes(WorkloadSpec(span_count=400, seed=1), False)


# --- ratio arithmetic ---------------------------------------------------------

@pytest.mark.parametrize("value,places,expected", [
    (Fraction(1, 8), 2, "0.12"),  # half-even
    (Fraction(3, 8), 2, "0.38"),
    (Fraction(2), 2, "2.00"),
    (Fraction(-1, 3), 3, "-0.333"),
    (Fraction(1000, 7), 1, "142.9"),
])
def test_format_ratio(value, places, expected):
    assert format_ratio(value, places) == expected


def test_improvement_from_ratios():
    # sizes expressed through the compression ratios 10.90 and 16.26 of one raw size
    raw = Fraction(21)
    alone = raw / Fraction("10.90")
    combined = raw / Fraction("16.26")
    row = BenchResult("srt+gzip", 21, 1, improvement(alone, combined))
    assert format_ratio(row.improvement * 100, 1) == "33.0"
    assert format_ratio(row.speedup) == "1.49"


def test_improvement_from_rounded_sizes_differs():
    assert format_ratio(improvement(Fraction("1.93"), Fraction("1.29")) * 100, 1) == "33.2"


def test_cr_recomputed_from_bytes():
    r = BenchResult("x", 1000, 300)
    assert r.cr == Fraction(10, 3)
    assert format_ratio(r.cr) == "3.33"
    with pytest.raises(ZeroDivisionError):
        BenchResult("x", 1, 0).cr


def test_bench_rows():
    rows = bench_bytes(SAMPLE, ["identity", "deflate"])
    by = {r.label: r for r in rows}
    assert by["raw"].cr == 1
    assert by["identity"].cr == 1
    assert by["srt"].compressed_bytes < len(SAMPLE)
    assert by["srt+deflate"].improvement == improvement(by["deflate"].compressed_bytes, by["srt+deflate"].compressed_bytes)
    assert "srt+deflate" in bench_table(rows)
    lines = bench_csv(rows).splitlines()
    assert lines[0].startswith("label,") and len(lines) == len(rows) + 1


def test_empty_corpus_rejected():
    with pytest.raises(EmptyCorpus):
        compress_corpus(b"\n\n")


def test_malformed_line_reported():
    with pytest.raises(MalformedJson, match="line 2"):
        compress_corpus(b'{"name":"a"}\n{oops\n')


def test_repeated_span_roundtrip():
    line = json.dumps({"name": "s", "attributes": {"a": 1, "b": "x"}, "start_time": 5})
    data = ("\n".join([line] * 1000) + "\n").encode()
    stream, exp = compress_corpus(data)
    assert len(stream) < len(data) / 4
    spans = decompress_stream(stream)
    assert len(spans) == 1000
    assert render_spans(spans) == (canonical_json(json.loads(line)) + "\n").encode() * 1000


def test_corpus_roundtrip_is_lossless():
    stream, _ = compress_corpus(SAMPLE)
    expected = [flatten(json.loads(l)) for l in SAMPLE.splitlines()]
    assert decompress_stream(stream) == expected


def test_throughput_reports_median_of_runs():
    r = throughput_bytes(SAMPLE, runs=1)
    assert r.runs == 3 and r.spans == 400
    assert r.compress_spans_per_s > 0 and r.decompress_bytes_per_s > 0
    assert "spans/s" in r.render()


# --- cli ----------------------------------------------------------------------

@pytest.fixture
def corpus(tmp_path):
    p = tmp_path / "corpus.jsonl"
    p.write_bytes(SAMPLE)
    return p


def canonical_lines(data: bytes):
    return [canonical_json(json.loads(l)) for l in data.splitlines() if l.strip()]


@pytest.mark.parametrize("stage", ["identity", "deflate", "lzma"])
def test_cli_compress_decompress(corpus, tmp_path, capsys, stage):
    packed, back = tmp_path / "c.srtc", tmp_path / "back.jsonl"
    assert main(["compress", str(corpus), str(packed), "--stage", stage, "--batch-spans", "64"]) == 0
    assert "cr=" in capsys.readouterr().out
    assert main(["decompress", str(packed), str(back), "--stage", stage]) == 0
    assert capsys.readouterr().out == "spans=400\n"
    assert canonical_lines(back.read_bytes()) == canonical_lines(SAMPLE)


def test_cli_decompress_empty_stream(tmp_path, capsys):
    empty, out = tmp_path / "e", tmp_path / "o"
    empty.write_bytes(b"")
    assert main(["decompress", str(empty), str(out)]) == 0
    assert out.read_bytes() == b""


def test_cli_bench_csv(corpus, capsys):
    assert main(["bench", str(corpus), "--stage", "deflate", "--stage", "bzip2", "--csv"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [l.split(",")[0] for l in out[1:]] == ["raw", "srt", "deflate", "srt+deflate", "bzip2", "srt+bzip2"]


def test_cli_redundancy(corpus, capsys):
    assert main(["redundancy", str(corpus), "--threshold", "10", "--top", "50"]) == 0
    out = capsys.readouterr().out
    assert "frequent=" in out and "threshold=10" in out
    assert "\\'" not in out  # values are shown as JSON, not as internal tokens


def test_cli_generate(tmp_path, capsys):
    out = tmp_path / "g.jsonl"
    assert main(["generate", str(out), "--spans", "20000", "--threshold", "100", "--seed", "2"]) == 0
    assert capsys.readouterr().out.startswith("spans=20000 bytes=")
    assert len(out.read_bytes().splitlines()) == 20000


def test_cli_generate_infeasible(tmp_path, capsys):
    assert main(["generate", str(tmp_path / "g"), "--spans", "100"]) == 1
    assert capsys.readouterr().err.startswith("error: InfeasibleSpec: ")


def test_cli_throughput(corpus, capsys):
    assert main(["throughput", str(corpus), "--csv"]) == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header.startswith("spans,") and row.startswith("400,")


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad"
    bad.write_bytes(b"XXXXgarbage-stream-bytes")
    assert main(["decompress", str(bad), str(tmp_path / "o")]) == 1
    assert capsys.readouterr().err.startswith("error: BadMagic: ")
    assert main(["compress", str(tmp_path / "missing"), str(tmp_path / "o")]) == 1
    assert capsys.readouterr().err.startswith("error: FileNotFoundError: ")
    assert main(["bench", str(bad), "--stage", "nope"]) == 1
    assert capsys.readouterr().err.startswith("error: StageUnavailable: ")
