"""``srtc`` command line."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import bench
from .errors import SrtcError
from .pipeline import BatchConfig
from .spans import token_value
from .srt import DEFAULT_BUDGET, SrtConfig
from .workload import DEFAULT_CARDINALITIES, WorkloadSpec


def _srt_config(args) -> SrtConfig:
    return SrtConfig(psi=args.psi, depth_limit=args.depth_limit, budget_bytes=args.budget_bytes)


def _batch_config(args) -> BatchConfig:
    age = args.batch_age_ms / 1000.0 if args.batch_age_ms is not None else None
    return BatchConfig(max_spans=args.batch_spans, max_bytes=args.batch_bytes, max_age=age)


def _tree_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--psi", type=int, default=1000, help="distinct values a key may take before it turns local")
    p.add_argument("--depth-limit", type=int, default=2, help="nesting depth flattened into keys")
    p.add_argument("--budget-bytes", type=int, default=DEFAULT_BUDGET, help="structure size limit")


def _batch_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--batch-spans", type=int, default=512)
    p.add_argument("--batch-bytes", type=int, default=1 << 20)
    p.add_argument("--batch-age-ms", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srtc", description="Span compression with a shared retrieval tree.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a newline-delimited JSON corpus into a session stream")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--stage", default="identity", help="post-compressor applied to the whole stream")
    _tree_flags(p)
    _batch_flags(p)

    p = sub.add_parser("decompress", help="rebuild the corpus from a session stream")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--stage", default="identity")

    p = sub.add_parser("redundancy", help="report how often key-value pairs repeat")
    p.add_argument("input")
    p.add_argument("--threshold", type=int, default=1000)
    p.add_argument("--depth-limit", type=int, default=2)
    p.add_argument("--top", type=int, default=0, help="also list the N most frequent pairs")
    p.add_argument("--csv", action="store_true")

    p = sub.add_parser("bench", help="compression ratios with and without post-compressors")
    p.add_argument("input")
    p.add_argument("--stage", action="append", dest="stages", help="repeatable; default deflate")
    p.add_argument("--csv", action="store_true")
    _tree_flags(p)
    _batch_flags(p)

    p = sub.add_parser("generate", help="write a synthetic corpus")
    p.add_argument("output")
    p.add_argument("--spans", type=int, default=10_000)
    p.add_argument("--names", type=int, default=8)
    p.add_argument("--cardinalities", default=",".join(map(str, DEFAULT_CARDINALITIES)))
    p.add_argument("--local-keys", type=int, default=3)
    p.add_argument("--redundancy", type=float, default=0.7)
    p.add_argument("--templates", type=int, default=40)
    p.add_argument("--threshold", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("throughput", help="compress and decompress speed over loopback")
    p.add_argument("input")
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--csv", action="store_true")
    _tree_flags(p)
    _batch_flags(p)
    return parser


def _run(args, out) -> None:
    cmd = args.command
    if cmd == "compress":
        r = bench.cmd_compress(args.input, args.output, _srt_config(args), _batch_config(args), args.stage)
        out.write(f"original_bytes={r.original_bytes} compressed_bytes={r.compressed_bytes} cr={bench.format_ratio(r.cr)}\n")
    elif cmd == "decompress":
        n = bench.cmd_decompress(args.input, args.output, args.stage)
        out.write(f"spans={n}\n")
    elif cmd == "redundancy":
        rep = bench.cmd_redundancy(args.input, args.threshold, SrtConfig(depth_limit=args.depth_limit))
        if args.csv:
            out.write("service,pairs,frequent_fraction,rare_fraction\n")
            out.write(f"*,{rep.total},{rep.frequent_fraction:.4f},{rep.rare_fraction:.4f}\n")
            for svc, s in rep.per_service.items():
                out.write(f"{svc},{s.total},{s.frequent_fraction:.4f},{s.rare_fraction:.4f}\n")
        else:
            out.write(f"pairs={rep.total} distinct={len(rep.counts)} threshold={rep.threshold}\n")
            out.write(f"frequent={rep.frequent_fraction:.2%} rare={rep.rare_fraction:.2%}\n")
            for svc, s in rep.per_service.items():
                out.write(f"  {svc}: frequent={s.frequent_fraction:.2%} rare={s.rare_fraction:.2%} ({s.total} pairs)\n")
            for (k, v), c in rep.top(args.top):
                text = json.dumps(token_value(v), ensure_ascii=False)
                out.write(f"  {c:>9} {k}={text}\n")
    elif cmd == "bench":
        rows = bench.cmd_bench(args.input, args.stages or ["deflate"], _srt_config(args), _batch_config(args))
        out.write(bench.bench_csv(rows) if args.csv else bench.bench_table(rows))
    elif cmd == "generate":
        cards = tuple(int(c) for c in args.cardinalities.split(",") if c.strip())
        spec = WorkloadSpec(
            span_name_count=args.names,
            cardinalities=cards,
            local_key_count=args.local_keys,
            redundancy_target=args.redundancy,
            span_count=args.spans,
            seed=args.seed,
            templates_per_name=args.templates,
            threshold=args.threshold,
        )
        size = bench.cmd_generate(spec, args.output)
        out.write(f"spans={args.spans} bytes={size}\n")
    elif cmd == "throughput":
        r = bench.cmd_throughput(args.input, _srt_config(args), _batch_config(args), args.runs)
        if args.csv:
            out.write("spans,raw_bytes,wire_bytes,compress_spans_per_s,compress_bytes_per_s,"
                      "decompress_spans_per_s,decompress_bytes_per_s," + ",".join(r.config) + "\n")
            out.write(
                f"{r.spans},{r.raw_bytes},{r.wire_bytes},{r.compress_spans_per_s:.1f},{r.compress_bytes_per_s:.1f},"
                f"{r.decompress_spans_per_s:.1f},{r.decompress_bytes_per_s:.1f},"
                + ",".join(str(v) for v in r.config.values()) + "\n"
            )
        else:
            out.write(r.render())


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _run(args, sys.stdout)
    except SrtcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
