"""Exporter and receiver endpoints over a framed, ordered byte stream.

Frame layout (all integers little-endian)::

    magic "SRTC" | version u8 | kind u8 | seq u64 | payload_len u32 | payload

Kinds: 0 DeltaSet, 1 SpanBatch, 2 Hello, 3 Bye. Frame sequence numbers are
contiguous per session starting at 0. On each flush the exporter writes one
DeltaSet (omitted when empty) and then the SpanBatch that depends on it.
"""

from __future__ import annotations

import json
import select
import socket
import struct
import time
from collections import deque
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Iterable, Mapping, Protocol

from .codec import FallbackSpan, compress_batch, decode_span_batch, decompress, encode_span_batch
from .errors import (
    BadMagic,
    BadVersion,
    ProtocolError,
    ProtocolViolation,
    SequenceGap,
    SessionClosed,
    TruncatedData,
)
from .spans import FlatSpan, flatten, parse_span
from .srt import SpanRetrievalTree, SrtConfig
from .sync import DeltaSequencer, ReceiverState, apply_delta, decode_deltas, encode_deltas
from .wire import INT64_MAX

MAGIC = b"SRTC"
VERSION = 1
HEADER = struct.Struct("<4sBBQI")
MAX_PAYLOAD = 1 << 30


class FrameKind(IntEnum):
    DELTA_SET = 0
    SPAN_BATCH = 1
    HELLO = 2
    BYE = 3


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    seq: int
    payload: bytes = b""
    version: int = VERSION

    def encode(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, int(self.kind), self.seq, len(self.payload)) + self.payload

    def __bytes__(self) -> bytes:
        return self.encode()


class FrameDecoder:
    """Incremental frame parser; never consumes past a frame's payload."""

    def __init__(self) -> None:
        self._buf = bytearray()

    @property
    def pending(self) -> int:
        return len(self._buf)

    def feed(self, data: bytes) -> list[Frame]:
        self._buf += data
        frames = []
        buf = self._buf
        pos = 0
        while len(buf) - pos >= HEADER.size:
            magic, version, kind, seq, n = HEADER.unpack_from(buf, pos)
            if magic != MAGIC:
                raise BadMagic(f"bad frame magic {bytes(magic)!r}")
            if version != VERSION:
                raise BadVersion(f"unsupported protocol version {version} (expected {VERSION})")
            if kind > FrameKind.BYE:
                raise ProtocolViolation(f"unknown frame kind {kind}")
            if n > MAX_PAYLOAD:
                raise ProtocolViolation(f"frame payload of {n} bytes exceeds limit")
            end = pos + HEADER.size + n
            if end > len(buf):
                break
            frames.append(Frame(FrameKind(kind), seq, bytes(buf[pos + HEADER.size:end]), version))
            pos = end
        del buf[:pos]
        return frames

    def finish(self) -> None:
        if self._buf:
            raise TruncatedData(f"{len(self._buf)} bytes of an incomplete frame at end of stream")


def decode_frames(data: bytes) -> list[Frame]:
    dec = FrameDecoder()
    frames = dec.feed(data)
    dec.finish()
    return frames


# --- transports ---------------------------------------------------------------

class Transport(Protocol):
    def send(self, data: bytes) -> None: ...

    def recv(self) -> bytes: ...


class LoopbackTransport:
    """In-memory ordered byte pipe."""

    def __init__(self) -> None:
        self._chunks: deque[bytes] = deque()
        self.bytes_sent = 0

    def send(self, data: bytes) -> None:
        self._chunks.append(bytes(data))
        self.bytes_sent += len(data)

    def recv(self) -> bytes:
        out = b"".join(self._chunks)
        self._chunks.clear()
        return out


class TcpTransport:
    """A connected TCP socket used as an ordered byte stream."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.bytes_sent = 0
        self.eof = False

    @classmethod
    def connect(cls, host: str, port: int, timeout: float | None = 10.0) -> "TcpTransport":
        sock = socket.create_connection((host, port), timeout=timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return cls(sock)

    @classmethod
    def accept(cls, server: socket.socket) -> "TcpTransport":
        conn, _ = server.accept()
        return cls(conn)

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)
        self.bytes_sent += len(data)

    def recv(self, timeout: float = 0.0) -> bytes:
        """Whatever bytes are available within ``timeout`` seconds."""
        chunks = []
        wait = timeout
        while not self.eof:
            ready, _, _ = select.select([self.sock], [], [], wait)
            if not ready:
                break
            chunk = self.sock.recv(1 << 16)
            if not chunk:
                self.eof = True
                break
            chunks.append(chunk)
            wait = 0.0
        return b"".join(chunks)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        self.sock.close()


# --- exporter -----------------------------------------------------------------

@dataclass(frozen=True)
class BatchConfig:
    """Flush limits; a batch flushes as soon as any one is reached.

    ``max_bytes`` counts the estimated in-memory size of buffered spans and
    ``max_age`` is in seconds (``None`` disables the timer).
    """

    max_spans: int = 512
    max_bytes: int = 1 << 20
    max_age: float | None = None

    def __post_init__(self):
        if self.max_spans < 1 or self.max_bytes < 1:
            raise ValueError("batch limits must be positive")
        if self.max_age is not None and self.max_age < 0:
            raise ValueError("max_age must be >= 0")


def hello_payload(config: SrtConfig) -> bytes:
    return json.dumps(
        {
            "version": VERSION,
            "psi": config.psi,
            "depth_limit": config.depth_limit,
            "budget_bytes": config.budget_bytes,
            "time_base_period_ns": config.time_base_period_ns,
            "time_keys": sorted(config.time_keys),
            "delimiters": sorted(config.delimiters),
        },
        sort_keys=True,
    ).encode()


class Exporter:
    """One exporter session: a private tree, a delta sequencer and a span buffer.

    Frames are returned from each call and, when a transport is attached,
    also written to it.
    """

    def __init__(
        self,
        config: SrtConfig | None = None,
        batch: BatchConfig | None = None,
        transport: Transport | None = None,
        clock: Callable[[], float] = time.monotonic,
        time_clock: Callable[[], int] | None = None,
    ):
        self.config = config or SrtConfig()
        self.batch = batch or BatchConfig()
        self.transport = transport
        self.srt = SpanRetrievalTree(self.config)
        self._clock = clock
        self._time_clock = time_clock
        self._deltas = DeltaSequencer()
        self._frame_seq = 0
        self._buf: list[FlatSpan] = []
        self._buf_bytes = 0
        self._buf_started = 0.0
        self._time_base_set = False
        self._pending_ops: list = []
        self.state = "new"
        self.spans_in = 0
        self.fallbacks = 0
        self.bytes_out = 0

    # -- framing --
    def _frame(self, kind: FrameKind, payload: bytes) -> Frame:
        f = Frame(kind, self._frame_seq, payload)
        self._frame_seq += 1
        return f

    def _emit(self, frames: list[Frame]) -> list[Frame]:
        for f in frames:
            self.bytes_out += HEADER.size + len(f.payload)
        if self.transport is not None and frames:
            self.transport.send(b"".join(f.encode() for f in frames))
        return frames

    # -- session --
    def open(self) -> list[Frame]:
        if self.state != "new":
            raise SessionClosed(f"session already {self.state}")
        self.state = "open"
        return self._emit([self._frame(FrameKind.HELLO, hello_payload(self.config))])

    def push(self, span: FlatSpan | Mapping | bytes | str) -> list[Frame]:
        if self.state != "open":
            raise SessionClosed(f"cannot push to a {self.state} session")
        if not isinstance(span, FlatSpan):
            if isinstance(span, (bytes, bytearray, str)):
                span = parse_span(span)
            span = flatten(span, self.config.depth_limit, self.config.time_keys)
        if not self._buf:
            self._buf_started = self._clock()
        self._buf.append(span)
        self._buf_bytes += span.estimated_size()
        self.spans_in += 1
        b = self.batch
        if (
            len(self._buf) >= b.max_spans
            or self._buf_bytes >= b.max_bytes
            or (b.max_age is not None and self._clock() - self._buf_started >= b.max_age)
        ):
            return self.flush()
        return []

    def tick(self) -> list[Frame]:
        """Flush when the oldest buffered span has outlived ``max_age``."""
        age = self.batch.max_age
        if self.state == "open" and self._buf and age is not None and self._clock() - self._buf_started >= age:
            return self.flush()
        return []

    def freeze(self) -> None:
        """Stop growing the structure; the Freeze delta goes out with the next flush."""
        self._pending_ops.extend(self.srt.freeze())

    def _time_base_ops(self, spans: list[FlatSpan]) -> list:
        times = [t for s in spans for t in s.time_fields.values()]
        if not times:
            return []
        lo, hi = min(times), max(times)
        base = self.srt.time_base
        period = self.config.time_base_period_ns
        if (
            self._time_base_set
            and lo >= base
            and lo - base < period
            and hi - base <= INT64_MAX
        ):
            return []
        now = self._time_clock() if self._time_clock is not None else lo
        self._time_base_set = True
        return [self.srt.reset_time_base(now)]

    def flush(self) -> list[Frame]:
        if self.state != "open":
            raise SessionClosed(f"cannot flush a {self.state} session")
        if not self._buf and not self._pending_ops:
            return []
        spans = self._buf
        self._buf = []
        self._buf_bytes = 0
        ops = self._pending_ops + self._time_base_ops(spans)
        self._pending_ops = []
        encoded, batch_ops = compress_batch(spans, self.srt)
        ops.extend(batch_ops)
        self.fallbacks += sum(1 for e in encoded if type(e) is FallbackSpan)
        frames = []
        deltas = self._deltas.collect([ops])
        if deltas:
            frames.append(self._frame(FrameKind.DELTA_SET, encode_deltas(deltas)))
        if encoded:
            frames.append(self._frame(FrameKind.SPAN_BATCH, encode_span_batch(encoded)))
        return self._emit(frames)

    def close(self) -> list[Frame]:
        if self.state == "closed":
            raise SessionClosed("session already closed")
        frames = self.flush() if self.state == "open" else []
        self.state = "closed"
        return frames + self._emit([self._frame(FrameKind.BYE, b"")])


# --- receiver -----------------------------------------------------------------

class Receiver:
    """One receiver session: mirrors the exporter tree from the delta stream.

    Any protocol error is fatal: the session refuses further input and a new
    session (with a fresh exporter) must be started.
    """

    def __init__(self, transport: Transport | None = None):
        self.transport = transport
        self.decoder = FrameDecoder()
        self.state: ReceiverState | None = None
        self.hello: dict | None = None
        self.expected_seq = 0
        self.closed = False
        self.failed: ProtocolError | None = None
        self.spans_out = 0

    def poll(self) -> list[FlatSpan]:
        if self.transport is None:
            raise SessionClosed("receiver has no transport")
        return self.feed(self.transport.recv())

    def feed(self, data: bytes) -> list[FlatSpan]:
        if self.failed is not None:
            raise SessionClosed(f"session failed earlier: {self.failed}")
        out: list[FlatSpan] = []
        try:
            for frame in self.decoder.feed(data):
                out.extend(self.handle(frame))
        except ProtocolError as exc:
            self.failed = exc
            raise
        return out

    def finish(self) -> None:
        """Check the stream ended cleanly: on a frame boundary, and with Bye
        if a session was ever opened."""
        self.decoder.finish()
        if self.expected_seq and not self.closed:
            raise ProtocolViolation("session ended without Bye")

    def handle(self, frame: Frame) -> list[FlatSpan]:
        if frame.seq != self.expected_seq:
            raise SequenceGap(f"expected frame {self.expected_seq}, got {frame.seq}")
        self.expected_seq += 1
        if self.closed:
            raise ProtocolViolation("frame after Bye")
        kind = frame.kind
        if kind == FrameKind.HELLO:
            if self.state is not None:
                raise ProtocolViolation("second Hello in one session")
            try:
                hello = json.loads(frame.payload)
            except ValueError as exc:
                raise ProtocolViolation(f"bad Hello payload: {exc}") from None
            if hello.get("version") != VERSION:
                raise BadVersion(f"peer speaks version {hello.get('version')}, expected {VERSION}")
            self.hello = hello
            self.state = ReceiverState(frozenset(hello.get("delimiters", "._")))
            return []
        if self.state is None:
            raise ProtocolViolation(f"{kind.name} frame before Hello")
        if kind == FrameKind.DELTA_SET:
            for d in decode_deltas(frame.payload):
                apply_delta(self.state, d)
            return []
        if kind == FrameKind.SPAN_BATCH:
            state = self.state
            spans = [decompress(e, state) for e in decode_span_batch(frame.payload)]
            self.spans_out += len(spans)
            return spans
        self.closed = True
        return []


def validate_stream(data: bytes) -> None:
    """Check delta-before-data ordering of a full session stream.

    Raises the same errors a receiver would; returns silently when every
    SpanBatch only references paths announced by earlier DeltaSets.
    """
    r = Receiver()
    r.feed(data)
    r.finish()


def run_session(
    spans: Iterable[FlatSpan | Mapping],
    config: SrtConfig | None = None,
    batch: BatchConfig | None = None,
) -> tuple[bytes, Exporter]:
    """Push every span through one exporter session; return the byte stream."""
    transport = LoopbackTransport()
    exp = Exporter(config, batch, transport)
    exp.open()
    for s in spans:
        exp.push(s)
    exp.close()
    return transport.recv(), exp


def receive_stream(data: bytes) -> list[FlatSpan]:
    r = Receiver()
    spans = r.feed(data)
    r.finish()
    return spans
