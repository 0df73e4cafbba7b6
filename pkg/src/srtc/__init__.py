"""Lossless span compression with a shared, incrementally synchronized retrieval tree."""

from .codec import CompressedSpan, FallbackSpan, compress, compress_batch, decompress
from .deltas import DeltaMessage, DictAdd, Freeze, KeyOrder, LocalKeySet, PathAdd, PathDelete, TimeBase
from .dictionary import TokenDictionary, identifier
from .errors import (
    SrtcError,
    SpanFormatError,
    MalformedJson,
    MissingName,
    KeyCollision,
    StructuralLocalityViolation,
    Frozen,
    UnknownIdentifier,
    ProtocolError,
    SequenceGap,
    ProtocolViolation,
    UnknownPathId,
    DuplicatePathId,
    ArityMismatch,
    BadMagic,
    BadVersion,
    TruncatedData,
    SessionClosed,
    StageFailure,
    StageUnavailable,
    EmptyCorpus,
    InfeasibleSpec,
)
from .pipeline import BatchConfig, Exporter, Frame, FrameKind, LoopbackTransport, Receiver, TcpTransport
from .redundancy import RedundancyReport, redundancy_report
from .spans import FlatSpan, flatten, parse_span, unflatten
from .srt import InsertOutcome, SpanRetrievalTree, SrtConfig
from .stages import get_stage
from .sync import ReceiverState, apply_delta, coalesce, collect_deltas
from .workload import WorkloadSpec, generate_spans

__version__ = "0.1.0"
