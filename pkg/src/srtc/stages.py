"""Pluggable byte-stream compressors applied after span compression."""

from __future__ import annotations

import bz2
import lzma
import shlex
import shutil
import subprocess
import zlib
from typing import Iterable, Protocol

from .errors import StageFailure, StageUnavailable


class Stage(Protocol):
    name: str

    def compress(self, data: bytes) -> bytes: ...

    def decompress(self, data: bytes) -> bytes: ...


class IdentityStage:
    name = "identity"

    def compress(self, data: bytes) -> bytes:
        return bytes(data)

    def decompress(self, data: bytes) -> bytes:
        return bytes(data)


class DeflateStage:
    """Raw DEFLATE stream (no zlib/gzip container)."""

    name = "deflate"

    def __init__(self, level: int = 6):
        self.level = level

    def compress(self, data: bytes) -> bytes:
        c = zlib.compressobj(self.level, zlib.DEFLATED, -15)
        return c.compress(data) + c.flush()

    def decompress(self, data: bytes) -> bytes:
        try:
            d = zlib.decompressobj(-15)
            out = d.decompress(data) + d.flush()
        except zlib.error as exc:
            raise StageFailure(f"deflate: {exc}") from None
        if not d.eof:
            raise StageFailure("deflate: truncated stream")
        return out


class GzipStage:
    name = "gzip"

    def __init__(self, level: int = 6):
        self.level = level

    def compress(self, data: bytes) -> bytes:
        c = zlib.compressobj(self.level, zlib.DEFLATED, 31)
        return c.compress(data) + c.flush()

    def decompress(self, data: bytes) -> bytes:
        try:
            return zlib.decompress(data, 31)
        except zlib.error as exc:
            raise StageFailure(f"gzip: {exc}") from None


class Bzip2Stage:
    name = "bzip2"

    def compress(self, data: bytes) -> bytes:
        return bz2.compress(data, 9)

    def decompress(self, data: bytes) -> bytes:
        try:
            return bz2.decompress(data)
        except (OSError, ValueError) as exc:
            raise StageFailure(f"bzip2: {exc}") from None


class LzmaStage:
    name = "lzma"

    def compress(self, data: bytes) -> bytes:
        return lzma.compress(data)

    def decompress(self, data: bytes) -> bytes:
        try:
            return lzma.decompress(data)
        except lzma.LZMAError as exc:
            raise StageFailure(f"lzma: {exc}") from None


class CommandStage:
    """External filter programs: bytes on stdin, result on stdout.

    Spelled ``cmd:<compress command>::<decompress command>``, for example
    ``cmd:zstd -q -c::zstd -q -d -c``.
    """

    def __init__(self, compress_cmd: str, decompress_cmd: str):
        self.name = f"cmd:{compress_cmd}::{decompress_cmd}"
        self._compress = shlex.split(compress_cmd)
        self._decompress = shlex.split(decompress_cmd)
        for argv in (self._compress, self._decompress):
            if not argv or shutil.which(argv[0]) is None:
                raise StageUnavailable(f"stage command not found: {' '.join(argv) or '<empty>'}")

    def _run(self, argv: list[str], data: bytes) -> bytes:
        proc = subprocess.run(argv, input=data, capture_output=True, check=False)
        if proc.returncode != 0:
            raise StageFailure(f"{argv[0]} exited {proc.returncode}: {proc.stderr.decode(errors='replace').strip()}")
        return proc.stdout

    def compress(self, data: bytes) -> bytes:
        return self._run(self._compress, data)

    def decompress(self, data: bytes) -> bytes:
        return self._run(self._decompress, data)


_BUILTIN = {
    "identity": IdentityStage,
    "none": IdentityStage,
    "deflate": DeflateStage,
    "gzip": GzipStage,
    "bzip2": Bzip2Stage,
    "bz2": Bzip2Stage,
    "lzma": LzmaStage,
    "xz": LzmaStage,
}

STAGE_NAMES = ("identity", "deflate", "gzip", "bzip2", "lzma")


def get_stage(name: str) -> Stage:
    if name.startswith("cmd:"):
        spec = name[4:]
        if "::" not in spec:
            raise StageUnavailable("command stages are written cmd:<compress>::<decompress>")
        comp, decomp = spec.split("::", 1)
        return CommandStage(comp, decomp)
    try:
        return _BUILTIN[name.lower()]()
    except KeyError:
        raise StageUnavailable(f"unknown stage {name!r}; known: {', '.join(STAGE_NAMES)}, cmd:...") from None


def post_compress(frames: Iterable[bytes], stage: Stage) -> bytes:
    """Compress a session's concatenated frames as one stream."""
    return stage.compress(b"".join(bytes(f) for f in frames))


def post_decompress(data: bytes, stage: Stage) -> bytes:
    return stage.decompress(data)
