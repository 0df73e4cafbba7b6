"""Structure-update messages exchanged between exporter and receiver.

Names, keys and universal values inside these ops are in *encoded* form:
either a dictionary identifier or a ``\\~``-prefixed literal. Values of a
``PathAdd`` line up with the latest ``KeyOrder`` announced for the name.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union


@dataclass(frozen=True)
class PathAdd:
    path_id: str
    name: str
    values: tuple[str, ...]


@dataclass(frozen=True)
class PathDelete:
    path_id: str


@dataclass(frozen=True)
class KeyOrder:
    """Universal keys of a name, root to leaf.

    Dropping a key (demotion) projects every live path of the name onto the
    remaining keys.
    """

    name: str
    keys: tuple[str, ...]


@dataclass(frozen=True)
class LocalKeySet:
    name: str
    local_keys: tuple[str, ...]
    time_keys: tuple[str, ...]


@dataclass(frozen=True)
class DictAdd:
    identifier: str
    token: str


@dataclass(frozen=True)
class TimeBase:
    nanos: int


@dataclass(frozen=True)
class Freeze:
    pass


Op = Union[PathAdd, PathDelete, KeyOrder, LocalKeySet, DictAdd, TimeBase, Freeze]


@dataclass(frozen=True)
class DeltaMessage:
    seq: int
    op: Op
