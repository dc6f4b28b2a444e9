"""128-bit global object identities.

A GID names an object independent of where it currently lives: 32-bit home
locality, 32-bit generation, 64-bit sequence number.  The all-zero GID is the
null GID and is never assigned.  Generation 0 is reserved for per-locality
runtime service endpoints.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass

_GID_STRUCT = struct.Struct(">IIQ")

GID_BYTES = 16

# Generation of the per-locality runtime service endpoint (never minted for
# user objects).
SERVICE_GENERATION = 0
SERVICE_SEQUENCE = 1


@dataclass(frozen=True, slots=True)
class GID:
    home_locality: int
    generation: int
    sequence: int

    def is_null(self) -> bool:
        return self.home_locality == 0 and self.generation == 0 and self.sequence == 0

    def is_service(self) -> bool:
        return self.generation == SERVICE_GENERATION and self.sequence == SERVICE_SEQUENCE

    def pack(self) -> bytes:
        return _GID_STRUCT.pack(self.home_locality, self.generation, self.sequence)

    @classmethod
    def unpack(cls, data: bytes) -> "GID":
        home, gen, seq = _GID_STRUCT.unpack(data)
        return cls(home, gen, seq)

    def __str__(self) -> str:
        return f"{self.home_locality:08x}.{self.generation:08x}.{self.sequence:016x}"


NULL_GID = GID(0, 0, 0)


def service_gid(locality: int) -> GID:
    """The well-known endpoint GID for a locality's runtime services."""
    return GID(locality, SERVICE_GENERATION, SERVICE_SEQUENCE)


_generation_counter = itertools.count(1)


def next_generation() -> int:
    """Fresh generation for one runtime instance; keeps GIDs distinct across
    runtime instances sharing a process."""
    return next(_generation_counter)


class GidMinter:
    """Mints strictly increasing, never-reused GIDs for one locality."""

    def __init__(self, locality: int, generation: int | None = None):
        self._locality = locality
        self._generation = next_generation() if generation is None else generation
        if self._generation == SERVICE_GENERATION:
            raise ValueError("generation 0 is reserved")
        self._seq = itertools.count(1)

    def mint(self) -> GID:
        return GID(self._locality, self._generation, next(self._seq))
