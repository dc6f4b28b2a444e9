"""Active global address space state for one locality.

Holds the live-object table, the authority rows for objects homed here
(home locality always knows where its objects currently live), the
resolution cache, and -- on locality 0 only -- the global symbolic name
service.  Cross-locality traffic (authority queries, name operations,
migration transfers) travels as system parcels; this module only owns the
local state and its invariants.
"""

from __future__ import annotations

import threading
import time

from .errors import AlreadyExistsError, InvalidArgumentError, NotFoundError
from .gid import GID, GidMinter

STATUS_LIVE = "live"
STATUS_MIGRATING = "migrating"

MAX_NAME_LEN = 255


def validate_name(name: str) -> None:
    if not name.startswith("/"):
        raise InvalidArgumentError(f"name {name!r} must start with '/'")
    if len(name) > MAX_NAME_LEN:
        raise InvalidArgumentError(f"name longer than {MAX_NAME_LEN} bytes")
    try:
        name.encode("ascii")
    except UnicodeEncodeError:
        raise InvalidArgumentError(f"name {name!r} is not ASCII") from None
    if "//" in name or (len(name) > 1 and name.endswith("/")):
        raise InvalidArgumentError(f"name {name!r} has empty path segments")


class ObjectEntry:
    """A live (or mid-migration) object on this locality."""

    __slots__ = ("gid", "obj", "status", "inflight", "queued", "drain_future")

    def __init__(self, gid: GID, obj):
        self.gid = gid
        self.obj = obj
        self.status = STATUS_LIVE
        self.inflight = 0  # handler tasks bound to this object, spawned or running
        self.queued = []  # parcels held back while migrating
        self.drain_future = None


class AgasState:
    def __init__(self, locality: int):
        self.locality = locality
        self.lock = threading.Lock()
        self.minter = GidMinter(locality)
        self.objects: dict[GID, ObjectEntry] = {}
        # Authority rows exist only on an object's home locality.
        self.authority: dict[GID, int] = {}
        # gid -> (believed current locality, cached_at ns).  Stale entries
        # only ever cause a forward hop, never a lost message.
        self.cache: dict[GID, tuple[int, int]] = {}
        # Name service lives on locality 0.
        self.names: dict[str, GID] = {}
        self.counter_names: set[str] = set()
        self.migrations = 0

    # -- object table ---------------------------------------------------------

    def insert_new(self, obj) -> GID:
        with self.lock:
            gid = self.minter.mint()
            self.objects[gid] = ObjectEntry(gid, obj)
            self.authority[gid] = self.locality
        return gid

    def insert_migrated(self, gid: GID, obj) -> None:
        with self.lock:
            if gid in self.objects:
                raise AlreadyExistsError(f"object {gid} already present")
            self.objects[gid] = ObjectEntry(gid, obj)
            self.cache[gid] = (self.locality, time.monotonic_ns())

    def entry(self, gid: GID) -> ObjectEntry | None:
        with self.lock:
            return self.objects.get(gid)

    def remove(self, gid: GID) -> ObjectEntry:
        with self.lock:
            entry = self.objects.pop(gid, None)
        if entry is None:
            raise NotFoundError(f"object {gid} is not local")
        return entry

    def live_count(self) -> int:
        with self.lock:
            return len(self.objects)

    # -- authority (home-locality rows) ----------------------------------------

    def authority_get(self, gid: GID) -> int:
        with self.lock:
            loc = self.authority.get(gid)
        if loc is None:
            raise NotFoundError(f"no authority row for {gid}")
        return loc

    def authority_set(self, gid: GID, locality: int) -> None:
        with self.lock:
            self.authority[gid] = locality

    def authority_remove(self, gid: GID) -> None:
        with self.lock:
            if gid not in self.authority:
                raise NotFoundError(f"no authority row for {gid}")
            del self.authority[gid]

    # -- resolution cache --------------------------------------------------------

    def cache_get(self, gid: GID) -> int | None:
        with self.lock:
            row = self.cache.get(gid)
        return row[0] if row is not None else None

    def cache_put(self, gid: GID, locality: int) -> None:
        with self.lock:
            self.cache[gid] = (locality, time.monotonic_ns())

    def cache_drop(self, gid: GID) -> None:
        with self.lock:
            self.cache.pop(gid, None)

    # -- name service (locality 0 only) -------------------------------------------

    def name_register(self, name: str, gid: GID) -> None:
        validate_name(name)
        with self.lock:
            if name in self.names:
                raise AlreadyExistsError(f"name {name!r} already registered")
            self.names[name] = gid

    def name_resolve(self, name: str) -> GID:
        with self.lock:
            gid = self.names.get(name)
        if gid is None:
            raise NotFoundError(f"name {name!r} is not registered")
        return gid

    def counter_index_add(self, name: str) -> None:
        with self.lock:
            self.counter_names.add(name)

    def counter_index_list(self, prefix: str) -> list[str]:
        with self.lock:
            return sorted(n for n in self.counter_names if n.startswith(prefix))
