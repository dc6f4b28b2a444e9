"""Serialize/restore contract for objects that can move between localities.

A migratable object exposes a type name (registered identically on every
locality), a snapshot() producing a wire-encodable value, and a restore()
classmethod rebuilding the object from that value.  Anything registered in
the address space without this contract simply cannot migrate.
"""

from __future__ import annotations

import threading

from .errors import NotFoundError, UnsupportedError


class Migratable:
    """Base class for objects that survive transfer to another locality."""

    type_name: str = ""

    def snapshot(self):
        raise NotImplementedError

    @classmethod
    def restore(cls, state) -> "Migratable":
        raise NotImplementedError


class TypeRegistry:
    """Maps migratable type names to their restore factories."""

    def __init__(self):
        self._lock = threading.Lock()
        self._types: dict[str, type] = {}

    def register(self, cls: type) -> None:
        name = getattr(cls, "type_name", "")
        if not name:
            raise UnsupportedError(f"{cls.__name__} has no type_name")
        with self._lock:
            existing = self._types.get(name)
            if existing is not None and existing is not cls:
                raise UnsupportedError(f"type name {name!r} already bound to {existing.__name__}")
            self._types[name] = cls

    def restore(self, name: str, state):
        with self._lock:
            cls = self._types.get(name)
        if cls is None:
            raise NotFoundError(f"migratable type {name!r} is not registered here")
        return cls.restore(state)


def check_migratable(obj) -> str:
    """The object's registered type name, or raise if it cannot migrate."""
    name = getattr(obj, "type_name", "")
    if not name or not callable(getattr(obj, "snapshot", None)):
        raise UnsupportedError(f"{type(obj).__name__} does not implement the migration contract")
    return name


class CounterCell(Migratable):
    """A migratable integer cell; the demo object for migration transparency."""

    type_name = "amt/counter-cell"

    def __init__(self, value: int = 0):
        self._lock = threading.Lock()
        self.value = value

    def add(self, amount: int) -> int:
        with self._lock:
            self.value += amount
            return self.value

    def read(self) -> int:
        with self._lock:
            return self.value

    def snapshot(self):
        return self.read()

    @classmethod
    def restore(cls, state) -> "CounterCell":
        return cls(int(state))
