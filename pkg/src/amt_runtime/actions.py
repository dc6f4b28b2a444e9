"""Named, signature-typed actions invocable on global objects.

Action ids are the 64-bit FNV-1a hash of the action name, so both sides of
a connection derive identical ids without a coordination round; collisions
(with another registration or with the reserved system range) fail eagerly
at registration time.
"""

from __future__ import annotations

import threading

from .errors import AlreadyExistsError, InvalidArgumentError, SignatureMismatchError, UnknownActionError
from .wire import NAME_TO_TAG, TAG_INT64, TYPE_NAMES, fnv1a_64, value_tag

_INT64_MIN = -(1 << 63)
_INT64_MAX = (1 << 63) - 1

# Action ids 0x01..0xFF are reserved for runtime-internal system actions.
RESERVED_ACTION_MAX = 0xFF


class ActionRecord:
    __slots__ = ("name", "action_id", "signature", "handler")

    def __init__(self, name: str, action_id: int, signature: tuple[int, ...], handler):
        self.name = name
        self.action_id = action_id
        self.signature = signature
        self.handler = handler


def parse_signature(signature) -> tuple[int, ...]:
    """Accepts type-tag ints or their names ('i64', 'f64', 'bytes', 'list', 'unit')."""
    tags = []
    for entry in signature:
        if isinstance(entry, str):
            if entry not in NAME_TO_TAG:
                raise SignatureMismatchError(f"unknown type name {entry!r}")
            tags.append(NAME_TO_TAG[entry])
        elif entry in TYPE_NAMES:
            tags.append(entry)
        else:
            raise SignatureMismatchError(f"unknown type tag {entry!r}")
    return tuple(tags)


class ActionRegistry:
    """Bijective name <-> id table of remotely invocable handlers."""

    def __init__(self):
        self._lock = threading.Lock()
        self._by_name: dict[str, ActionRecord] = {}
        self._by_id: dict[int, ActionRecord] = {}

    def register(self, name: str, signature, handler) -> int:
        """Handler is called as handler(local_handle, *decoded_args)."""
        action_id = fnv1a_64(name.encode("utf-8"))
        tags = parse_signature(signature)
        with self._lock:
            if name in self._by_name:
                raise AlreadyExistsError(f"action {name!r} already registered")
            if action_id <= RESERVED_ACTION_MAX:
                raise AlreadyExistsError(f"action {name!r} hashes into the reserved system range")
            if action_id in self._by_id:
                raise AlreadyExistsError(
                    f"action id collision: {name!r} and {self._by_id[action_id].name!r} share id {action_id:#x}"
                )
            record = ActionRecord(name, action_id, tags, handler)
            self._by_name[name] = record
            self._by_id[action_id] = record
        return action_id

    def lookup(self, action) -> ActionRecord:
        """Find by name or id; raises UnknownActionError."""
        with self._lock:
            record = self._by_name.get(action) if isinstance(action, str) else self._by_id.get(action)
        if record is None:
            raise UnknownActionError(f"action {action!r} is not registered")
        return record

    def check_args(self, record: ActionRecord, args) -> None:
        """Arity and per-argument type check, before anything hits the wire."""
        if len(args) != len(record.signature):
            raise SignatureMismatchError(
                f"action {record.name!r} takes {len(record.signature)} argument(s), got {len(args)}"
            )
        for i, (arg, tag) in enumerate(zip(args, record.signature)):
            actual = value_tag(arg)
            if actual != tag:
                raise SignatureMismatchError(
                    f"action {record.name!r} argument {i}: expected {TYPE_NAMES[tag]}, got {TYPE_NAMES[actual]}"
                )
            if tag == TAG_INT64 and not _INT64_MIN <= arg <= _INT64_MAX:
                raise InvalidArgumentError(f"argument {i} of {record.name!r} outside 64-bit signed range")

    def names(self) -> list[str]:
        with self._lock:
            return sorted(self._by_name)
