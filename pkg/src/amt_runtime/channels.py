"""FIFO channels pairing sends to receives.

A receive before any send returns a pending future resolved by the next
send; at any instant at most one of the value buffer and the waiter list is
non-empty.  Channels registered under a symbolic name become reachable from
other localities through the parcel layer.
"""

from __future__ import annotations

import threading
from collections import deque

from .errors import ChannelClosedError
from .futures import Future


class Channel:
    def __init__(self, executor=None):
        self._lock = threading.Lock()
        self._values = deque()
        self._waiters = deque()
        self._closed = False
        self._exec = executor
        self.gid = None  # set when registered in the global address space

    def send(self, value) -> None:
        with self._lock:
            if self._closed:
                raise ChannelClosedError("send on closed channel")
            if self._waiters:
                waiter = self._waiters.popleft()
            else:
                self._values.append(value)
                return
        waiter.set_value(value)

    def recv(self) -> Future:
        with self._lock:
            if self._values:
                value = self._values.popleft()
                f = Future(self._exec)
                f.set_value(value)
                return f
            if self._closed:
                f = Future(self._exec)
                f.set_error(ChannelClosedError("recv on closed channel"))
                return f
            f = Future(self._exec)
            self._waiters.append(f)
            return f

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            waiters = list(self._waiters)
            self._waiters.clear()
        for w in waiters:
            w.set_error(ChannelClosedError("channel closed while waiting"))

    @property
    def closed(self) -> bool:
        return self._closed

    def pending_values(self) -> int:
        with self._lock:
            return len(self._values)

    def pending_waiters(self) -> int:
        with self._lock:
            return len(self._waiters)
