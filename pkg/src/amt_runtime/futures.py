"""Single-assignment futures and the combinators built on them.

A future completes exactly once, with a value or an error.  Continuations
attached before or after completion run exactly once each; user
continuations (then / dataflow bodies) are always scheduled as fresh tasks,
never run inline while future state is held.
"""

from __future__ import annotations

import threading

from .errors import FutureAlreadySetError
from .tasks import Priority

_EMPTY = 0
_VALUE = 1
_ERROR = 2


class Future:
    """Shared result cell; safe to complete, read and subscribe from any thread."""

    __slots__ = ("_lock", "_state", "_payload", "_callbacks", "_event", "_exec")

    def __init__(self, executor=None):
        self._lock = threading.Lock()
        self._state = _EMPTY
        self._payload = None
        self._callbacks = []
        self._event = None
        self._exec = executor

    # -- completion ---------------------------------------------------------

    def _complete(self, state: int, payload, strict: bool) -> bool:
        with self._lock:
            if self._state != _EMPTY:
                if strict:
                    raise FutureAlreadySetError("future already completed")
                return False
            self._state = state
            self._payload = payload
            callbacks, self._callbacks = self._callbacks, []
            event = self._event
        if event is not None:
            event.set()
        for cb in callbacks:
            cb(self)
        return True

    def set_value(self, value) -> None:
        self._complete(_VALUE, value, strict=True)

    def set_error(self, error: BaseException) -> None:
        self._complete(_ERROR, error, strict=True)

    def try_set_value(self, value) -> bool:
        """Complete if still empty; used where late duplicates are expected."""
        return self._complete(_VALUE, value, strict=False)

    def try_set_error(self, error: BaseException) -> bool:
        return self._complete(_ERROR, error, strict=False)

    # -- inspection ---------------------------------------------------------

    def done(self) -> bool:
        return self._state != _EMPTY

    def error(self):
        """The error if completed with one, else None."""
        with self._lock:
            return self._payload if self._state == _ERROR else None

    def value(self):
        """The value of a completed future; raises its error, or if empty."""
        with self._lock:
            if self._state == _VALUE:
                return self._payload
            if self._state == _ERROR:
                raise self._payload
        raise ValueError("future not completed")

    # -- waiting ------------------------------------------------------------

    def get(self, timeout: float | None = None):
        """Wait for completion and return the value (or re-raise the error).

        Inside a task this suspends the task and frees its worker; the task
        resumes when the future completes.  Outside the runtime the calling
        thread parks on an event.
        """
        if self._state != _EMPTY:
            return self.value()
        ex = self._exec
        if ex is not None and ex.in_task():
            if timeout is not None:
                raise ValueError("timeout is only supported outside the runtime")
            ex.wait_on(self)
            return self.value()
        with self._lock:
            if self._state != _EMPTY:
                pass
            else:
                if self._event is None:
                    self._event = threading.Event()
                event = self._event
        if self._state == _EMPTY:
            if not event.wait(timeout):
                raise TimeoutError("future did not complete in time")
        return self.value()

    # -- subscriptions ------------------------------------------------------

    def add_done_callback(self, cb) -> None:
        """Run cb(self) once the future completes (immediately if it has)."""
        with self._lock:
            if self._state == _EMPTY:
                self._callbacks.append(cb)
                return
        cb(self)

    def then(self, cont, priority: Priority | None = None) -> "Future":
        """Schedule cont(value) as a fresh task after this future completes.

        On error the continuation is skipped and the error propagates to the
        returned future.  Priority defaults to the completing context's.
        """
        ex = self._exec
        if ex is None:
            raise RuntimeError("future is not bound to a runtime")
        result = Future(ex)

        def on_done(fut: "Future"):
            err = fut.error()
            if err is not None:
                result.set_error(err)
                return
            prio = priority if priority is not None else ex.current_priority()

            def run():
                return cont(fut._payload)

            ex.schedule(run, result, prio)

        self.add_done_callback(on_done)
        return result


def make_ready_future(value, executor=None) -> Future:
    f = Future(executor)
    f.set_value(value)
    return f


def make_error_future(error: BaseException, executor=None) -> Future:
    f = Future(executor)
    f.set_error(error)
    return f


def when_all(futures, executor=None) -> Future:
    """Complete after every input completes, preserving input order.

    If any input errored, the aggregate errors with the first error in
    input order (positional, so deterministic under concurrency).
    """
    futures = list(futures)
    ex = executor
    if ex is None:
        for f in futures:
            if f._exec is not None:
                ex = f._exec
                break
    result = Future(ex)
    if not futures:
        result.set_value([])
        return result

    remaining = [len(futures)]
    lock = threading.Lock()

    def on_done(_fut):
        with lock:
            remaining[0] -= 1
            if remaining[0] != 0:
                return
        for f in futures:
            err = f.error()
            if err is not None:
                result.set_error(err)
                return
        result.set_value([f._payload for f in futures])

    for f in futures:
        f.add_done_callback(on_done)
    return result


def dataflow(body, dependencies, executor=None, priority: Priority | None = None) -> Future:
    """Run body(*results) as a fresh task once every dependency completed.

    Equivalent to then(when_all(deps), body); a dependency error propagates
    without invoking the body.  With no dependencies this degenerates to a
    plain spawn of the body.
    """
    ex = executor
    if ex is None:
        for f in dependencies:
            if f._exec is not None:
                ex = f._exec
                break
    gathered = when_all(dependencies, ex)
    return gathered.then(lambda values: body(*values), priority=priority)
