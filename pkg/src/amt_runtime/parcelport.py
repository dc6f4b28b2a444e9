"""One-sided active messages on global objects.

apply() never blocks: it validates the action signature up front, creates a
continuation future, and routes the invocation to wherever the object
lives.  Local objects are invoked directly (the wire is skipped entirely);
remote ones get an encoded parcel.  At the destination the handler runs as
an ordinary scheduler task -- nothing ever polls for messages -- and the
result rides back in a continuation parcel addressed to the caller.

Parcels that arrive at a locality that no longer holds the object are
forwarded (at most once per migration that raced them) after consulting
the home authority, and the original sender gets a cache-repair notice.
"""

from __future__ import annotations

import itertools
import logging
import threading

from .agas import STATUS_LIVE, STATUS_MIGRATING, AgasState
from .errors import (
    AmtError,
    BusyError,
    InvalidArgumentError,
    NotFoundError,
    RuntimeShutdownError,
    TransportError,
    error_from_wire,
    error_to_wire,
)
from .futures import Future
from .gid import GID, NULL_GID, service_gid
from .tasks import Priority
from .wire import Parcel, decode_parcel, decode_values, encode_values

log = logging.getLogger("amt.parcel")

# Reserved system action ids (0x01..0xFF).
ACT_RESOLVE = 0x01
ACT_NAME_REGISTER = 0x02
ACT_NAME_RESOLVE = 0x03
ACT_AUTH_UPDATE = 0x04
ACT_AUTH_REMOVE = 0x05
ACT_MIGRATE_START = 0x06
ACT_MIGRATE_RECV = 0x07
ACT_CACHE_NOTICE = 0x08
ACT_CONT_RESULT = 0x09
ACT_BARRIER_ARRIVE = 0x0A
ACT_BARRIER_RELEASE = 0x0B
ACT_SHUTDOWN = 0x0C
ACT_CHANNEL_SEND = 0x10
ACT_CHANNEL_RECV = 0x11
ACT_COUNTER_SAMPLE = 0x20
ACT_COUNTER_RESET = 0x21
ACT_COUNTER_INDEX_ADD = 0x22
ACT_COUNTER_LIST = 0x23

SYSTEM_ACTION_MAX = 0xFF

# Object-addressed system actions that manage their own liveness bookkeeping:
# migration drives the drain itself, and channel sends run inline (see below).
_NO_INFLIGHT = {ACT_MIGRATE_START, ACT_CHANNEL_SEND}

_OK = 0


class ParcelCounters:
    def __init__(self):
        self._lock = threading.Lock()
        self.sent = 0
        self.received = 0
        self.forwarded = 0
        self.bytes_sent = 0
        self.sent_to: dict[int, int] = {}
        self.received_from: dict[int, int] = {}

    def count_sent(self, peer: int, nbytes: int) -> None:
        with self._lock:
            self.sent += 1
            self.bytes_sent += nbytes
            self.sent_to[peer] = self.sent_to.get(peer, 0) + 1

    def count_received(self, peer: int) -> None:
        with self._lock:
            self.received += 1
            self.received_from[peer] = self.received_from.get(peer, 0) + 1

    def count_forwarded(self) -> None:
        with self._lock:
            self.forwarded += 1


class ParcelPort:
    def __init__(self, runtime):
        self._rt = runtime
        self.locality = runtime.locality_id
        self.agas: AgasState = runtime.agas
        self.actions = runtime.actions
        self.counters = ParcelCounters()
        self._transport = None
        self._seq_lock = threading.Lock()
        self._seq = itertools.count(1)
        self._cont_lock = threading.Lock()
        self._continuations: dict[GID, tuple[Future, list]] = {}
        # Per-destination dispatch chains: applies from this locality to one
        # object are handed to the transport in issue order, even when an
        # early one is still waiting on address resolution.
        self._dispatch_lock = threading.Lock()
        self._dispatch_tails: dict[GID, Future] = {}
        # System handler tables, installed by the runtime:
        #   service: action_id -> fn(args, parcel) -> value
        #   object:  action_id -> fn(entry, args, parcel) -> value
        self.service_handlers: dict[int, object] = {}
        self.object_handlers: dict[int, object] = {}

    def attach_transport(self, transport) -> None:
        self._transport = transport

    # -- continuations ----------------------------------------------------------

    def new_continuation(self, future: Future) -> GID:
        gid = self.agas.minter.mint()
        with self._cont_lock:
            self._continuations[gid] = (future, [None])
        return gid

    def _set_continuation_target(self, gid: GID, peer: int) -> None:
        with self._cont_lock:
            row = self._continuations.get(gid)
            if row is not None:
                row[1][0] = peer

    def complete_continuation(self, gid: GID, values: list) -> None:
        with self._cont_lock:
            row = self._continuations.pop(gid, None)
        if row is None:
            return  # already completed (e.g. transport error beat the reply)
        future = row[0]
        status = values[0] if values else None
        if status == _OK:
            future.try_set_value(values[1] if len(values) > 1 else None)
        elif isinstance(status, int):
            message = values[1].decode("utf-8", "replace") if len(values) > 1 else ""
            future.try_set_error(error_from_wire(status, message))
        else:
            future.try_set_error(AmtError("malformed continuation result"))

    def fail_continuation(self, gid: GID, error: BaseException) -> None:
        with self._cont_lock:
            row = self._continuations.pop(gid, None)
        if row is not None:
            row[0].try_set_error(error)

    def fail_peer(self, peer: int) -> None:
        """Transport lost: every request in flight to that locality errors out."""
        with self._cont_lock:
            doomed = [gid for gid, row in self._continuations.items() if row[1][0] == peer]
            rows = [self._continuations.pop(gid) for gid in doomed]
        for row in rows:
            row[0].try_set_error(TransportError(f"connection to locality {peer} lost"))

    def pending_continuations(self) -> int:
        with self._cont_lock:
            return len(self._continuations)

    # -- sending ------------------------------------------------------------------

    def make_parcel(self, dest: GID, action_id: int, args, continuation: GID = NULL_GID) -> Parcel:
        with self._seq_lock:
            seq = next(self._seq)
        return Parcel(
            dest=dest,
            action_id=action_id,
            source_locality=self.locality,
            seq_no=seq,
            payload=encode_values(args),
            continuation=continuation,
        )

    def send_parcel(self, dest_locality: int, parcel: Parcel) -> None:
        if dest_locality == self.locality:
            self.deliver(parcel, from_wire=False)
            return
        if self._transport is None:
            raise TransportError("no transport configured (single-locality runtime)")
        frame = parcel.encode()
        self._transport.send(dest_locality, frame)
        self.counters.count_sent(dest_locality, len(frame))

    # -- transport callbacks ---------------------------------------------------------

    def on_frame(self, peer: int, frame: bytes) -> None:
        self.counters.count_received(peer)
        try:
            parcel = decode_parcel(frame)
        except AmtError as exc:
            log.error("dropping undecodable frame from %d: %s", peer, exc)
            return
        self.deliver(parcel, from_wire=True)

    def on_peer_down(self, peer: int) -> None:
        self.fail_peer(peer)

    # -- apply ------------------------------------------------------------------------

    def apply(self, gid: GID, action, args=(), priority: Priority = Priority.NORMAL) -> Future:
        """Invoke a registered action on the object gid names, wherever it is."""
        future = Future(self._rt)
        args = list(args)
        try:
            if gid is None or gid.is_null():
                raise InvalidArgumentError("null GID")
            record = self.actions.lookup(action)
            self.actions.check_args(record, args)
        except AmtError as exc:
            future.set_error(exc)
            return future
        self._route_invocation(gid, record.action_id, args, future, priority)
        return future

    def apply_system(self, dest: GID, action_id: int, args=(), priority: Priority = Priority.NORMAL) -> Future:
        """Internal: invoke a reserved system action (no signature table)."""
        future = Future(self._rt)
        self._route_invocation(dest, action_id, list(args), future, priority)
        return future

    def apply_detached(self, dest: GID, action_id: int, args=()) -> None:
        """Fire-and-forget system parcel (null continuation); errors are logged."""
        try:
            if dest.is_service():
                if dest.home_locality == self.locality:
                    parcel = self.make_parcel(dest, action_id, args)
                    self.deliver(parcel, from_wire=False)
                else:
                    self.send_parcel(dest.home_locality, self.make_parcel(dest, action_id, args))
            else:
                self.send_parcel(dest.home_locality, self.make_parcel(dest, action_id, args))
        except AmtError as exc:
            log.debug("detached parcel %#x to %s dropped: %s", action_id, dest, exc)

    def _route_invocation(self, gid: GID, action_id: int, args: list, future: Future, priority: Priority) -> None:
        """Run locally if the object is here, queue if it is migrating away,
        otherwise resolve and ship a parcel.  Never blocks the caller."""
        if gid.is_service():
            if gid.home_locality == self.locality:
                self._spawn_service_handler(action_id, args, None, future, priority)
            else:
                self._send_remote(gid, gid.home_locality, action_id, args, future)
            return
        parcel = None
        while True:
            with self.agas.lock:
                entry = self.agas.objects.get(gid)
                if entry is not None and entry.status == STATUS_LIVE:
                    if action_id not in _NO_INFLIGHT:
                        entry.inflight += 1
                    mode = "local"
                    break
                if entry is not None and entry.status == STATUS_MIGRATING:
                    if action_id == ACT_MIGRATE_START:
                        mode = "busy"
                        break
                    if parcel is not None:
                        entry.queued.append(parcel)
                        return
                elif parcel is not None:
                    mode = "remote"
                    break
            # Build the parcel outside the table lock, then re-inspect (the
            # object may land back here while we encode).
            cont = self.new_continuation(future)
            try:
                parcel = self.make_parcel(gid, action_id, args, continuation=cont)
            except AmtError as exc:
                self.fail_continuation(cont, exc)
                return
        if mode == "busy":
            if parcel is not None:
                with self._cont_lock:
                    self._continuations.pop(parcel.continuation, None)
            future.try_set_error(BusyError(f"object {gid} is already migrating"))
            return
        if mode == "local":
            if parcel is not None:
                # Raced a migration that brought the object back: the parcel
                # is not needed, drop its continuation row.
                with self._cont_lock:
                    self._continuations.pop(parcel.continuation, None)
            if action_id == ACT_CHANNEL_SEND:
                # Inline on the caller: channel insertion must follow issue
                # order, and a spawned task per send cannot guarantee that.
                try:
                    self._channel_insert(gid, args)
                except Exception as exc:
                    future.try_set_error(exc)
                else:
                    future.try_set_value(None)
                return
            self._spawn_object_handler_local(gid, action_id, args, future, priority)
        else:
            self._resolve_and_send(gid, parcel, future)

    def _send_remote(self, dest: GID, dest_locality: int, action_id: int, args: list, future: Future) -> None:
        cont = self.new_continuation(future)
        parcel = self.make_parcel(dest, action_id, args, continuation=cont)
        self._set_continuation_target(cont, dest_locality)
        try:
            self.send_parcel(dest_locality, parcel)
        except AmtError as exc:
            self.fail_continuation(cont, exc)

    def _resolve_and_send(self, gid: GID, parcel: Parcel, future: Future) -> None:
        cont = parcel.continuation
        with self._dispatch_lock:
            prev = self._dispatch_tails.get(gid)
            gate = Future(None)
            self._dispatch_tails[gid] = gate

        def release():
            with self._dispatch_lock:
                if self._dispatch_tails.get(gid) is gate:
                    del self._dispatch_tails[gid]
            gate.try_set_value(None)

        def dispatch(_prev=None):
            def on_resolved(fut: Future):
                err = fut.error()
                if err is not None:
                    self.fail_continuation(cont, err)
                else:
                    locality = fut._payload
                    self._set_continuation_target(cont, locality)
                    try:
                        self.send_parcel(locality, parcel)
                    except AmtError as exc:
                        self.fail_continuation(cont, exc)
                release()

            self.resolve_locality(gid).add_done_callback(on_resolved)

        if prev is None:
            dispatch()
        else:
            prev.add_done_callback(dispatch)

    # -- resolution ---------------------------------------------------------------------

    def resolve_locality(self, gid: GID, use_cache: bool = True) -> Future:
        """Where does gid currently live?  Cache first, then the home authority."""
        result = Future(self._rt)
        if gid.is_service():
            result.set_value(gid.home_locality)
            return result
        with self.agas.lock:
            if gid in self.agas.objects:
                result.set_value(self.locality)
                return result
        if gid.home_locality == self.locality:
            try:
                result.set_value(self.agas.authority_get(gid))
            except AmtError as exc:
                result.set_error(exc)
            return result
        if use_cache:
            cached = self.agas.cache_get(gid)
            if cached is not None:
                result.set_value(cached)
                return result
        inner = self.apply_system(service_gid(gid.home_locality), ACT_RESOLVE, [gid.pack()])

        def on_done(fut: Future):
            err = fut.error()
            if err is not None:
                result.try_set_error(err)
                return
            locality = fut._payload
            self.agas.cache_put(gid, locality)
            result.try_set_value(locality)

        inner.add_done_callback(on_done)
        return result

    # -- delivery -------------------------------------------------------------------------

    def deliver(self, parcel: Parcel, from_wire: bool) -> None:
        if parcel.action_id == ACT_CONT_RESULT:
            try:
                values = decode_values(parcel.payload)
            except AmtError as exc:
                log.error("undecodable continuation result: %s", exc)
                return
            self.complete_continuation(parcel.dest, values)
            return
        if parcel.dest.is_service():
            self._spawn_service_handler_parcel(parcel)
            return
        gid = parcel.dest
        busy = False
        with self.agas.lock:
            entry = self.agas.objects.get(gid)
            if entry is not None and entry.status == STATUS_LIVE:
                if parcel.action_id not in _NO_INFLIGHT:
                    entry.inflight += 1
            elif entry is not None and entry.status == STATUS_MIGRATING:
                if parcel.action_id == ACT_MIGRATE_START:
                    busy = True
                else:
                    entry.queued.append(parcel)
                    return
            else:
                # Not here: forward toward the current owner.
                entry = None
        if busy:
            self._reply(parcel, error=BusyError(f"object {gid} is already migrating"))
            return
        if entry is None:
            self._spawn_forwarder(parcel)
        elif parcel.action_id == ACT_CHANNEL_SEND:
            # Inline, like continuation results: the reader hands frames over
            # in link order, and channel FIFO must preserve that order, which
            # a spawned task per send would not.
            try:
                args = decode_values(parcel.payload)
                self._channel_insert(gid, args)
            except Exception as exc:
                self._reply(parcel, error=exc)
            else:
                self._reply(parcel, value=None)
        else:
            self._spawn_object_handler_parcel(gid, parcel)

    # -- handler spawning -------------------------------------------------------------------

    def _spawn(self, fn, priority: Priority = Priority.NORMAL) -> bool:
        try:
            self._rt.spawn_system_task(fn, priority)
            return True
        except RuntimeShutdownError:
            log.debug("handler dropped during shutdown")
            return False

    def _channel_insert(self, gid: GID, args: list) -> None:
        from .channels import Channel

        entry = self.agas.entry(gid)
        if entry is None:
            raise NotFoundError(f"channel {gid} not found")
        if not isinstance(entry.obj, Channel):
            raise InvalidArgumentError(f"object {gid} is not a channel")
        entry.obj.send(args[0])

    def _release_inflight(self, gid: GID) -> None:
        drain = None
        with self.agas.lock:
            entry = self.agas.objects.get(gid)
            if entry is not None:
                entry.inflight -= 1
                if entry.inflight == 0 and entry.drain_future is not None:
                    drain = entry.drain_future
                    entry.drain_future = None
        if drain is not None:
            drain.try_set_value(None)

    def _run_object_action(self, gid: GID, action_id: int, args: list):
        """Dispatch on a live local object; caller already took an inflight ref."""
        try:
            entry = self.agas.entry(gid)
            if entry is None:
                raise NotFoundError(f"object {gid} vanished")
            if action_id <= SYSTEM_ACTION_MAX:
                handler = self.object_handlers.get(action_id)
                if handler is None:
                    raise NotFoundError(f"unknown system action {action_id:#x}")
                return handler(entry, args, None)
            record = self.actions.lookup(action_id)
            self.actions.check_args(record, args)
            return record.handler(entry.obj, *args)
        finally:
            if action_id not in _NO_INFLIGHT:
                self._release_inflight(gid)

    def _spawn_object_handler_local(self, gid: GID, action_id: int, args: list, future: Future, priority: Priority) -> None:
        def run():
            try:
                value = self._run_object_action(gid, action_id, args)
            except Exception as exc:
                future.try_set_error(exc)
            else:
                future.try_set_value(value)

        if not self._spawn(run, priority):
            self._release_inflight(gid)
            future.try_set_error(RuntimeShutdownError("runtime is shutting down"))

    def _spawn_object_handler_parcel(self, gid: GID, parcel: Parcel) -> None:
        def run():
            try:
                args = decode_values(parcel.payload)
                value = self._run_object_action(gid, parcel.action_id, args)
            except Exception as exc:
                self._reply(parcel, error=exc)
            else:
                self._reply(parcel, value=value)

        if not self._spawn(run):
            self._release_inflight(gid)

    def _run_service_action(self, action_id: int, args: list, parcel: Parcel | None):
        """System table first; user actions may also target a locality's
        service endpoint, in which case the handler gets no object handle."""
        if action_id <= SYSTEM_ACTION_MAX:
            handler = self.service_handlers.get(action_id)
            if handler is None:
                raise NotFoundError(f"unknown system action {action_id:#x}")
            return handler(args, parcel)
        record = self.actions.lookup(action_id)
        self.actions.check_args(record, args)
        return record.handler(None, *args)

    def _spawn_service_handler(self, action_id: int, args: list, parcel: Parcel | None, future: Future, priority: Priority) -> None:
        def run():
            try:
                value = self._run_service_action(action_id, args, parcel)
            except Exception as exc:
                future.try_set_error(exc)
            else:
                future.try_set_value(value)

        if not self._spawn(run, priority):
            future.try_set_error(RuntimeShutdownError("runtime is shutting down"))

    def _spawn_service_handler_parcel(self, parcel: Parcel) -> None:
        def run():
            try:
                args = decode_values(parcel.payload)
                value = self._run_service_action(parcel.action_id, args, parcel)
            except Exception as exc:
                self._reply(parcel, error=exc)
            else:
                self._reply(parcel, value=value)

        self._spawn(run)

    def _spawn_forwarder(self, parcel: Parcel) -> None:
        def run():
            gid = parcel.dest
            try:
                locality = self.resolve_locality(gid, use_cache=False).get()
            except AmtError as exc:
                self._reply(parcel, error=exc)
                return
            if locality == self.locality:
                if self.agas.entry(gid) is not None:
                    # The object landed here while we resolved; route it again.
                    self.deliver(parcel, from_wire=False)
                    return
                # Authority points here but the object is gone (unregister race).
                self._reply(parcel, error=NotFoundError(f"object {gid} not found"))
                return
            parcel.forwarded = True
            self.counters.count_forwarded()
            self.agas.cache_put(gid, locality)
            try:
                self.send_parcel(locality, parcel)
            except AmtError as exc:
                self._reply(parcel, error=exc)
                return
            if parcel.source_locality not in (self.locality, locality):
                self.apply_detached(
                    service_gid(parcel.source_locality), ACT_CACHE_NOTICE, [gid.pack(), locality]
                )

        self._spawn(run)

    def _reply(self, parcel: Parcel, value=None, error: BaseException | None = None) -> None:
        """Route a handler result to the parcel's continuation, if any."""
        if parcel.continuation.is_null():
            if error is not None:
                log.warning("fire-and-forget action %#x failed: %s", parcel.action_id, error)
            return
        if error is None:
            values = [_OK, value]
        else:
            code, message = error_to_wire(error)
            values = [code, message.encode("utf-8")]
        cont = parcel.continuation
        if cont.home_locality == self.locality:
            self.complete_continuation(cont, values)
            return
        reply = self.make_parcel(cont, ACT_CONT_RESULT, values)
        try:
            self.send_parcel(cont.home_locality, reply)
        except AmtError as exc:
            log.warning("could not deliver result to locality %d: %s", cont.home_locality, exc)
