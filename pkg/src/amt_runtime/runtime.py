"""One locality of the runtime: scheduler, address space, parcels, counters.

A Runtime boots its worker pool, opens the transport fabric (when the
locality table has more than one entry), rendezvouses with its peers, and
registers the built-in performance counters.  All task, future, channel,
object and counter APIs hang off this class; module-level helpers in
`futures` compose on top of it.
"""

from __future__ import annotations

import logging
import math
import threading
import time

from .actions import ActionRegistry
from .agas import STATUS_MIGRATING, AgasState, validate_name
from .channels import Channel
from .config import RuntimeConfig
from .counters import (
    UNAVAILABLE,
    CounterDescriptor,
    CounterObject,
    CounterValue,
    agas_counter_descriptors,
    parcel_counter_descriptors,
    scheduler_counter_descriptors,
)
from .errors import (
    AmtError,
    BootError,
    BusyError,
    InvalidArgumentError,
    NotFoundError,
    RuntimeShutdownError,
    UnsupportedError,
    WrongLocalityError,
)
from .futures import Future, make_error_future, make_ready_future, when_all
from .futures import dataflow as _dataflow
from .gid import GID, service_gid
from .objects import CounterCell, TypeRegistry, check_migratable
from .parcelport import (
    ACT_AUTH_REMOVE,
    ACT_AUTH_UPDATE,
    ACT_BARRIER_ARRIVE,
    ACT_BARRIER_RELEASE,
    ACT_CACHE_NOTICE,
    ACT_CHANNEL_RECV,
    ACT_CHANNEL_SEND,
    ACT_COUNTER_INDEX_ADD,
    ACT_COUNTER_LIST,
    ACT_COUNTER_RESET,
    ACT_COUNTER_SAMPLE,
    ACT_MIGRATE_RECV,
    ACT_MIGRATE_START,
    ACT_NAME_REGISTER,
    ACT_NAME_RESOLVE,
    ACT_RESOLVE,
    ACT_SHUTDOWN,
    ParcelPort,
)
from .scheduler import Scheduler
from .tasks import Priority, Task
from .transport import Transport

log = logging.getLogger("amt.runtime")

_LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING, "error": logging.ERROR}


class Runtime:
    """One locality; boot() before use, shutdown() when done."""

    def __init__(self, config: RuntimeConfig | None = None, listen_sock=None, install=()):
        self.config = config or RuntimeConfig()
        self.config.validate()
        self.locality_id = self.config.this_locality
        self._epoch_ns = time.monotonic_ns()
        self.agas = AgasState(self.locality_id)
        self.actions = ActionRegistry()
        self.types = TypeRegistry()
        self.scheduler = Scheduler(self.config.scheduler, name=f"amt{self.locality_id}")
        self.port = ParcelPort(self)
        self.transport: Transport | None = None
        self._listen_sock = listen_sock
        self._install_hooks = list(install)
        self._booted = False
        self._stopped = False
        self._barrier_lock = threading.Lock()
        self._barrier_futures: dict[int, Future] = {}
        self._barrier_counts: dict[int, int] = {}
        self._shutdown_requested = Future(None)
        self.types.register(CounterCell)

    # ------------------------------------------------------------------ boot

    def boot(self) -> "Runtime":
        if self._booted:
            raise BootError("runtime already booted")
        logging.getLogger("amt").setLevel(_LOG_LEVELS[self.config.log_level])
        self.scheduler.start()
        self._install_system_handlers()
        for hook in self._install_hooks:
            hook(self)
        if self.config.n_localities > 1:
            self.transport = Transport(
                self.locality_id, self.config.table(), self.port.on_frame, self.port.on_peer_down
            )
            self.port.attach_transport(self.transport)
            try:
                self.transport.listen(self._listen_sock)
                self.transport.connect_lower(self.config.boot_timeout)
                self._barrier(phase=0)
                self._register_builtin_counters()
                self._barrier(phase=1)
            except AmtError:
                self.kill()
                raise
            except TimeoutError as exc:
                self.kill()
                raise BootError(f"locality {self.locality_id}: boot timed out: {exc}") from exc
        else:
            self._register_builtin_counters()
        self._booted = True
        log.info("locality %d up (%d workers, %s)", self.locality_id, self.scheduler.workers, self.scheduler.policy)
        return self

    def _barrier(self, phase: int) -> None:
        fut = self._barrier_future(phase)
        self.port.apply_detached(service_gid(0), ACT_BARRIER_ARRIVE, [self.locality_id, phase])
        try:
            fut.get(timeout=self.config.boot_timeout)
        except TimeoutError:
            raise BootError(
                f"locality {self.locality_id}: startup barrier (phase {phase}) timed out after "
                f"{self.config.boot_timeout}s"
            ) from None

    def _barrier_future(self, phase: int) -> Future:
        with self._barrier_lock:
            fut = self._barrier_futures.get(phase)
            if fut is None:
                fut = Future(None)
                self._barrier_futures[phase] = fut
            return fut

    # -------------------------------------------------------------- shutdown

    def shutdown(self, broadcast: bool = False, drain: bool = True, timeout: float | None = 60.0) -> None:
        """Stop this locality; with broadcast, tell every peer to stop too."""
        if self._stopped:
            return
        if broadcast and self.transport is not None:
            for loc in self.config.localities:
                if loc.id != self.locality_id:
                    self.port.apply_detached(service_gid(loc.id), ACT_SHUTDOWN, [])
        self.scheduler.shutdown(drain=drain, timeout=timeout)
        if self.transport is not None:
            self.transport.close()
        self._stopped = True
        self._shutdown_requested.try_set_value(None)
        log.info("locality %d down", self.locality_id)

    def kill(self) -> None:
        """Abrupt stop: sockets die without goodbye, pending tasks are dropped."""
        if self.transport is not None:
            self.transport.kill()
        try:
            self.scheduler.shutdown(drain=False, timeout=5.0)
        except TimeoutError:
            pass
        self._stopped = True
        self._shutdown_requested.try_set_value(None)

    def wait_for_shutdown(self, timeout: float | None = None) -> None:
        """Park until some locality broadcasts shutdown (or shutdown() runs)."""
        self._shutdown_requested.get(timeout=timeout)

    @property
    def stopped(self) -> bool:
        return self._stopped

    # ------------------------------------------------- executor protocol

    def in_task(self) -> bool:
        return self.scheduler.in_task()

    def wait_on(self, future: Future) -> None:
        self.scheduler.wait_on(future)

    def current_priority(self) -> Priority:
        return self.scheduler.current_priority()

    def current_worker(self) -> int | None:
        return self.scheduler.current_worker()

    def schedule(self, fn, result: Future, priority: Priority) -> None:
        task = Task(fn, priority)

        def finish(value, error):
            if error is not None:
                result.try_set_error(error)
            else:
                result.try_set_value(value)

        task.finish_cb = finish
        try:
            self.scheduler.submit(task)
        except RuntimeShutdownError as exc:
            result.try_set_error(exc)

    # ------------------------------------------------------------- tasking

    def spawn(self, work, priority: Priority = Priority.NORMAL, hint: int | None = None) -> Future:
        """Run work() as a fresh task; the future carries its value or error.

        Never blocks.  After shutdown begins the returned future holds a
        RuntimeShutdownError instead.
        """
        fut = Future(self)

        def finish(value, error):
            if error is not None:
                fut.set_error(error)
            else:
                fut.set_value(value)

        task = Task(work, priority)
        task.finish_cb = finish
        try:
            self.scheduler.submit(task, hint)
        except (RuntimeShutdownError, InvalidArgumentError) as exc:
            fut.set_error(exc)
        return fut

    def spawn_system_task(self, fn, priority: Priority = Priority.NORMAL) -> None:
        """Internal: run fn as a task that is invisible to user task counters."""
        task = Task(fn, priority, system=True)
        self.scheduler.submit(task)

    def make_ready_future(self, value) -> Future:
        return make_ready_future(value, self)

    def make_error_future(self, error: BaseException) -> Future:
        return make_error_future(error, self)

    def then(self, future: Future, cont, priority: Priority | None = None) -> Future:
        return future.then(cont, priority=priority)

    def when_all(self, futures) -> Future:
        return when_all(futures, self)

    def dataflow(self, body, dependencies, priority: Priority | None = None) -> Future:
        return _dataflow(body, dependencies, executor=self, priority=priority)

    def parallel_for(self, lo: int, hi: int, body, priority: Priority = Priority.NORMAL) -> Future:
        """Invoke body(i) once per i in [lo, hi), split into chunks of
        ceil(n / (chunks_per_worker * workers)) spawned as separate tasks."""
        if lo > hi:
            return make_error_future(InvalidArgumentError(f"bad range [{lo}, {hi})"), self)
        n = hi - lo
        if n == 0:
            return make_ready_future(None, self)
        pieces = self.config.scheduler.chunks_per_worker * self.scheduler.workers
        chunk = math.ceil(n / pieces)
        futs = []
        for start in range(lo, hi, chunk):
            end = min(start + chunk, hi)

            def run(start=start, end=end):
                for i in range(start, end):
                    body(i)

            futs.append(self.spawn(run, priority))
        result = Future(self)

        def on_done(fut: Future):
            err = fut.error()
            if err is not None:
                result.set_error(err)
            else:
                result.set_value(None)

        when_all(futs, self).add_done_callback(on_done)
        return result

    # ------------------------------------------------------------- channels

    def make_channel(self) -> Channel:
        return Channel(self)

    def register_channel(self, name: str, channel: Channel | None = None) -> Channel:
        """Create (or take) a channel, give it a GID and a symbolic name."""
        ch = channel or self.make_channel()
        gid = self.register_object(ch)
        ch.gid = gid
        self.register_name(name, gid)
        return ch

    def _channel_target(self, target):
        """Normalize a Channel / GID / name into (local channel | None, gid | None)."""
        if isinstance(target, Channel):
            return target, target.gid
        if isinstance(target, str):
            target = self.resolve_name(target)
        if isinstance(target, GID):
            entry = self.agas.entry(target)
            if entry is not None and isinstance(entry.obj, Channel):
                return entry.obj, target
            return None, target
        raise InvalidArgumentError(f"cannot address a channel by {type(target).__name__}")

    def channel_send(self, target, value) -> Future:
        """Send into a channel, local or remote; the future acknowledges
        arrival (sends from one task stay FIFO without waiting on it)."""
        ch, gid = self._channel_target(target)
        if ch is not None:
            try:
                ch.send(value)
            except AmtError as exc:
                return self.make_error_future(exc)
            return self.make_ready_future(None)
        return self.port.apply_system(gid, ACT_CHANNEL_SEND, [value])

    def channel_recv(self, target) -> Future:
        ch, gid = self._channel_target(target)
        if ch is not None:
            return ch.recv()
        return self.port.apply_system(gid, ACT_CHANNEL_RECV, [])

    # ---------------------------------------------------------------- agas

    def register_object(self, obj) -> GID:
        if self._stopped:
            raise RuntimeShutdownError("registration during shutdown")
        return self.agas.insert_new(obj)

    def register_type(self, cls) -> None:
        self.types.register(cls)

    def resolve(self, gid: GID) -> tuple[int, object | None]:
        """(current locality, local handle or None)."""
        if gid is None or gid.is_null():
            raise InvalidArgumentError("null GID")
        entry = self.agas.entry(gid)
        if entry is not None:
            return self.locality_id, entry.obj
        return self.port.resolve_locality(gid).get(), None

    def unregister(self, gid: GID) -> None:
        with self.agas.lock:
            entry = self.agas.objects.get(gid)
            if entry is None:
                raise WrongLocalityError(f"object {gid} does not live on locality {self.locality_id}")
            if entry.status == STATUS_MIGRATING:
                raise BusyError(f"object {gid} is migrating")
            del self.agas.objects[gid]
            self.agas.cache.pop(gid, None)
        if gid.home_locality == self.locality_id:
            self.agas.authority_remove(gid)
        else:
            self.port.apply_system(service_gid(gid.home_locality), ACT_AUTH_REMOVE, [gid.pack()]).get()

    def register_name(self, name: str, gid: GID) -> None:
        validate_name(name)
        self.port.apply_system(service_gid(0), ACT_NAME_REGISTER, [name.encode("ascii"), gid.pack()]).get()

    def resolve_name(self, name: str) -> GID:
        raw = self.port.apply_system(service_gid(0), ACT_NAME_RESOLVE, [name.encode("ascii")]).get()
        return GID.unpack(raw)

    def migrate(self, gid: GID, dest: int) -> Future:
        """Move an object to another locality; the future completes once the
        transfer is durable and queued work has been replayed."""
        if gid is None or gid.is_null():
            return self.make_error_future(InvalidArgumentError("null GID"))
        if dest not in {loc.id for loc in self.config.localities}:
            return self.make_error_future(InvalidArgumentError(f"unknown destination locality {dest}"))
        return self.port.apply_system(gid, ACT_MIGRATE_START, [dest])

    # -------------------------------------------------------------- actions

    def register_action(self, name: str, signature, handler) -> int:
        return self.actions.register(name, signature, handler)

    def apply(self, gid: GID, action, args=(), priority: Priority = Priority.NORMAL) -> Future:
        return self.port.apply(gid, action, args, priority)

    # ------------------------------------------------------------- counters

    def register_counter(self, desc: CounterDescriptor) -> GID:
        desc.validate()
        obj = CounterObject(desc, self._epoch_ns)
        gid = self.register_object(obj)
        try:
            self.register_name(desc.name, gid)
            self.port.apply_system(service_gid(0), ACT_COUNTER_INDEX_ADD, [desc.name.encode("ascii")]).get()
        except AmtError:
            with self.agas.lock:
                self.agas.objects.pop(gid, None)
                self.agas.authority.pop(gid, None)
            raise
        return gid

    def query_counter(self, name: str | GID) -> Future:
        """Sample a counter anywhere in the system; unknown names yield a
        CounterValue with status unavailable rather than an error.  Passing
        an already-resolved GID skips the name service entirely."""
        result = Future(self)

        def on_sampled_direct(fut: Future):
            err = fut.error()
            if isinstance(err, NotFoundError):
                result.try_set_value(UNAVAILABLE)
            elif err is not None:
                result.try_set_error(err)
            else:
                result.try_set_value(CounterValue.from_wire(fut._payload))

        if isinstance(name, GID):
            self.port.apply_system(name, ACT_COUNTER_SAMPLE, []).add_done_callback(on_sampled_direct)
            return result
        lookup = self.port.apply_system(service_gid(0), ACT_NAME_RESOLVE, [name.encode("ascii")])

        def on_sampled(fut: Future):
            err = fut.error()
            if isinstance(err, NotFoundError):
                result.try_set_value(UNAVAILABLE)
            elif err is not None:
                result.try_set_error(err)
            else:
                result.try_set_value(CounterValue.from_wire(fut._payload))

        def on_resolved(fut: Future):
            err = fut.error()
            if isinstance(err, NotFoundError):
                result.try_set_value(UNAVAILABLE)
                return
            if err is not None:
                result.try_set_error(err)
                return
            gid = GID.unpack(fut._payload)
            self.port.apply_system(gid, ACT_COUNTER_SAMPLE, []).add_done_callback(on_sampled)

        lookup.add_done_callback(on_resolved)
        return result

    def query_counter_value(self, name: str | GID) -> CounterValue:
        return self.query_counter(name).get()

    def list_counters(self, prefix: str = "/") -> list[str]:
        raw = self.port.apply_system(service_gid(0), ACT_COUNTER_LIST, [prefix.encode("ascii")]).get()
        return [item.decode("ascii") for item in raw]

    def reset_counter(self, name: str) -> None:
        gid = self.resolve_name(name)
        self.port.apply_system(gid, ACT_COUNTER_RESET, []).get()

    def _register_builtin_counters(self) -> None:
        descs = scheduler_counter_descriptors(self.locality_id, self.scheduler)
        descs += parcel_counter_descriptors(
            self.locality_id, self.port, [loc.id for loc in self.config.localities]
        )
        descs += agas_counter_descriptors(self.locality_id, self.agas)
        pending = []
        for desc in descs:
            desc.validate()
            gid = self.register_object(CounterObject(desc, self._epoch_ns))
            pending.append(
                self.port.apply_system(
                    service_gid(0), ACT_NAME_REGISTER, [desc.name.encode("ascii"), gid.pack()]
                )
            )
            pending.append(
                self.port.apply_system(service_gid(0), ACT_COUNTER_INDEX_ADD, [desc.name.encode("ascii")])
            )
        when_all(pending, self).get(timeout=self.config.boot_timeout)

    # ------------------------------------------------------------ scheduler

    def set_policy(self, policy: str, tree_arity: int | None = None) -> int:
        return self.scheduler.set_policy(policy, tree_arity)

    def scheduler_stats(self):
        return self.scheduler.stats()

    # ------------------------------------------------------- system handlers

    def _install_system_handlers(self) -> None:
        port = self.port
        port.service_handlers.update(
            {
                ACT_RESOLVE: self._h_resolve,
                ACT_NAME_REGISTER: self._h_name_register,
                ACT_NAME_RESOLVE: self._h_name_resolve,
                ACT_AUTH_UPDATE: self._h_auth_update,
                ACT_AUTH_REMOVE: self._h_auth_remove,
                ACT_MIGRATE_RECV: self._h_migrate_recv,
                ACT_CACHE_NOTICE: self._h_cache_notice,
                ACT_BARRIER_ARRIVE: self._h_barrier_arrive,
                ACT_BARRIER_RELEASE: self._h_barrier_release,
                ACT_SHUTDOWN: self._h_shutdown,
                ACT_COUNTER_INDEX_ADD: self._h_counter_index_add,
                ACT_COUNTER_LIST: self._h_counter_list,
            }
        )
        port.object_handlers.update(
            {
                ACT_MIGRATE_START: self._h_migrate_start,
                ACT_CHANNEL_SEND: self._h_channel_send,
                ACT_CHANNEL_RECV: self._h_channel_recv,
                ACT_COUNTER_SAMPLE: self._h_counter_sample,
                ACT_COUNTER_RESET: self._h_counter_reset,
            }
        )

    # service-addressed handlers: fn(args, parcel) -> value

    def _h_resolve(self, args, parcel):
        gid = GID.unpack(args[0])
        return self.agas.authority_get(gid)

    def _h_name_register(self, args, parcel):
        self.agas.name_register(args[0].decode("ascii"), GID.unpack(args[1]))
        return None

    def _h_name_resolve(self, args, parcel):
        return self.agas.name_resolve(args[0].decode("ascii")).pack()

    def _h_auth_update(self, args, parcel):
        self.agas.authority_set(GID.unpack(args[0]), args[1])
        return None

    def _h_auth_remove(self, args, parcel):
        self.agas.authority_remove(GID.unpack(args[0]))
        return None

    def _h_migrate_recv(self, args, parcel):
        gid = GID.unpack(args[0])
        type_name = args[1].decode("utf-8")
        obj = self.types.restore(type_name, args[2])
        self.agas.insert_migrated(gid, obj)
        # Publish the new location before the source replays queued work.
        if gid.home_locality == self.locality_id:
            self.agas.authority_set(gid, self.locality_id)
        else:
            self.port.apply_system(
                service_gid(gid.home_locality), ACT_AUTH_UPDATE, [gid.pack(), self.locality_id]
            ).get()
        return None

    def _h_cache_notice(self, args, parcel):
        self.agas.cache_put(GID.unpack(args[0]), args[1])
        return None

    def _h_barrier_arrive(self, args, parcel):
        locality, phase = args[0], args[1]
        release = False
        with self._barrier_lock:
            self._barrier_counts[phase] = self._barrier_counts.get(phase, 0) + 1
            if self._barrier_counts[phase] == self.config.n_localities:
                release = True
        if release:
            for loc in self.config.localities:
                if loc.id != self.locality_id:
                    self.port.apply_detached(service_gid(loc.id), ACT_BARRIER_RELEASE, [phase])
            self._barrier_future(phase).try_set_value(None)
        return None

    def _h_barrier_release(self, args, parcel):
        self._barrier_future(args[0]).try_set_value(None)
        return None

    def _h_shutdown(self, args, parcel):
        self._shutdown_requested.try_set_value(None)
        return None

    def _h_counter_index_add(self, args, parcel):
        self.agas.counter_index_add(args[0].decode("ascii"))
        return None

    def _h_counter_list(self, args, parcel):
        prefix = args[0].decode("ascii")
        return [name.encode("ascii") for name in self.agas.counter_index_list(prefix)]

    # object-addressed handlers: fn(entry, args, parcel) -> value

    def _h_migrate_start(self, entry, args, parcel):
        dest = args[0]
        gid = entry.gid
        if dest == self.locality_id:
            return None  # already here: no-op success
        type_name = check_migratable(entry.obj)
        with self.agas.lock:
            if entry.status == STATUS_MIGRATING:
                raise BusyError(f"object {gid} is already migrating")
            entry.status = STATUS_MIGRATING
            drain = None
            if entry.inflight > 0:
                drain = Future(self)
                entry.drain_future = drain
        if drain is not None:
            drain.get()  # wait for in-flight handlers bound to the old home
        state = entry.obj.snapshot()
        self.port.apply_system(
            service_gid(dest), ACT_MIGRATE_RECV, [gid.pack(), type_name.encode("utf-8"), state]
        ).get()
        with self.agas.lock:
            queued, entry.queued = entry.queued, []
            self.agas.objects.pop(gid, None)
            self.agas.migrations += 1
        self.agas.cache_put(gid, dest)
        for p in queued:
            p.forwarded = True
            self.port.counters.count_forwarded()
            try:
                self.port.send_parcel(dest, p)
            except AmtError as exc:
                self.port._reply(p, error=exc)
        return None

    def _h_channel_send(self, entry, args, parcel):
        if not isinstance(entry.obj, Channel):
            raise UnsupportedError(f"object {entry.gid} is not a channel")
        entry.obj.send(args[0])
        return None

    def _h_channel_recv(self, entry, args, parcel):
        if not isinstance(entry.obj, Channel):
            raise UnsupportedError(f"object {entry.gid} is not a channel")
        return entry.obj.recv().get()

    def _h_counter_sample(self, entry, args, parcel):
        if not isinstance(entry.obj, CounterObject):
            raise UnsupportedError(f"object {entry.gid} is not a counter")
        return entry.obj.sample().to_wire()

    def _h_counter_reset(self, entry, args, parcel):
        if not isinstance(entry.obj, CounterObject):
            raise UnsupportedError(f"object {entry.gid} is not a counter")
        entry.obj.reset()
        return None
