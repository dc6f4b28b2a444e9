"""Performance counters: named metric sources queryable from any locality.

Counter names follow the path convention
/component/locality#L[/worker#W]/metric[/cumulative|/instantaneous].  A
counter is an object in the global address space plus a symbolic name, so a
query from any locality is resolve_name + the reserved sample action at
whatever locality holds it.  Sampling is lazy (query time); monotonic
counters support reset, which rebases subsequent samples to deltas.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .agas import validate_name
from .errors import InvalidArgumentError, NotFoundError, UnsupportedError

KIND_MONOTONIC = "monotonic"
KIND_GAUGE = "gauge"

STATUS_OK = "ok"
STATUS_UNAVAILABLE = "unavailable"

_STATUS_CODE = {STATUS_OK: 0, STATUS_UNAVAILABLE: 1}
_CODE_STATUS = {v: k for k, v in _STATUS_CODE.items()}


@dataclass
class CounterDescriptor:
    name: str
    kind: str
    sampler: object  # () -> int

    def validate(self) -> None:
        validate_name(self.name)
        if self.name.count("/") < 2:
            raise InvalidArgumentError(f"counter name {self.name!r} needs at least /component/metric")
        if self.kind not in (KIND_MONOTONIC, KIND_GAUGE):
            raise InvalidArgumentError(f"unknown counter kind {self.kind!r}")


@dataclass
class CounterValue:
    value: int
    sampled_at: int  # nanoseconds since the sampling locality's boot epoch
    status: str = STATUS_OK

    def to_wire(self) -> list:
        return [int(self.value), int(self.sampled_at), _STATUS_CODE[self.status]]

    @classmethod
    def from_wire(cls, values: list) -> "CounterValue":
        return cls(value=values[0], sampled_at=values[1], status=_CODE_STATUS.get(values[2], STATUS_UNAVAILABLE))


UNAVAILABLE = CounterValue(value=0, sampled_at=0, status=STATUS_UNAVAILABLE)


class CounterObject:
    """The address-space resident behind one registered counter."""

    def __init__(self, desc: CounterDescriptor, epoch_ns: int):
        self.desc = desc
        self._epoch = epoch_ns
        self._baseline = 0

    def sample(self) -> CounterValue:
        raw = int(self.desc.sampler())
        if self.desc.kind == KIND_MONOTONIC:
            raw -= self._baseline
        return CounterValue(value=raw, sampled_at=time.monotonic_ns() - self._epoch)

    def reset(self) -> None:
        if self.desc.kind != KIND_MONOTONIC:
            raise UnsupportedError(f"counter {self.desc.name!r} is a gauge; reset is unsupported")
        self._baseline = int(self.desc.sampler())


def scheduler_counter_descriptors(locality: int, scheduler) -> list[CounterDescriptor]:
    """The built-in per-locality scheduler counters (and per-worker splits)."""
    prefix = f"/scheduler/locality#{locality}"
    descs = [
        CounterDescriptor(f"{prefix}/tasks/executed/cumulative", KIND_MONOTONIC,
                          lambda: scheduler.stats().tasks_executed),
        CounterDescriptor(f"{prefix}/steals/attempted/cumulative", KIND_MONOTONIC,
                          lambda: scheduler.stats().steal_attempts),
        CounterDescriptor(f"{prefix}/steals/succeeded/cumulative", KIND_MONOTONIC,
                          lambda: scheduler.stats().steals_succeeded),
        CounterDescriptor(f"{prefix}/queue/length/instantaneous", KIND_GAUGE,
                          lambda: scheduler.total_queued()),
    ]
    for w in range(scheduler.workers):
        wp = f"{prefix}/worker#{w}"
        descs.extend(
            [
                CounterDescriptor(f"{wp}/tasks/executed/cumulative", KIND_MONOTONIC,
                                  lambda w=w: scheduler.stats().per_worker[w].tasks_executed),
                CounterDescriptor(f"{wp}/steals/attempted/cumulative", KIND_MONOTONIC,
                                  lambda w=w: scheduler.stats().per_worker[w].steal_attempts),
                CounterDescriptor(f"{wp}/steals/succeeded/cumulative", KIND_MONOTONIC,
                                  lambda w=w: scheduler.stats().per_worker[w].steals_succeeded),
                CounterDescriptor(f"{wp}/queue/length/instantaneous", KIND_GAUGE,
                                  lambda w=w: scheduler.queue_length(w)),
            ]
        )
    return descs


def parcel_counter_descriptors(locality: int, port, peer_ids) -> list[CounterDescriptor]:
    prefix = f"/parcel/locality#{locality}"
    c = port.counters
    descs = [
        CounterDescriptor(f"{prefix}/sent/cumulative", KIND_MONOTONIC, lambda: c.sent),
        CounterDescriptor(f"{prefix}/received/cumulative", KIND_MONOTONIC, lambda: c.received),
        CounterDescriptor(f"{prefix}/forwarded/cumulative", KIND_MONOTONIC, lambda: c.forwarded),
        CounterDescriptor(f"{prefix}/bytes-sent/cumulative", KIND_MONOTONIC, lambda: c.bytes_sent),
    ]
    for peer in peer_ids:
        if peer == locality:
            continue
        descs.append(CounterDescriptor(f"{prefix}/sent-to#{peer}/cumulative", KIND_MONOTONIC,
                                       lambda p=peer: c.sent_to.get(p, 0)))
        descs.append(CounterDescriptor(f"{prefix}/received-from#{peer}/cumulative", KIND_MONOTONIC,
                                       lambda p=peer: c.received_from.get(p, 0)))
    return descs


def agas_counter_descriptors(locality: int, agas) -> list[CounterDescriptor]:
    prefix = f"/agas/locality#{locality}"
    return [
        CounterDescriptor(f"{prefix}/objects/live/instantaneous", KIND_GAUGE, lambda: agas.live_count()),
        CounterDescriptor(f"{prefix}/migrations/cumulative", KIND_MONOTONIC, lambda: agas.migrations),
    ]


__all__ = [
    "CounterDescriptor",
    "CounterValue",
    "CounterObject",
    "KIND_MONOTONIC",
    "KIND_GAUGE",
    "STATUS_OK",
    "STATUS_UNAVAILABLE",
    "UNAVAILABLE",
    "NotFoundError",
    "scheduler_counter_descriptors",
    "parcel_counter_descriptors",
    "agas_counter_descriptors",
]
