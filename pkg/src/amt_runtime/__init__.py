"""Desk-scale asynchronous many-task runtime.

Lightweight tasks with futures, channels and dataflow on a work-stealing
scheduler (three interchangeable policies), a global address space with
transparent object migration, a one-sided active-message layer with a
bit-exact wire format, and symbolically named performance counters
queryable from any locality.
"""

from .channels import Channel
from .config import LocalityAddr, RuntimeConfig, load_config
from .counters import CounterDescriptor, CounterValue, KIND_GAUGE, KIND_MONOTONIC
from .errors import (
    AlreadyExistsError,
    AmtError,
    BootError,
    BusyError,
    ChannelClosedError,
    DecodeError,
    FutureAlreadySetError,
    InvalidArgumentError,
    NotFoundError,
    RemoteError,
    RuntimeShutdownError,
    SignatureMismatchError,
    TransportError,
    UnknownActionError,
    UnsupportedError,
    WrongLocalityError,
)
from .futures import Future, dataflow, make_error_future, make_ready_future, when_all
from .gid import GID, NULL_GID, service_gid
from .objects import CounterCell, Migratable
from .runtime import Runtime
from .scheduler import POLICIES, SchedulerConfig, StealStats
from .tasks import Priority, Task, TaskState
from .wire import Parcel, decode_parcel, decode_values, encode_value, encode_values, fnv1a_64

__version__ = "0.1.0"

__all__ = [
    "AlreadyExistsError",
    "AmtError",
    "BootError",
    "BusyError",
    "Channel",
    "ChannelClosedError",
    "CounterCell",
    "CounterDescriptor",
    "CounterValue",
    "DecodeError",
    "Future",
    "FutureAlreadySetError",
    "GID",
    "InvalidArgumentError",
    "KIND_GAUGE",
    "KIND_MONOTONIC",
    "LocalityAddr",
    "Migratable",
    "NotFoundError",
    "NULL_GID",
    "Parcel",
    "POLICIES",
    "Priority",
    "RemoteError",
    "Runtime",
    "RuntimeConfig",
    "RuntimeShutdownError",
    "SchedulerConfig",
    "SignatureMismatchError",
    "StealStats",
    "Task",
    "TaskState",
    "TransportError",
    "UnknownActionError",
    "UnsupportedError",
    "WrongLocalityError",
    "dataflow",
    "decode_parcel",
    "decode_values",
    "encode_value",
    "encode_values",
    "fnv1a_64",
    "load_config",
    "make_error_future",
    "make_ready_future",
    "service_gid",
    "when_all",
]
