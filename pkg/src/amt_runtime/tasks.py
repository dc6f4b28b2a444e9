"""Lightweight task objects and their lifecycle.

A task moves pending -> active -> terminated, optionally detouring through
suspended -> pending (requeue) -> active while it waits on a future.  The
work callable is invoked exactly once; the scheduler owns all transitions.
"""

from __future__ import annotations

import itertools
from enum import Enum


class Priority(Enum):
    HIGH = "high"
    NORMAL = "normal"


class TaskState(Enum):
    PENDING = "pending"
    ACTIVE = "active"
    SUSPENDED = "suspended"
    TERMINATED = "terminated"


_task_ids = itertools.count(1)


class Task:
    """One unit of work, owned by exactly one worker at a time."""

    __slots__ = (
        "task_id",
        "priority",
        "state",
        "fn",
        "finish_cb",
        "system",
        "greenlet",
        "owner_worker",
        "first_queue",
        "run_count",
    )

    def __init__(self, fn, priority: Priority = Priority.NORMAL, system: bool = False):
        self.task_id = next(_task_ids)
        self.priority = priority
        self.state = TaskState.PENDING
        self.fn = fn
        self.finish_cb = None  # called with (value, error) once fn returns
        self.system = system
        self.greenlet = None
        self.owner_worker = None
        self.first_queue = None  # queue tag set at first enqueue, for audits
        self.run_count = 0

    def __repr__(self) -> str:
        return f"<Task {self.task_id} {self.priority.value} {self.state.value}>"
