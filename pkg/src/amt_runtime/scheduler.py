"""Worker pool and the three interchangeable scheduling policies.

Policies:
  static          one FIFO queue per worker, no stealing;
  local_priority  per-worker high-priority and normal queues; the owner pops
                  its normal queue newest-first, idle workers steal the
                  oldest task from ring neighbors (high-priority queue
                  checked first on both sides);
  hierarchical    a tree of queues, arity-complete over the workers; new
                  tasks always enter at the root and trickle down toward the
                  leaf of whichever worker runs dry.

All queue structures are mutated under one scheduler lock; task bodies run
outside it.  Each task body runs on its own greenlet so a task blocked on a
future can switch back to the worker's hub greenlet, letting the worker run
other tasks; a resumed task always continues on the worker that started it
(greenlets are thread-bound).
"""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import greenlet

from .errors import InvalidArgumentError, RuntimeShutdownError
from .tasks import Priority, Task, TaskState

log = logging.getLogger("amt.scheduler")

POLICIES = ("static", "local_priority", "hierarchical")

# Idle backoff: spin a bounded number of attempts, then sleep with doubling
# delay capped at 1 ms.
_SPIN_ATTEMPTS = 100
_PARK_MIN_S = 0.000001
_PARK_MAX_S = 0.001


@dataclass
class SchedulerConfig:
    policy: str = "local_priority"
    workers: int = 4
    tree_arity: int = 2
    chunks_per_worker: int = 4  # parallel_for splits into this many chunks per worker

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise InvalidArgumentError(f"unknown policy {self.policy!r}")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")
        if self.tree_arity < 2:
            raise InvalidArgumentError("tree_arity must be >= 2")


@dataclass
class WorkerStats:
    tasks_executed: int = 0
    steal_attempts: int = 0
    steals_succeeded: int = 0
    leaf_fetches: int = 0
    queue_length: int = 0


@dataclass
class StealStats:
    per_worker: list[WorkerStats] = field(default_factory=list)

    @property
    def tasks_executed(self) -> int:
        return sum(w.tasks_executed for w in self.per_worker)

    @property
    def steal_attempts(self) -> int:
        return sum(w.steal_attempts for w in self.per_worker)

    @property
    def steals_succeeded(self) -> int:
        return sum(w.steals_succeeded for w in self.per_worker)


# ---------------------------------------------------------------------------
# Policy queue structures.  All methods are called under the scheduler lock.
# ---------------------------------------------------------------------------


class StaticQueues:
    """One FIFO deque per worker; next_task never looks anywhere else."""

    kind = "static"

    def __init__(self, workers: int):
        self.queues = [deque() for _ in range(workers)]

    def push(self, task: Task, worker: int) -> None:
        if task.first_queue is None:
            task.first_queue = f"worker#{worker}"
        self.queues[worker].append(task)

    def peek(self, worker: int) -> bool:
        return bool(self.queues[worker])

    def pop(self, worker: int, stats: WorkerStats) -> Task | None:
        q = self.queues[worker]
        if q:
            return q.popleft()
        return None

    def drain(self) -> list[Task]:
        tasks = []
        for q in self.queues:
            tasks.extend(q)
            q.clear()
        return tasks

    def worker_length(self, worker: int) -> int:
        return len(self.queues[worker])

    def total(self) -> int:
        return sum(len(q) for q in self.queues)


class LocalPriorityQueues:
    """Per-worker hp/normal deques with ring-order work stealing.

    The owner drains its hp queue from the front, then pops its normal queue
    newest-first; a thief walks victims w+1, w+2, ... in ring order and takes
    the oldest task, checking the victim's hp queue before its normal one.
    """

    kind = "local_priority"

    def __init__(self, workers: int):
        self.workers = workers
        self.normal = [deque() for _ in range(workers)]
        self.hp = [deque() for _ in range(workers)]

    def push(self, task: Task, worker: int) -> None:
        if task.priority is Priority.HIGH:
            if task.first_queue is None:
                task.first_queue = f"hp#{worker}"
            self.hp[worker].append(task)
        else:
            if task.first_queue is None:
                task.first_queue = f"worker#{worker}"
            self.normal[worker].append(task)

    def peek(self, worker: int) -> bool:
        if self.hp[worker] or self.normal[worker]:
            return True
        if self.workers == 1:
            return False
        return any(self.hp) or any(self.normal)

    def pop(self, worker: int, stats: WorkerStats) -> Task | None:
        hp = self.hp[worker]
        if hp:
            return hp.popleft()
        own = self.normal[worker]
        if own:
            return own.pop()
        if self.workers == 1:
            return None
        stats.steal_attempts += 1
        for step in range(1, self.workers):
            victim = (worker + step) % self.workers
            vq = self.hp[victim]
            if vq:
                stats.steals_succeeded += 1
                return vq.popleft()
            vq = self.normal[victim]
            if vq:
                stats.steals_succeeded += 1
                return vq.popleft()
        return None

    def drain(self) -> list[Task]:
        tasks = []
        for q in self.hp:
            tasks.extend(q)
            q.clear()
        for q in self.normal:
            tasks.extend(q)
            q.clear()
        return tasks

    def worker_length(self, worker: int) -> int:
        return len(self.normal[worker]) + len(self.hp[worker])

    def total(self) -> int:
        return sum(len(q) for q in self.normal) + sum(len(q) for q in self.hp)


class HierarchyNode:
    __slots__ = ("queue", "parent", "children")

    def __init__(self, parent=None):
        self.queue = deque()
        self.parent = parent
        self.children: list[HierarchyNode] = []


class HierarchicalQueues:
    """Tree of queues; tasks enter at the root and trickle toward the leaves.

    A fetch from an empty leaf first refills ancestors recursively, then
    moves batches of 1/arity of each queue (at least one task) down one
    level at a time, preserving FIFO order.
    """

    kind = "hierarchical"

    def __init__(self, workers: int, arity: int):
        self.arity = arity
        self.leaves = [HierarchyNode() for _ in range(workers)]
        level = self.leaves
        while len(level) > 1:
            parents = []
            for i in range(0, len(level), arity):
                parent = HierarchyNode()
                for child in level[i : i + arity]:
                    child.parent = parent
                    parent.children.append(child)
                parents.append(parent)
            level = parents
        self.root = level[0] if level else self.leaves[0]

    def node_count(self) -> int:
        count = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            count += 1
            stack.extend(node.children)
        return count

    def push(self, task: Task, worker: int) -> None:
        # Hint is irrelevant: new tasks are always enqueued at the root.
        if task.first_queue is None:
            task.first_queue = "root"
        self.root.queue.append(task)

    def trickle_down(self, node: HierarchyNode, child: HierarchyNode) -> int:
        n = len(node.queue)
        if n == 0:
            return 0
        batch = min(n, max(1, n // self.arity))
        for _ in range(batch):
            child.queue.append(node.queue.popleft())
        return batch

    def peek(self, worker: int) -> bool:
        node = self.leaves[worker]
        while node is not None:
            if node.queue:
                return True
            node = node.parent
        return False

    def _fill(self, node: HierarchyNode) -> bool:
        if node.queue:
            return True
        parent = node.parent
        if parent is None:
            return False
        self._fill(parent)
        return self.trickle_down(parent, node) > 0

    def pop(self, worker: int, stats: WorkerStats) -> Task | None:
        leaf = self.leaves[worker]
        if not leaf.queue:
            if self._fill(leaf):
                stats.leaf_fetches += 1
            else:
                return None
        return leaf.queue.popleft()

    def drain(self) -> list[Task]:
        tasks = []
        stack = [self.root]
        order = []
        while stack:
            node = stack.pop()
            order.append(node)
            stack.extend(node.children)
        for node in order:
            tasks.extend(node.queue)
            node.queue.clear()
        return tasks

    def worker_length(self, worker: int) -> int:
        return len(self.leaves[worker].queue)

    def total(self) -> int:
        total = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            total += len(node.queue)
            stack.extend(node.children)
        return total


def make_queues(policy: str, workers: int, arity: int):
    if policy == "static":
        return StaticQueues(workers)
    if policy == "local_priority":
        return LocalPriorityQueues(workers)
    if policy == "hierarchical":
        return HierarchicalQueues(workers, arity)
    raise InvalidArgumentError(f"unknown policy {policy!r}")


# ---------------------------------------------------------------------------
# Worker pool.
# ---------------------------------------------------------------------------

_ctx = threading.local()  # current (scheduler, worker index, task)


class Scheduler:
    """Drives tasks through the configured policy on a pool of worker threads."""

    def __init__(self, config: SchedulerConfig, name: str = "amt"):
        config.validate()
        self.config = config
        self.workers = config.workers
        self._lock = threading.Lock()
        self._queues = make_queues(config.policy, self.workers, config.tree_arity)
        self._resume = [deque() for _ in range(self.workers)]
        self._stats = [WorkerStats() for _ in range(self.workers)]
        self._threads: list[threading.Thread] = []
        self._hubs: list[greenlet.greenlet | None] = [None] * self.workers
        self._accepting = False
        self._stopping = False
        self._inflight = 0
        self._rr = 0
        self._name = name
        self._started = False

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        if self._started:
            raise RuntimeError("scheduler already started")
        self._started = True
        self._accepting = True
        for w in range(self.workers):
            t = threading.Thread(target=self._worker_loop, args=(w,), name=f"{self._name}-worker-{w}", daemon=True)
            self._threads.append(t)
            t.start()

    def shutdown(self, drain: bool = True, timeout: float | None = None) -> int:
        """Stop the pool.  With drain, run every queued task first; without,
        discard pending tasks and return how many were discarded.  Calling
        shutdown again is a harmless no-op."""
        with self._lock:
            self._accepting = False
        discarded = 0
        if drain:
            deadline = None if timeout is None else time.monotonic() + timeout
            while True:
                with self._lock:
                    if self._inflight == 0:
                        break
                if deadline is not None and time.monotonic() > deadline:
                    raise TimeoutError(f"shutdown drain timed out with {self._inflight} tasks in flight")
                time.sleep(0.0005)
        else:
            with self._lock:
                dropped = self._queues.drain()
                discarded = len(dropped)
                self._inflight -= discarded
                for task in dropped:
                    task.state = TaskState.TERMINATED
        with self._lock:
            self._stopping = True
        for t in self._threads:
            t.join(timeout=5)
        self._threads = []
        return discarded

    # -- submission ---------------------------------------------------------

    def submit(self, task: Task, hint: int | None = None) -> None:
        """Enqueue per the active policy.  Hint names a worker queue for the
        static and local_priority policies; external submissions without a
        hint round-robin across workers."""
        with self._lock:
            if not self._accepting:
                raise RuntimeShutdownError("scheduler is not accepting tasks")
            if hint is not None and not 0 <= hint < self.workers:
                raise InvalidArgumentError(f"hint {hint} out of range")
            target = hint
            if target is None:
                cur = getattr(_ctx, "worker", None)
                if cur is not None and getattr(_ctx, "scheduler", None) is self:
                    target = cur
                else:
                    target = self._rr % self.workers
                    self._rr += 1
            self._inflight += 1
            self._queues.push(task, target)

    # -- worker internals ----------------------------------------------------

    def _next(self, w: int):
        with self._lock:
            if self._resume[w]:
                return ("resume", self._resume[w].popleft())
            if self._stopping:
                return ("stop", None)
            task = self._queues.pop(w, self._stats[w])
            if task is not None:
                return ("run", task)
        return (None, None)

    def _worker_loop(self, w: int) -> None:
        _ctx.scheduler = self
        _ctx.worker = w
        _ctx.task = None
        self._hubs[w] = greenlet.getcurrent()
        idle_spins = 0
        park = _PARK_MIN_S
        while True:
            # Lock-free peek keeps idle spinning off the scheduler lock; a
            # stale read just means one more loop iteration.
            if self._resume[w] or self._stopping or self._queues.peek(w):
                kind, item = self._next(w)
            else:
                kind, item = None, None
            if kind == "stop":
                return
            if kind is None:
                idle_spins += 1
                if idle_spins > _SPIN_ATTEMPTS:
                    time.sleep(park)
                    park = min(park * 2, _PARK_MAX_S)
                continue
            idle_spins = 0
            park = _PARK_MIN_S
            if kind == "run":
                task: Task = item
                task.owner_worker = w
                task.state = TaskState.ACTIVE
                g = greenlet.greenlet(self._task_main)
                task.greenlet = g
                _ctx.task = task
                g.switch(task)
            else:  # resume
                task = item
                task.state = TaskState.ACTIVE
                _ctx.task = task
                task.greenlet.switch()
            _ctx.task = None
            if task.greenlet.dead:
                task.greenlet = None
                task.state = TaskState.TERMINATED
                if not task.system:
                    self._stats[w].tasks_executed += 1
                with self._lock:
                    self._inflight -= 1

    def _task_main(self, task: Task) -> None:
        # Body of every task greenlet; parent is the worker hub.
        task.run_count += 1
        value, error = None, None
        try:
            value = task.fn()
        except Exception as exc:  # noqa: BLE001 - task failure becomes a future error
            error = exc
        cb = task.finish_cb
        if cb is not None:
            try:
                cb(value, error)
            except Exception:
                log.exception("task %s completion callback failed", task.task_id)
        elif error is not None:
            log.error("task %s failed: %r", task.task_id, error)

    # -- suspension ----------------------------------------------------------

    def in_task(self) -> bool:
        return getattr(_ctx, "task", None) is not None and getattr(_ctx, "scheduler", None) is self

    def current_task(self) -> Task | None:
        if getattr(_ctx, "scheduler", None) is self:
            return getattr(_ctx, "task", None)
        return None

    def current_worker(self) -> int | None:
        if getattr(_ctx, "scheduler", None) is self:
            return getattr(_ctx, "worker", None)
        return None

    def current_priority(self) -> Priority:
        task = self.current_task()
        return task.priority if task is not None else Priority.NORMAL

    def wait_on(self, future) -> None:
        """Suspend the current task until the future completes.

        Must be called from inside a task.  The worker returns to its hub and
        keeps executing other tasks; completion requeues this task on its
        owning worker (greenlets are bound to the thread that created them).
        """
        task = self.current_task()
        if task is None:
            raise RuntimeError("wait_on called outside a task")
        hub = self._hubs[task.owner_worker]

        def on_complete(_fut):
            self._resume_task(task)

        task.state = TaskState.SUSPENDED
        future.add_done_callback(on_complete)
        # If the future completed between attach and here, the resume entry
        # is already queued; switching out is still correct because the hub
        # (same OS thread) only runs after this switch and drains the resume
        # queue first.
        hub.switch()

    def _resume_task(self, task: Task) -> None:
        task.state = TaskState.PENDING
        with self._lock:
            self._resume[task.owner_worker].append(task)

    # -- policy switch -------------------------------------------------------

    def set_policy(self, policy: str, tree_arity: int | None = None) -> int:
        """Swap the queue structure at runtime.

        New submissions pause (they briefly block on the scheduler lock),
        queued tasks drain into a staging list, the new structure starts
        empty, and staged tasks are redistributed round-robin (the
        hierarchical root takes everything).  Returns the number of tasks
        moved; switching to the current policy moves none.
        """
        if policy not in POLICIES:
            raise InvalidArgumentError(f"unknown policy {policy!r}")
        arity = tree_arity if tree_arity is not None else self.config.tree_arity
        with self._lock:
            if policy == self._queues.kind and (policy != "hierarchical" or arity == self.config.tree_arity):
                return 0
            staged = self._queues.drain()
            self._queues = make_queues(policy, self.workers, arity)
            self.config.policy = policy
            self.config.tree_arity = arity
            for i, task in enumerate(staged):
                self._queues.push(task, i % self.workers)
            return len(staged)

    @property
    def policy(self) -> str:
        return self._queues.kind

    # -- observation ---------------------------------------------------------

    def stats(self) -> StealStats:
        snapshot = StealStats()
        with self._lock:
            for w, s in enumerate(self._stats):
                snapshot.per_worker.append(
                    WorkerStats(
                        tasks_executed=s.tasks_executed,
                        steal_attempts=s.steal_attempts,
                        steals_succeeded=s.steals_succeeded,
                        leaf_fetches=s.leaf_fetches,
                        queue_length=self._queues.worker_length(w),
                    )
                )
        return snapshot

    def queue_length(self, worker: int) -> int:
        with self._lock:
            return self._queues.worker_length(worker)

    def total_queued(self) -> int:
        with self._lock:
            return self._queues.total()

    def inflight(self) -> int:
        with self._lock:
            return self._inflight


def current_scheduler_context() -> tuple["Scheduler | None", int | None, Task | None]:
    return (
        getattr(_ctx, "scheduler", None),
        getattr(_ctx, "worker", None),
        getattr(_ctx, "task", None),
    )
