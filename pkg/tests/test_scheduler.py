"""Scheduling policies: queue disciplines, stealing, hierarchy, switching."""

import threading
import time

import pytest

from amt_runtime import InvalidArgumentError, Priority, RuntimeShutdownError
from amt_runtime.futures import when_all
from amt_runtime.scheduler import (
    HierarchicalQueues,
    LocalPriorityQueues,
    Scheduler,
    SchedulerConfig,
    StaticQueues,
    WorkerStats,
)
from amt_runtime.tasks import Task

from conftest import make_runtime


def mk_tasks(n, priority=Priority.NORMAL):
    return [Task(lambda: None, priority) for _ in range(n)]


class TestConfig:
    def test_rejects_zero_workers(self):
        with pytest.raises(InvalidArgumentError):
            SchedulerConfig(workers=0).validate()

    def test_rejects_unary_tree(self):
        with pytest.raises(InvalidArgumentError):
            SchedulerConfig(policy="hierarchical", tree_arity=1).validate()

    def test_rejects_unknown_policy(self):
        with pytest.raises(InvalidArgumentError):
            SchedulerConfig(policy="mystery").validate()


class TestStaticQueues:
    def test_hint_places_on_exactly_one_queue(self):
        q = StaticQueues(4)
        t = mk_tasks(1)[0]
        q.push(t, 2)
        assert [len(qq) for qq in q.queues] == [0, 0, 1, 0]
        assert t.first_queue == "worker#2"

    def test_fifo_per_worker(self):
        q = StaticQueues(2)
        a, b = mk_tasks(2)
        q.push(a, 0)
        q.push(b, 0)
        stats = WorkerStats()
        assert q.pop(0, stats) is a
        assert q.pop(0, stats) is b

    def test_never_steals(self):
        q = StaticQueues(2)
        q.push(mk_tasks(1)[0], 1)
        stats = WorkerStats()
        assert q.pop(0, stats) is None
        assert stats.steal_attempts == 0


class TestLocalPriorityQueues:
    def test_high_priority_goes_to_hp_queue(self):
        q = LocalPriorityQueues(2)
        t = mk_tasks(1, Priority.HIGH)[0]
        q.push(t, 1)
        assert len(q.hp[1]) == 1 and len(q.normal[1]) == 0
        assert t.first_queue == "hp#1"

    def test_owner_pops_hp_before_normal(self):
        q = LocalPriorityQueues(1)
        n, h = Task(lambda: None), Task(lambda: None, Priority.HIGH)
        q.push(n, 0)
        q.push(h, 0)
        stats = WorkerStats()
        assert q.pop(0, stats) is h
        assert q.pop(0, stats) is n

    def test_owner_pops_normal_newest_first(self):
        q = LocalPriorityQueues(1)
        old, new = mk_tasks(2)
        q.push(old, 0)
        q.push(new, 0)
        stats = WorkerStats()
        assert q.pop(0, stats) is new
        assert q.pop(0, stats) is old

    def test_thief_takes_oldest_from_ring_neighbor(self):
        q = LocalPriorityQueues(4)
        old, new = mk_tasks(2)
        q.push(old, 1)
        q.push(new, 1)
        stats = WorkerStats()
        got = q.pop(0, stats)
        assert got is old  # thieves take the oldest
        assert stats.steal_attempts == 1
        assert stats.steals_succeeded == 1

    def test_victim_order_is_ring_ascending(self):
        q = LocalPriorityQueues(4)
        t3 = mk_tasks(1)[0]
        q.push(t3, 3)
        t2 = mk_tasks(1)[0]
        q.push(t2, 2)
        stats = WorkerStats()
        # Worker 1 probes 2 then 3.
        assert q.pop(1, stats) is t2
        assert q.pop(1, stats) is t3
        # Worker 0 would wrap around: 1, 2, 3.
        q.push(t2, 2)
        assert q.pop(0, stats) is t2

    def test_thief_checks_victim_hp_first(self):
        q = LocalPriorityQueues(2)
        n, h = Task(lambda: None), Task(lambda: None, Priority.HIGH)
        q.push(n, 1)
        q.push(h, 1)
        stats = WorkerStats()
        assert q.pop(0, stats) is h

    def test_single_worker_cannot_steal(self):
        q = LocalPriorityQueues(1)
        stats = WorkerStats()
        assert q.pop(0, stats) is None
        assert stats.steal_attempts == 0


class TestHierarchicalQueues:
    def test_binary_tree_over_4_workers_has_7_nodes(self):
        q = HierarchicalQueues(4, 2)
        assert q.node_count() == 7
        assert len(q.leaves) == 4

    def test_tree_shapes(self):
        assert HierarchicalQueues(1, 2).node_count() == 1
        assert HierarchicalQueues(2, 2).node_count() == 3
        assert HierarchicalQueues(8, 2).node_count() == 15
        assert HierarchicalQueues(3, 2).node_count() == 6
        assert HierarchicalQueues(9, 3).node_count() == 13

    def test_push_always_lands_at_root(self):
        q = HierarchicalQueues(4, 2)
        t = mk_tasks(1)[0]
        q.push(t, 3)  # hint must be ignored
        assert len(q.root.queue) == 1
        assert t.first_queue == "root"

    def test_trickle_moves_one_arity_share(self):
        q = HierarchicalQueues(2, 2)
        for t in mk_tasks(8):
            q.push(t, 0)
        child = q.root.children[0]
        assert q.trickle_down(q.root, child) == 4
        assert len(child.queue) == 4
        assert len(q.root.queue) == 4

    def test_trickle_moves_at_least_one(self):
        q = HierarchicalQueues(2, 2)
        q.push(mk_tasks(1)[0], 0)
        assert q.trickle_down(q.root, q.root.children[0]) == 1

    def test_trickle_from_empty_moves_none(self):
        q = HierarchicalQueues(2, 2)
        assert q.trickle_down(q.root, q.root.children[0]) == 0
        stats = WorkerStats()
        assert q.pop(0, stats) is None

    def test_trickle_preserves_fifo(self):
        q = HierarchicalQueues(4, 2)
        tasks = mk_tasks(8)
        for t in tasks:
            q.push(t, 0)
        stats = WorkerStats()
        got = [q.pop(0, stats) for _ in range(4)]
        assert got == tasks[:4]

    def test_fetch_counts_leaf_fetches(self):
        q = HierarchicalQueues(2, 2)
        for t in mk_tasks(4):
            q.push(t, 0)
        stats = WorkerStats()
        q.pop(0, stats)
        assert stats.leaf_fetches == 1


def run_n_tasks(rt, n, **spawn_kwargs):
    lock = threading.Lock()
    hits = [0] * n

    def body(i):
        with lock:
            hits[i] += 1

    futs = [rt.spawn(lambda i=i: body(i), **spawn_kwargs) for i in range(n)]
    when_all(futs, rt).get()
    return hits


class TestLiveScheduler:
    @pytest.mark.parametrize("policy", ["static", "local_priority", "hierarchical"])
    def test_all_tasks_execute_exactly_once(self, policy):
        rt = make_runtime(workers=4, policy=policy)
        try:
            hits = run_n_tasks(rt, 2000)
            assert all(h == 1 for h in hits)
            assert rt.scheduler_stats().tasks_executed == 2000
        finally:
            rt.shutdown(timeout=30)

    def test_static_isolation(self):
        rt = make_runtime(workers=4, policy="static")
        try:
            ran_on = {}
            lock = threading.Lock()

            def body(i, hint):
                with lock:
                    ran_on[i] = (rt.current_worker(), hint)

            futs = [rt.spawn(lambda i=i, h=i % 4: body(i, h), hint=i % 4) for i in range(200)]
            when_all(futs, rt).get()
            for worker, hint in ran_on.values():
                assert worker == hint
        finally:
            rt.shutdown(timeout=30)

    def test_static_steals_zero(self):
        rt = make_runtime(workers=4, policy="static")
        try:
            futs = [rt.spawn(lambda: time.sleep(0.001), hint=0) for _ in range(64)]
            when_all(futs, rt).get()
            stats = rt.scheduler_stats()
            assert stats.steals_succeeded == 0
            assert stats.steal_attempts == 0
        finally:
            rt.shutdown(timeout=30)

    def test_steal_progress(self):
        # All work on worker 0, enough of it, each task >= 1 ms busy.
        rt = make_runtime(workers=4)
        try:
            futs = [rt.spawn(lambda: time.sleep(0.001), hint=0) for _ in range(2 * 4 * 4)]
            when_all(futs, rt).get()
            assert rt.scheduler_stats().steals_succeeded >= 1
        finally:
            rt.shutdown(timeout=30)

    def test_hierarchical_every_first_queue_is_root(self):
        rt = make_runtime(workers=4, policy="hierarchical")
        try:
            tasks = []
            lock = threading.Lock()

            def record():
                with lock:
                    tasks.append(rt.scheduler.current_task())

            futs = [rt.spawn(record, hint=i % 4) for i in range(100)]
            when_all(futs, rt).get()
            assert len(tasks) == 100
            assert all(t.first_queue == "root" for t in tasks)
        finally:
            rt.shutdown(timeout=30)

    def test_hierarchical_leaf_fetches_all_workers_under_balanced_load(self):
        workers = 4
        rt = make_runtime(workers=workers, policy="hierarchical")
        try:
            futs = [rt.spawn(lambda: time.sleep(0.002)) for _ in range(10 * workers)]
            when_all(futs, rt).get()
            stats = rt.scheduler_stats()
            assert all(w.leaf_fetches > 0 for w in stats.per_worker)
        finally:
            rt.shutdown(timeout=30)

    def test_priority_local_order(self):
        # On one worker's log, a high task enqueued before a normal task on
        # the same worker never executes after it.
        rt = make_runtime(workers=2)
        try:
            log = []
            lock = threading.Lock()

            def body(tag):
                with lock:
                    log.append((rt.current_worker(), tag))
                time.sleep(0.0005)

            futs = []
            # Stuff worker 0 so both kinds queue up behind something.
            futs.append(rt.spawn(lambda: time.sleep(0.02), hint=0))
            for i in range(20):
                futs.append(rt.spawn(lambda i=i: body(("high", i)), priority=Priority.HIGH, hint=0))
                futs.append(rt.spawn(lambda i=i: body(("normal", i)), hint=0))
            when_all(futs, rt).get()
            per_worker = {}
            for worker, tag in log:
                per_worker.setdefault(worker, []).append(tag)
            for tags in per_worker.values():
                for i, (kind_a, a) in enumerate(tags):
                    if kind_a != "high":
                        continue
                    for kind_b, b in tags[:i]:
                        # A normal task executed before this high one must
                        # have been enqueued before it.
                        if kind_b == "normal":
                            assert b <= a
        finally:
            rt.shutdown(timeout=30)


class TestSetPolicy:
    def test_noop_switch_moves_zero(self, rt):
        assert rt.set_policy(rt.scheduler.policy) == 0

    @pytest.mark.parametrize("target", ["static", "hierarchical", "local_priority"])
    def test_exactly_once_across_switch(self, target):
        rt = make_runtime(workers=4, policy="local_priority" if target != "local_priority" else "static")
        try:
            n = 5000
            lock = threading.Lock()
            hits = [0] * n

            def body(i):
                with lock:
                    hits[i] += 1

            futs = [rt.spawn(lambda i=i: body(i)) for i in range(n)]
            moved = rt.set_policy(target)
            when_all(futs, rt).get()
            assert rt.scheduler.policy == target
            assert all(h == 1 for h in hits)
            assert moved >= 0
        finally:
            rt.shutdown(timeout=30)

    def test_switch_rejects_unknown(self, rt):
        with pytest.raises(InvalidArgumentError):
            rt.set_policy("bogus")


class TestShutdown:
    def test_drain_runs_everything(self):
        rt = make_runtime(workers=2)
        done = []
        lock = threading.Lock()
        for _ in range(100):
            rt.spawn(lambda: (lock.acquire(), done.append(1), lock.release()))
        rt.shutdown(drain=True, timeout=30)
        assert len(done) == 100

    def test_discard_reports_count(self):
        rt = make_runtime(workers=1)
        gate = threading.Event()
        started = threading.Event()
        rt.spawn(lambda: (started.set(), gate.wait()))  # occupies the only worker
        assert started.wait(5)
        for _ in range(10):
            rt.spawn(lambda: None)
        discarded = rt.scheduler.shutdown(drain=False)
        gate.set()
        assert discarded == 10

    def test_double_shutdown_idempotent(self):
        rt = make_runtime()
        rt.shutdown()
        rt.shutdown()

    def test_enqueue_after_drain_rejected(self):
        rt = make_runtime()
        rt.shutdown()
        with pytest.raises(RuntimeShutdownError):
            rt.scheduler.submit(Task(lambda: None))

    def test_fresh_scheduler_counters_zero(self):
        sched = Scheduler(SchedulerConfig(workers=3))
        stats = sched.stats()
        assert stats.tasks_executed == 0
        assert stats.steal_attempts == 0
        assert stats.steals_succeeded == 0


class TestStatsConservation:
    def test_executed_equals_submitted(self):
        rt = make_runtime(workers=4)
        try:
            run_n_tasks(rt, 1000)
            assert rt.scheduler_stats().tasks_executed == 1000
        finally:
            rt.shutdown(timeout=30)

    def test_conservation_across_policies_and_switches(self):
        rt = make_runtime(workers=4, policy="static")
        try:
            total = 0
            for policy in ("local_priority", "hierarchical", "static"):
                run_n_tasks(rt, 500)
                total += 500
                rt.set_policy(policy)
            run_n_tasks(rt, 500)
            total += 500
            assert rt.scheduler_stats().tasks_executed == total
        finally:
            rt.shutdown(timeout=30)
