"""Futures, continuations, when_all, dataflow, parallel_for semantics."""

import threading
import time

import pytest

from amt_runtime import (
    FutureAlreadySetError,
    Priority,
    RuntimeShutdownError,
    dataflow,
    when_all,
)
from amt_runtime.futures import Future

from conftest import make_runtime


class Boom(Exception):
    pass


class TestSpawn:
    def test_identity(self, rt):
        assert rt.spawn(lambda: 42).get() == 42

    def test_error_path(self, rt):
        def fail():
            raise Boom("nope")

        f = rt.spawn(fail)
        with pytest.raises(Boom):
            f.get()
        assert isinstance(f.error(), Boom)

    def test_caller_never_blocks(self, rt):
        start = time.perf_counter()
        f = rt.spawn(lambda: time.sleep(0.2) or "done")
        assert time.perf_counter() - start < 0.1
        assert f.get() == "done"

    def test_many_spawns_counter(self, rt4):
        # Oracle: the equivalent serial loop adds 1 per spawn.
        n = 20_000
        lock = threading.Lock()
        counter = [0]

        def bump():
            with lock:
                counter[0] += 1

        futs = [rt4.spawn(bump) for _ in range(n)]
        when_all(futs, rt4).get()
        assert counter[0] == n

    def test_spawn_after_shutdown_is_distinct_error(self):
        runtime = make_runtime()
        runtime.shutdown()
        f = runtime.spawn(lambda: 1)
        with pytest.raises(RuntimeShutdownError):
            f.get()


class TestMakeReady:
    def test_value(self, rt):
        assert rt.make_ready_future(7).get() == 7

    def test_then_on_ready(self, rt):
        assert rt.make_ready_future(1).then(lambda x: x + 1).get() == 2

    def test_when_all_of_ready(self, rt):
        fs = [rt.make_ready_future(i) for i in (1, 2, 3)]
        assert when_all(fs, rt).get() == [1, 2, 3]


class TestSingleAssignment:
    def test_second_value_rejected(self):
        f = Future()
        f.set_value(1)
        with pytest.raises(FutureAlreadySetError):
            f.set_value(2)
        with pytest.raises(FutureAlreadySetError):
            f.set_error(Boom())
        assert f.get() == 1

    def test_error_then_value_rejected(self):
        f = Future()
        f.set_error(Boom())
        with pytest.raises(FutureAlreadySetError):
            f.set_value(3)

    def test_try_variants_report(self):
        f = Future()
        assert f.try_set_value(1) is True
        assert f.try_set_value(2) is False
        assert f.try_set_error(Boom()) is False


class TestThen:
    def test_chain_three(self, rt):
        f = rt.make_ready_future(0)
        for _ in range(3):
            f = f.then(lambda x: x + 1)
        assert f.get() == 3

    def test_chain_thousand(self, rt):
        f = rt.make_ready_future(0)
        for _ in range(1000):
            f = f.then(lambda x: x + 1)
        assert f.get() == 1000

    def test_error_skips_continuation(self, rt):
        ran = []
        src = rt.spawn(lambda: (_ for _ in ()).throw(Boom("e")))
        out = src.then(lambda x: ran.append(x) or x)
        with pytest.raises(Boom):
            out.get()
        assert ran == []

    def test_continuation_failure_becomes_error(self, rt):
        out = rt.make_ready_future(1).then(lambda x: (_ for _ in ()).throw(Boom()))
        with pytest.raises(Boom):
            out.get()

    def test_attach_after_completion_runs_once(self, rt):
        src = rt.spawn(lambda: 5)
        src.get()
        hits = []
        out = src.then(lambda x: hits.append(x) or x * 2)
        assert out.get() == 10
        assert hits == [5]

    def test_continuation_runs_as_task(self, rt):
        seen = {}

        def cont(x):
            seen["worker"] = rt.current_worker()
            return x

        rt.make_ready_future(1).then(cont).get()
        assert seen["worker"] is not None


class TestWhenAll:
    def test_empty(self, rt):
        assert when_all([], rt).get() == []

    def test_order_preserved(self, rt):
        slow = rt.spawn(lambda: time.sleep(0.05) or "slow")
        fast = rt.make_ready_future("fast")
        assert when_all([slow, fast], rt).get() == ["slow", "fast"]

    def test_first_error_in_input_order_wins(self, rt):
        e1, e2 = Boom("first"), Boom("second")
        ok = rt.make_ready_future(1)
        bad1 = rt.make_error_future(e1)
        bad2 = rt.make_error_future(e2)
        agg = when_all([ok, bad1, bad2], rt)
        with pytest.raises(Boom, match="first"):
            agg.get()

    def test_positional_error_order_even_if_later_completes_first(self, rt):
        gate = Future()
        e_early_pos = Boom("early-position")

        def slow_fail():
            gate.get(timeout=5)
            raise e_early_pos

        slow = rt.spawn(slow_fail)
        fast_err = rt.spawn(lambda: (_ for _ in ()).throw(Boom("late-position")))
        while not fast_err.done():
            time.sleep(0.001)
        gate.set_value(None)
        agg = when_all([slow, fast_err], rt)
        with pytest.raises(Boom, match="early-position"):
            agg.get()

    def test_waits_for_all_even_on_error(self, rt):
        finished = []
        bad = rt.make_error_future(Boom())

        def slow():
            time.sleep(0.05)
            finished.append(True)

        agg = when_all([bad, rt.spawn(slow)], rt)
        with pytest.raises(Boom):
            agg.get()
        assert finished == [True]


class TestDataflow:
    def test_sum(self, rt):
        out = dataflow(lambda a, b: a + b, [rt.make_ready_future(2), rt.make_ready_future(3)], rt)
        assert out.get() == 5

    def test_zero_deps_behaves_as_spawn(self, rt):
        assert dataflow(lambda: "ran", [], rt).get() == "ran"

    def test_error_propagates_without_body(self, rt):
        ran = []
        out = dataflow(lambda *a: ran.append(a), [rt.make_error_future(Boom())], rt)
        with pytest.raises(Boom):
            out.get()
        assert ran == []

    def test_then_equivalence_for_pure_bodies(self, rt):
        body = lambda x: x * 3 + 1  # noqa: E731
        for v in (0, 5, -2):
            a = dataflow(body, [rt.make_ready_future(v)], rt).get()
            b = rt.make_ready_future(v).then(body).get()
            assert a == b

    def test_diamond_runs_in_topological_order(self, rt):
        # DAG: A -> {B, C} -> D; oracle is a topological check of the log.
        log = []
        lock = threading.Lock()

        def node(name):
            def body(*_):
                with lock:
                    log.append(name)
                return name

            return body

        a = dataflow(node("A"), [], rt)
        b = dataflow(node("B"), [a], rt)
        c = dataflow(node("C"), [a], rt)
        d = dataflow(node("D"), [b, c], rt)
        d.get()
        assert set(log) == {"A", "B", "C", "D"}
        pos = {n: i for i, n in enumerate(log)}
        for u, v in [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")]:
            assert pos[u] < pos[v]


class TestFutureGet:
    def test_ready_no_suspension(self, rt):
        assert rt.make_ready_future(7).get() == 7

    def test_single_worker_rendezvous(self):
        # One worker; task A waits on a future fulfilled by task B.  The
        # oracle is completion before a 10 s watchdog.
        runtime = make_runtime(workers=1)
        try:
            cell = Future(runtime)

            def task_a():
                return cell.get() + 1

            a = runtime.spawn(task_a)
            b = runtime.spawn(lambda: cell.set_value(41))
            assert a.get(timeout=10) == 42
            b.get(timeout=10)
        finally:
            runtime.shutdown(timeout=30)

    def test_external_get_waits_for_fulfillment(self, rt):
        f = rt.spawn(lambda: time.sleep(0.05) or 99)
        assert f.get() == 99

    def test_external_get_timeout(self, rt):
        f = Future(rt)
        with pytest.raises(TimeoutError):
            f.get(timeout=0.05)

    def test_timeout_rejected_inside_task(self, rt):
        def body():
            pending = Future(rt)
            try:
                pending.get(timeout=1.0)
            except ValueError as exc:
                return str(exc)
            return "no error"

        assert "outside" in rt.spawn(body).get()

    def test_deep_wait_chain(self, rt4):
        # Several tasks suspended on one another, all on a small pool.
        futs = [Future(rt4) for _ in range(6)]

        def waiter(i):
            if i == 0:
                return 1
            return futs[i - 1].get() + 1

        spawned = [rt4.spawn(lambda i=i: futs[i].set_value(waiter(i))) for i in range(6)]
        when_all(spawned, rt4).get()
        assert futs[5].get(timeout=10) == 6


class TestParallelFor:
    def test_empty_range(self, rt):
        calls = []
        rt.parallel_for(5, 5, calls.append).get()
        assert calls == []

    def test_accumulate_triangle_number(self, rt4):
        n = 1_000_000
        cells = [0] * rt4.scheduler.workers

        def body(i):
            w = rt4.current_worker()
            cells[w] += i

        rt4.parallel_for(1, n + 1, body).get()
        assert sum(cells) == n * (n + 1) // 2

    def test_every_index_visited_exactly_once(self, rt4):
        n = 100_000
        visits = bytearray(n)

        def body(i):
            visits[i] += 1

        rt4.parallel_for(0, n, body).get()
        assert visits.count(1) == n

    def test_chunk_error_aggregates(self, rt):
        def body(i):
            if i == 17:
                raise Boom("at 17")

        with pytest.raises(Boom):
            rt.parallel_for(0, 100, body).get()

    def test_bad_range(self, rt):
        from amt_runtime import InvalidArgumentError

        with pytest.raises(InvalidArgumentError):
            rt.parallel_for(10, 5, lambda i: None).get()


class TestPriorityPropagation:
    def test_continuation_priority_follows_completing_context(self, rt):
        observed = {}

        def high_body():
            inner = rt.make_ready_future(1)

            def cont(x):
                observed["prio"] = rt.scheduler.current_task().priority
                return x

            return inner.then(cont).get()

        rt.spawn(high_body, priority=Priority.HIGH).get()
        assert observed["prio"] is Priority.HIGH
