"""Benchmarks and demos: futurized fibonacci, the distributed stencil, a
scheduling-policy comparison, and the migration-transparency demo.

Reports are plain CSV (header row, then data rows); values written by
report_to_csv parse back identically through parse_report_csv.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import time

from . import stencil
from .cluster import (
    launch_in_process,
    make_cluster_config,
    free_ports,
    reap_peers,
    shutdown_all,
    spawn_peer_processes,
    write_cluster_config_file,
)
from .config import RuntimeConfig
from .errors import InvalidArgumentError
from .futures import when_all
from .objects import CounterCell
from .runtime import Runtime
from .scheduler import POLICIES, SchedulerConfig

MODE_INPROCESS = "inprocess"
MODE_SUBPROCESS = "subprocess"

ACTION_ECHO = "bench/echo"
ACTION_CELL_ADD = "cell/add"
ACTION_CELL_GET = "cell/get"


def install_bench_actions(rt) -> None:
    """Demo/benchmark actions every locality registers before the barrier."""
    rt.register_action(ACTION_ECHO, ("bytes",), lambda _h, data: data)
    rt.register_action(ACTION_CELL_ADD, ("i64",), lambda cell, n: cell.add(n))
    rt.register_action(ACTION_CELL_GET, (), lambda cell: cell.read())
    stencil.install(rt)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def report_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = list(rows[0].keys())
    writer.writerow(header)
    for row in rows:
        writer.writerow([_format_value(row[k]) for k in header])
    return out.getvalue()


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_report_csv(text: str) -> list[dict]:
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        return []
    header = rows[0]
    parsed = []
    for raw in rows[1:]:
        row = {}
        for key, value in zip(header, raw):
            row[key] = _parse_value(value)
        parsed.append(row)
    return parsed


def _parse_value(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


# ---------------------------------------------------------------------------
# Futurized fibonacci
# ---------------------------------------------------------------------------


def fib_reference(n: int) -> int:
    """Closed form (exact for n <= 70), iterative beyond."""
    if n <= 70:
        sqrt5 = math.sqrt(5.0)
        return round(((1.0 + sqrt5) / 2.0) ** n / sqrt5) if n else 0
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def _fib_serial(n: int) -> int:
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def fib_future(rt, n: int, cutoff: int):
    """The futurization pattern: recursion as a dataflow tree, serial below
    the task-granularity cutoff."""
    if n < cutoff:
        return rt.spawn(lambda: _fib_serial(n))
    a = fib_future(rt, n - 1, cutoff)
    b = fib_future(rt, n - 2, cutoff)
    return rt.dataflow(lambda x, y: x + y, [a, b])


def bench_fib(n: int, cutoff: int = 15, workers: int = 4, policy: str = "local_priority") -> list[dict]:
    if n < 0:
        raise InvalidArgumentError("n must be >= 0")
    cfg = RuntimeConfig(scheduler=SchedulerConfig(policy=policy, workers=workers))
    rt = Runtime(cfg).boot()
    try:
        t0 = time.perf_counter()
        value = fib_future(rt, n, cutoff).get()
        wall_ms = (time.perf_counter() - t0) * 1000.0
        executed = rt.scheduler_stats().tasks_executed
    finally:
        rt.shutdown()
    expected = fib_reference(n)
    return [
        {
            "benchmark": "fib",
            "n": n,
            "cutoff": cutoff,
            "workers": workers,
            "policy": policy,
            "value": value,
            "expected": expected,
            "ok": int(value == expected),
            "wall_time_ms": wall_ms,
            "tasks_executed": executed,
        }
    ]


# ---------------------------------------------------------------------------
# Scheduling-policy comparison
# ---------------------------------------------------------------------------

SKEW_BALANCED = "balanced"
SKEW_ALL_TO_0 = "all-to-0"


def run_policy_workload(rt, tasks: int, task_us: int, skew: str) -> float:
    """Submit the synthetic workload and return the makespan in seconds.

    Task bodies sleep (releasing the interpreter lock), so idle workers can
    only help by actually stealing queued tasks."""
    delay = task_us / 1_000_000.0
    body = (lambda: time.sleep(delay)) if task_us > 0 else (lambda: None)
    workers = rt.scheduler.workers
    t0 = time.perf_counter()
    futs = []
    for i in range(tasks):
        hint = 0 if skew == SKEW_ALL_TO_0 else i % workers
        futs.append(rt.spawn(body, hint=hint))
    when_all(futs, rt).get()
    return time.perf_counter() - t0


def bench_policy_compare(tasks: int = 2000, task_us: int = 100, skew: str = SKEW_ALL_TO_0, workers: int = 4) -> list[dict]:
    if skew not in (SKEW_BALANCED, SKEW_ALL_TO_0):
        raise InvalidArgumentError(f"unknown skew {skew!r}")
    rows = []
    for policy in POLICIES:
        cfg = RuntimeConfig(scheduler=SchedulerConfig(policy=policy, workers=workers))
        rt = Runtime(cfg).boot()
        try:
            makespan = run_policy_workload(rt, tasks, task_us, skew)
            stats = rt.scheduler_stats()
        finally:
            rt.shutdown()
        rows.append(
            {
                "benchmark": "policy",
                "policy": policy,
                "tasks": tasks,
                "task_us": task_us,
                "skew": skew,
                "workers": workers,
                "wall_time_ms": makespan * 1000.0,
                "tasks_executed": stats.tasks_executed,
                "steals_attempted": stats.steal_attempts,
                "steals_succeeded": stats.steals_succeeded,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Distributed stencil
# ---------------------------------------------------------------------------


def bench_stencil(
    cells: int,
    steps: int,
    localities: int = 1,
    workers: int = 2,
    mode: str = MODE_INPROCESS,
    boundary: str = stencil.BOUNDARY_ZERO,
    init: str = stencil.INIT_SPIKE,
) -> list[dict]:
    params = stencil.StencilParams(
        cells=cells, steps=steps, localities=localities, boundary=boundary, init=init
    )
    params.validate()
    t0 = time.perf_counter()
    if localities == 1:
        cfg = RuntimeConfig(scheduler=SchedulerConfig(workers=workers))
        rt = Runtime(cfg, install=[install_bench_actions]).boot()
        try:
            field = stencil.distributed_stencil(rt, params)
        finally:
            rt.shutdown()
    elif mode == MODE_INPROCESS:
        runtimes = launch_in_process(localities, workers=workers, install=[install_bench_actions])
        try:
            field = stencil.distributed_stencil(runtimes[0], params)
        finally:
            shutdown_all(runtimes)
    elif mode == MODE_SUBPROCESS:
        ports = free_ports(localities)
        config_path = write_cluster_config_file(localities, workers, "local_priority", ports)
        procs = spawn_peer_processes(config_path, range(1, localities))
        cfg = make_cluster_config(localities, workers, "local_priority", ports)[0]
        rt = Runtime(cfg, install=[install_bench_actions])
        try:
            rt.boot()
            field = stencil.distributed_stencil(rt, params)
        finally:
            rt.shutdown(broadcast=True)
            codes = reap_peers(procs)
            if any(codes):
                raise InvalidArgumentError(f"peer processes exited with {codes}")
    else:
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    wall_ms = (time.perf_counter() - t0) * 1000.0
    return [
        {
            "benchmark": "stencil",
            "cells": cells,
            "steps": steps,
            "localities": localities,
            "boundary": boundary,
            "init": init,
            "mode": mode if localities > 1 else "local",
            "wall_time_ms": wall_ms,
            "field_sum": float(field.sum()),
            "field_digest": hashlib.sha256(field.tobytes()).hexdigest()[:16],
        }
    ]


# ---------------------------------------------------------------------------
# Migration demo
# ---------------------------------------------------------------------------


def demo_migrate(localities: int = 2, workers: int = 2, applies: int = 100, migrations: int = 4) -> list[dict]:
    """Register a counter cell, hammer it with adds while it migrates around
    the ring, and check that exactly every add landed."""
    if localities < 2:
        raise InvalidArgumentError("the migration demo needs at least 2 localities")
    runtimes = launch_in_process(localities, workers=workers, install=[install_bench_actions])
    rt0 = runtimes[0]
    try:
        gid = rt0.register_object(CounterCell())
        rt0.register_name("/demo/cell", gid)
        per_round = applies // migrations if migrations else applies
        done = []
        total = 0
        owner = 0
        for round_no in range(migrations):
            src = runtimes[(round_no + 1) % localities]
            for _ in range(per_round):
                done.append(src.apply(gid, ACTION_CELL_ADD, [1]))
                total += 1
            owner = (owner + 1) % localities
            rt0.migrate(gid, owner).get()
        while total < applies:
            done.append(rt0.apply(gid, ACTION_CELL_ADD, [1]))
            total += 1
        when_all(done, rt0).get()
        final = rt0.apply(gid, ACTION_CELL_GET, []).get()
        for rt in runtimes:
            rt.agas.cache_drop(gid)
        owners = {rt.locality_id: rt.resolve(gid)[0] for rt in runtimes}
        agree = len(set(owners.values())) == 1
    finally:
        shutdown_all(runtimes)
    return [
        {
            "benchmark": "demo-migrate",
            "localities": localities,
            "applies": applies,
            "migrations": migrations,
            "final_value": final,
            "owners_agree": int(agree),
            "ok": int(final == applies and agree),
        }
    ]
