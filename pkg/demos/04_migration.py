"""Global objects: apply ships the function to the data, and the data can move.

Run: python demos/04_migration.py
"""

from amt_runtime import when_all
from amt_runtime.bench import ACTION_CELL_ADD, ACTION_CELL_GET, install_bench_actions
from amt_runtime.cluster import launch_in_process, shutdown_all
from amt_runtime.objects import CounterCell


def main():
    rts = launch_in_process(3, workers=2, install=[install_bench_actions])
    rt0, rt1, rt2 = rts
    try:
        cell = rt0.register_object(CounterCell())
        rt0.register_name("/demo/cell", cell)
        print("counter cell registered on locality 0:", cell, flush=True)

        # One-sided invocation from every locality; nobody polls anything.
        for rt in rts:
            rt.apply(cell, ACTION_CELL_ADD, [10]).get()
        print("after one add(10) from each locality:",
              rt0.apply(cell, ACTION_CELL_GET, []).get(), flush=True)

        # Move the object while applies keep flying at it.
        inflight = [rt1.apply(cell, ACTION_CELL_ADD, [1]) for _ in range(100)]
        rt0.migrate(cell, 2).get()
        when_all(inflight, rt1).get()
        print("migrated 0 -> 2 while 100 adds raced it; value now:",
              rt2.apply(cell, ACTION_CELL_GET, []).get(), flush=True)

        # Every locality agrees where it lives (resolve consults the home
        # authority; caches are dropped here to show the authoritative path).
        for rt in rts:
            rt.agas.cache_drop(cell)
        print("owners seen from localities 0/1/2:",
              [rt.resolve(cell)[0] for rt in rts], flush=True)
        print("migrations recorded:",
              rt0.query_counter_value("/agas/locality#0/migrations/cumulative").value, flush=True)
    finally:
        shutdown_all(rts)


if __name__ == "__main__":
    main()
