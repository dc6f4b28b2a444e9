"""Performance counters: built-ins, application metrics, remote queries.

Run: python demos/05_counters.py
"""

from amt_runtime import CounterDescriptor, KIND_MONOTONIC, when_all
from amt_runtime.bench import install_bench_actions
from amt_runtime.cluster import launch_in_process, shutdown_all


def main():
    rts = launch_in_process(2, workers=2, install=[install_bench_actions])
    rt0, rt1 = rts
    try:
        when_all([rt0.spawn(lambda: None) for _ in range(250)], rt0).get()

        print("built-in scheduler counters on locality 0:", flush=True)
        for name in rt0.list_counters("/scheduler/locality#0")[:6]:
            cv = rt0.query_counter_value(name)
            print(f"  {name} = {cv.value}", flush=True)

        # Any locality can query any counter by name.
        name = "/scheduler/locality#0/tasks/executed/cumulative"
        print("locality 1 sees locality 0's executed count:",
              rt1.query_counter_value(name).value, flush=True)

        # Applications register their own metric sources.
        widgets = [0]
        rt1.register_counter(
            CounterDescriptor("/app/locality#1/widgets-built", KIND_MONOTONIC, lambda: widgets[0])
        )
        widgets[0] = 17
        print("app counter queried from the other locality:",
              rt0.query_counter_value("/app/locality#1/widgets-built").value, flush=True)

        # Reset rebases a monotonic counter to report deltas.
        rt0.reset_counter(name)
        when_all([rt0.spawn(lambda: None) for _ in range(5)], rt0).get()
        print("executed since reset:", rt0.query_counter_value(name).value, flush=True)

        print("\nparcel traffic so far:", flush=True)
        for n in rt0.list_counters("/parcel/locality#0"):
            print(f"  {n} = {rt0.query_counter_value(n).value}", flush=True)
    finally:
        shutdown_all(rts)


if __name__ == "__main__":
    main()
