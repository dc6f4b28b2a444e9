"""Futures, continuations and dataflow: composing work by data dependency.

Run: python demos/01_futures_dataflow.py
"""

import time

from amt_runtime import Runtime, when_all


def main():
    rt = Runtime().boot()

    # A task is just a callable; the future carries its result.
    greeting = rt.spawn(lambda: "hello from a task")
    print(greeting.get(), flush=True)

    # Continuations chain without blocking anyone.
    total = rt.make_ready_future(0)
    for i in range(1, 101):
        total = total.then(lambda acc, i=i: acc + i)
    print("sum 1..100 via 100 continuations:", total.get(), flush=True)

    # when_all gathers in input order, even when completion order differs.
    slow = rt.spawn(lambda: time.sleep(0.05) or "slow")
    fast = rt.spawn(lambda: "fast")
    print("gathered:", when_all([slow, fast], rt).get(), flush=True)

    # dataflow runs a body once its dependencies are ready: a diamond.
    a = rt.dataflow(lambda: 2, [])
    b = rt.dataflow(lambda x: x + 1, [a])
    c = rt.dataflow(lambda x: x * 10, [a])
    d = rt.dataflow(lambda x, y: x + y, [b, c])
    print("diamond a=2, b=a+1, c=10a, d=b+c:", d.get(), flush=True)

    # Futurized fibonacci: the classic recursion as a dependency tree.
    def fib(n, cutoff=12):
        if n < cutoff:
            return rt.spawn(lambda: _serial_fib(n))
        return rt.dataflow(lambda x, y: x + y, [fib(n - 1, cutoff), fib(n - 2, cutoff)])

    def _serial_fib(n):
        x, y = 0, 1
        for _ in range(n):
            x, y = y, x + y
        return x

    t0 = time.perf_counter()
    value = fib(24).get()
    print(f"futurized fib(24) = {value} in {time.perf_counter() - t0:.3f}s "
          f"({rt.scheduler_stats().tasks_executed} tasks)", flush=True)

    rt.shutdown()


if __name__ == "__main__":
    main()
