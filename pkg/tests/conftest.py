import pytest

from amt_runtime import Runtime, RuntimeConfig, SchedulerConfig
from amt_runtime.bench import install_bench_actions
from amt_runtime.cluster import launch_in_process, shutdown_all


def make_runtime(workers=2, policy="local_priority", **kwargs):
    cfg = RuntimeConfig(scheduler=SchedulerConfig(policy=policy, workers=workers, **kwargs))
    return Runtime(cfg, install=[install_bench_actions]).boot()


@pytest.fixture
def rt():
    runtime = make_runtime()
    yield runtime
    runtime.shutdown(timeout=30)


@pytest.fixture
def rt4():
    runtime = make_runtime(workers=4)
    yield runtime
    runtime.shutdown(timeout=30)


@pytest.fixture
def cluster():
    """Factory for in-process multi-locality clusters, torn down afterwards."""
    clusters = []

    def make(n, workers=2, **kwargs):
        kwargs.setdefault("install", [install_bench_actions])
        rts = launch_in_process(n, workers=workers, **kwargs)
        clusters.append(rts)
        return rts

    yield make
    for rts in clusters:
        shutdown_all(rts)
