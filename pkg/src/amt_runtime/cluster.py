"""Helpers for running several localities at once.

Two modes: in-process (N Runtime instances in one process, loopback TCP on
OS-assigned ports -- fast, used by unit tests) and subprocess (one child
process per peer locality running `amt run`, the natural deployment shape).
Both share the exact same transport and boot path.
"""

from __future__ import annotations

import os
import socket
import subprocess
import sys
import tempfile
import threading

from .config import LocalityAddr, RuntimeConfig
from .errors import BootError
from .runtime import Runtime
from .scheduler import SchedulerConfig


def _prebound_listeners(n: int) -> list[socket.socket]:
    socks = []
    for _ in range(n):
        s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind(("127.0.0.1", 0))
        s.listen(16)
        socks.append(s)
    return socks


def make_cluster_config(
    n: int,
    workers: int = 2,
    policy: str = "local_priority",
    ports: list[int] | None = None,
    **scheduler_kwargs,
) -> list[RuntimeConfig]:
    """One RuntimeConfig per locality sharing a loopback locality table."""
    if ports is None:
        ports = [0] * n
    configs = []
    for k in range(n):
        cfg = RuntimeConfig(
            localities=[LocalityAddr(i, "127.0.0.1", ports[i]) for i in range(n)],
            this_locality=k,
            scheduler=SchedulerConfig(policy=policy, workers=workers, **scheduler_kwargs),
        )
        configs.append(cfg)
    return configs


def launch_in_process(
    n: int,
    workers: int = 2,
    policy: str = "local_priority",
    install=(),
    boot_timeout: float = 15.0,
    **scheduler_kwargs,
) -> list[Runtime]:
    """Boot N localities inside this process and return them barrier-complete."""
    listeners = _prebound_listeners(n)
    ports = [s.getsockname()[1] for s in listeners]
    configs = make_cluster_config(n, workers, policy, ports, **scheduler_kwargs)
    runtimes = []
    for k, cfg in enumerate(configs):
        cfg.boot_timeout = boot_timeout
        runtimes.append(Runtime(cfg, listen_sock=listeners[k], install=install))
    errors: list[BaseException] = []

    def boot_one(rt: Runtime):
        try:
            rt.boot()
        except BaseException as exc:  # noqa: BLE001 - surfaced to the caller below
            errors.append(exc)

    threads = [threading.Thread(target=boot_one, args=(rt,), daemon=True) for rt in runtimes]
    for t in threads:
        t.start()
    for t in threads:
        t.join(boot_timeout + 5)
    if errors:
        for rt in runtimes:
            rt.kill()
        raise BootError(f"cluster boot failed: {errors[0]}") from errors[0]
    return runtimes


def shutdown_all(runtimes, drain: bool = True) -> None:
    for rt in runtimes:
        try:
            rt.shutdown(drain=drain)
        except Exception:
            rt.kill()


def free_ports(n: int) -> list[int]:
    """OS-assigned ports for subprocess clusters (tiny reuse race, fine here)."""
    socks = _prebound_listeners(n)
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


def write_cluster_config_file(
    n: int, workers: int, policy: str, ports: list[int], directory: str | None = None
) -> str:
    fd, path = tempfile.mkstemp(suffix=".conf", prefix="amt-cluster-", dir=directory, text=True)
    with os.fdopen(fd, "w") as fh:
        fh.write(f"workers = {workers}\npolicy = {policy}\n")
        for i, port in enumerate(ports):
            fh.write(f"locality.{i} = 127.0.0.1:{port}\n")
    return path


def spawn_peer_processes(config_path: str, peer_ids, extra_args=()) -> list[subprocess.Popen]:
    """Start `amt run` children for the given peer localities."""
    procs = []
    for k in peer_ids:
        cmd = [sys.executable, "-m", "amt_runtime.cli", "run", "--config", config_path, "--locality", str(k)]
        cmd.extend(extra_args)
        procs.append(subprocess.Popen(cmd, stdout=subprocess.DEVNULL, stderr=subprocess.PIPE))
    return procs


def reap_peers(procs: list[subprocess.Popen], timeout: float = 20.0) -> list[int]:
    """Wait for children to exit; kill stragglers.  Returns exit codes."""
    codes = []
    for p in procs:
        try:
            codes.append(p.wait(timeout=timeout))
        except subprocess.TimeoutExpired:
            p.kill()
            codes.append(p.wait())
    return codes
