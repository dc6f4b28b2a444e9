"""Runtime configuration and the `key = value` config file format.

Config files are plain text: one `key = value` per line, `#` starts a
comment, blank lines ignored.  Localities are listed as `locality.N =
host:port`; ids must be dense 0..N-1.  Locality 0 hosts the name service.
The AMT_CONFIG environment variable names a default config file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .errors import InvalidArgumentError
from .scheduler import POLICIES, SchedulerConfig

LOG_LEVELS = ("debug", "info", "warning", "error")

ENV_CONFIG = "AMT_CONFIG"


@dataclass
class LocalityAddr:
    id: int
    host: str
    port: int


@dataclass
class RuntimeConfig:
    localities: list[LocalityAddr] = field(default_factory=list)
    this_locality: int = 0
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    log_level: str = "warning"
    boot_timeout: float = 15.0

    def validate(self) -> None:
        self.scheduler.validate()
        if self.log_level not in LOG_LEVELS:
            raise InvalidArgumentError(f"unknown log level {self.log_level!r}")
        if not self.localities:
            self.localities = [LocalityAddr(0, "127.0.0.1", 0)]
        ids = [loc.id for loc in self.localities]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError(f"duplicate locality ids in {ids}")
        if sorted(ids) != list(range(len(ids))):
            raise InvalidArgumentError(f"locality ids must be dense 0..{len(ids) - 1}, got {sorted(ids)}")
        if self.this_locality not in ids:
            raise InvalidArgumentError(f"this locality {self.this_locality} is not in the locality table")

    @property
    def n_localities(self) -> int:
        return len(self.localities)

    def table(self) -> dict[int, tuple[str, int]]:
        return {loc.id: (loc.host, loc.port) for loc in self.localities}


def parse_config_text(text: str, path: str = "<config>") -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise InvalidArgumentError(f"{path}:{lineno}: empty key")
        entries[key] = value
    return entries


def _parse_int(entries: dict[str, str], key: str, default: int) -> int:
    if key not in entries:
        return default
    try:
        return int(entries[key])
    except ValueError:
        raise InvalidArgumentError(f"config key {key!r} must be an integer, got {entries[key]!r}") from None


def config_from_entries(entries: dict[str, str], this_locality: int = 0) -> RuntimeConfig:
    cfg = RuntimeConfig(this_locality=this_locality)
    cfg.scheduler.policy = entries.get("policy", cfg.scheduler.policy)
    if cfg.scheduler.policy not in POLICIES:
        raise InvalidArgumentError(f"unknown policy {cfg.scheduler.policy!r}")
    cfg.scheduler.workers = _parse_int(entries, "workers", cfg.scheduler.workers)
    cfg.scheduler.tree_arity = _parse_int(entries, "tree_arity", cfg.scheduler.tree_arity)
    cfg.scheduler.chunks_per_worker = _parse_int(entries, "chunks_per_worker", cfg.scheduler.chunks_per_worker)
    cfg.log_level = entries.get("log_level", cfg.log_level)
    if "boot_timeout" in entries:
        try:
            cfg.boot_timeout = float(entries["boot_timeout"])
        except ValueError:
            raise InvalidArgumentError(f"boot_timeout must be a number, got {entries['boot_timeout']!r}") from None
    for key, value in sorted(entries.items()):
        if not key.startswith("locality."):
            continue
        try:
            loc_id = int(key.split(".", 1)[1])
        except ValueError:
            raise InvalidArgumentError(f"bad locality key {key!r}") from None
        host, sep, port_s = value.rpartition(":")
        if not sep or not host:
            raise InvalidArgumentError(f"{key} must be host:port, got {value!r}")
        try:
            port = int(port_s)
        except ValueError:
            raise InvalidArgumentError(f"{key} port must be an integer, got {port_s!r}") from None
        cfg.localities.append(LocalityAddr(loc_id, host, port))
    cfg.validate()
    return cfg


def load_config(path: str | None, this_locality: int = 0, overrides: dict[str, str] | None = None) -> RuntimeConfig:
    """Read a config file (falling back to $AMT_CONFIG), apply flag overrides."""
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    entries: dict[str, str] = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            entries = parse_config_text(fh.read(), path)
    if overrides:
        entries.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_entries(entries, this_locality)
