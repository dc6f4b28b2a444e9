"""Command-line harness.

Subcommands:
  run            boot one locality from a config file and wait for the
                 system-wide shutdown broadcast
  bench fib      futurized fibonacci
  bench stencil  distributed heat stencil
  bench policy   compare the three scheduling policies on one workload
  counters dump  print performance counters as CSV (name,value,sampled_at_ns)
  demo migrate   object-migration transparency demo

Config files are `key = value` lines; flags override config keys; the
AMT_CONFIG environment variable supplies a default config path.  Exit
codes: 0 ok, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from . import bench
from .config import RuntimeConfig, load_config
from .errors import AmtError
from .runtime import Runtime

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; this harness reserves 2 for runtime failures.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="config file (default: $AMT_CONFIG)")
    p.add_argument("--locality", type=int, default=0, help="this locality's id")
    p.add_argument("--workers", type=int, default=None, help="override worker count")
    p.add_argument("--policy", default=None, help="override scheduling policy")
    p.add_argument("--log-level", dest="log_level", default=None, help="debug|info|warning|error")


def _load(args) -> RuntimeConfig:
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = str(args.workers)
    if args.policy is not None:
        overrides["policy"] = args.policy
    if getattr(args, "log_level", None) is not None:
        overrides["log_level"] = args.log_level
    return load_config(args.config, this_locality=args.locality, overrides=overrides)


def build_parser() -> _Parser:
    parser = _Parser(prog="amt", description="asynchronous many-task runtime harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="boot a locality and wait for shutdown")
    _add_config_flags(p_run)

    p_bench = sub.add_parser("bench", help="run a benchmark, print a CSV report")
    bench_sub = p_bench.add_subparsers(dest="bench_command", required=True)

    p_fib = bench_sub.add_parser("fib")
    p_fib.add_argument("--n", type=int, required=True)
    p_fib.add_argument("--cutoff", type=int, default=15)
    p_fib.add_argument("--workers", type=int, default=4)
    p_fib.add_argument("--policy", default="local_priority")

    p_st = bench_sub.add_parser("stencil")
    p_st.add_argument("--cells", type=int, required=True)
    p_st.add_argument("--steps", type=int, required=True)
    p_st.add_argument("--localities", type=int, default=1)
    p_st.add_argument("--workers", type=int, default=2)
    p_st.add_argument("--mode", choices=[bench.MODE_INPROCESS, bench.MODE_SUBPROCESS], default=bench.MODE_SUBPROCESS)
    p_st.add_argument("--boundary", choices=["zero", "reflect"], default="zero")
    p_st.add_argument("--init", choices=["spike", "uniform", "ramp"], default="spike")

    p_pol = bench_sub.add_parser("policy")
    p_pol.add_argument("--tasks", type=int, default=2000)
    p_pol.add_argument("--task-us", dest="task_us", type=int, default=100)
    p_pol.add_argument("--skew", choices=[bench.SKEW_BALANCED, bench.SKEW_ALL_TO_0], default=bench.SKEW_ALL_TO_0)
    p_pol.add_argument("--workers", type=int, default=4)

    p_dump = sub.add_parser("counters", help="counter operations")
    dump_sub = p_dump.add_subparsers(dest="counters_command", required=True)
    p_dd = dump_sub.add_parser("dump")
    p_dd.add_argument("--prefix", default="/")
    _add_config_flags(p_dd)

    p_demo = sub.add_parser("demo", help="feature demos")
    demo_sub = p_demo.add_subparsers(dest="demo_command", required=True)
    p_dm = demo_sub.add_parser("migrate")
    p_dm.add_argument("--localities", type=int, default=2)
    p_dm.add_argument("--workers", type=int, default=2)
    p_dm.add_argument("--applies", type=int, default=100)
    p_dm.add_argument("--migrations", type=int, default=4)

    return parser


def cmd_run(args) -> int:
    cfg = _load(args)
    rt = Runtime(cfg, install=[bench.install_bench_actions]).boot()
    try:
        rt.wait_for_shutdown()
    finally:
        rt.shutdown()
    return EXIT_OK


def cmd_counters_dump(args) -> int:
    cfg = _load(args)
    rt = Runtime(cfg, install=[bench.install_bench_actions]).boot()
    try:
        names = rt.list_counters(args.prefix)
        print("name,value,sampled_at_ns")
        for name in names:
            cv = rt.query_counter_value(name)
            print(f"{name},{cv.value},{cv.sampled_at}")
    finally:
        rt.shutdown(broadcast=cfg.n_localities > 1)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "bench":
            if args.bench_command == "fib":
                rows = bench.bench_fib(args.n, args.cutoff, args.workers, args.policy)
            elif args.bench_command == "stencil":
                rows = bench.bench_stencil(
                    args.cells, args.steps, args.localities, args.workers,
                    args.mode, args.boundary, args.init,
                )
            else:
                rows = bench.bench_policy_compare(args.tasks, args.task_us, args.skew, args.workers)
            sys.stdout.write(bench.report_to_csv(rows))
            return EXIT_OK
        if args.command == "counters":
            return cmd_counters_dump(args)
        if args.command == "demo":
            rows = bench.demo_migrate(args.localities, args.workers, args.applies, args.migrations)
            sys.stdout.write(bench.report_to_csv(rows))
            return EXIT_OK if all(r.get("ok", 1) for r in rows) else EXIT_FAILURE
        return EXIT_USAGE
    except AmtError as exc:
        sys.stderr.write(f"amt: error: {exc}\n")
        return EXIT_FAILURE
    except KeyboardInterrupt:
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
