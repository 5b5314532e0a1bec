"""Command line: series benchmark, octree runs, delegate serve mode.

Exit codes: 0 ok, 1 usage or bad configuration, 2 runtime fault,
3 startup/timeout.

Typical distributed invocation on one host (two terminals):

    octask amr --config run.ini --max-level 2 --stop-step 5 --theta 0.5 \
        --agas 127.0.0.1:7910 --listen 127.0.0.1:7910 --localities 2 \
        --threads 4 --parcelport tcp

    octask serve --agas 127.0.0.1:7910 --listen 127.0.0.1:7911 --threads 4
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from . import bench, kernels
from .amr.config import AmrConfig, parse_ini
from .amr.driver import AmrRun
from .dist import (BindError, LocalityConfig, StartupError, bootstrap,
                   loopback_group)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _add_dist_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--agas", metavar="HOST:PORT", help="supervisor endpoint")
    p.add_argument("--listen", metavar="HOST:PORT", help="this locality's endpoint")
    p.add_argument("--localities", type=int, default=1)
    p.add_argument("--threads", type=int, default=2)
    p.add_argument("--worker", action="store_true", help="run as a delegate")
    p.add_argument("--parcelport", choices=("tcp", "loopback"), default="loopback")
    p.add_argument("--timeout", type=float, default=30.0)


def _build_parser() -> _Parser:
    parser = _Parser(prog="octask")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="series benchmark across paradigms")
    b.add_argument("--n", type=int, default=1_000_000)
    b.add_argument("--x", type=float, default=0.999999)
    b.add_argument("--cores", default="1")
    b.add_argument("--paradigms", default="futures,for_each,sender")
    b.add_argument("--repeats", type=int, default=10)
    b.add_argument("--chunks", type=int, default=None)
    b.add_argument("--cpu-spec", choices=sorted(bench.CPU_SPECS), default=None)
    b.add_argument("--output-dir", default=".")

    a = sub.add_parser("amr", help="adaptive-octree application run")
    a.add_argument("--config", metavar="FILE")
    a.add_argument("--max-level", type=int, default=None)
    a.add_argument("--stop-step", type=int, default=None)
    a.add_argument("--theta", type=float, default=None)
    a.add_argument("--kernel", choices=("native", "execspace"), default="native")
    a.add_argument("--power", type=float, default=None, help="average watts for the energy model")
    a.add_argument("--output-dir", default=".")
    _add_dist_flags(a)

    s = sub.add_parser("serve", help="delegate mode: host components until released")
    _add_dist_flags(s)
    return parser


# ---------------------------------------------------------------------------
# bench

def _cmd_bench(args) -> int:
    try:
        params = bench.MaclaurinParams(args.x, args.n)
        cores = [int(c) for c in args.cores.split(",") if c]
        paradigms = [p.strip() for p in args.paradigms.split(",") if p.strip()]
        for p in paradigms:
            if p not in bench.PARADIGMS:
                raise ValueError(f"unknown paradigm {p!r}")
        spec = bench.CPU_SPECS[args.cpu_spec] if args.cpu_spec else None
    except ValueError as e:
        print(f"octask bench: {e}", file=sys.stderr)
        return 1
    results = bench.run_suite(params, paradigms, cores,
                              repeats=args.repeats, chunk_count=args.chunks)
    print(f"backend={kernels.BACKEND} n={args.n} x={args.x} repeats={args.repeats}")
    for r in results:
        line = (f"paradigm={r.paradigm} cores={r.cores} "
                f"time_min={r.time_min:.6f} time_median={r.time_median:.6f} "
                f"time_max={r.time_max:.6f} flops={r.flops:.6g}")
        if spec is not None:
            line += f" normalized={bench.normalized_performance(r.flops, spec, r.cores):.6g}"
        print(line)
    for path in bench.emit_csv(results, args.output_dir):
        print(f"csv={path}")
    return 0


# ---------------------------------------------------------------------------
# amr

def _amr_config(args) -> AmrConfig:
    cfg = parse_ini(args.config) if args.config else AmrConfig()
    overrides = {}
    if args.max_level is not None:
        overrides["max_level"] = args.max_level
    if args.stop_step is not None:
        overrides["steps"] = args.stop_step
    if args.theta is not None:
        overrides["theta"] = args.theta
    if args.power is not None:
        overrides["average_power_w"] = args.power
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg.validate()


def _locality_config(args, is_worker: bool) -> LocalityConfig:
    return LocalityConfig(
        locality_count=args.localities,
        is_worker=is_worker,
        parcelport=args.parcelport,
        agas_endpoint=args.agas,
        own_endpoint=args.listen,
        threads=args.threads,
        timeout=args.timeout,
    )


def _cmd_amr(args) -> int:
    if args.worker:
        return _cmd_serve(args)
    try:
        cfg = _amr_config(args)
    except (ValueError, OSError) as e:
        print(f"octask amr: {e}", file=sys.stderr)
        return 1

    group = []
    try:
        if args.parcelport == "loopback" and args.localities > 1:
            group = loopback_group(args.localities, args.threads)
            runtime = group[0]
        else:
            runtime = bootstrap(_locality_config(args, is_worker=False))
    except (StartupError, BindError) as e:
        print(f"octask amr: {e}", file=sys.stderr)
        return 3

    try:
        def app():
            run = AmrRun(runtime, cfg, kernel_mode=args.kernel)
            leaves, cells = run.build_tree()
            metrics = run.advance()
            digest = run.state_hash()
            return leaves, cells, metrics, digest

        leaves, cells, metrics, digest = runtime.run(app)
        energy = bench.energy_wh(
            bench.EnergyModel(cfg.average_power_w, metrics.wall_seconds))
        print(f"backend={kernels.BACKEND} kernel={args.kernel} "
              f"localities={args.localities} threads={args.threads} "
              f"parcelport={args.parcelport}")
        print(f"census leaves={leaves} cells={cells}")
        print(f"steps={metrics.steps} wall_seconds={metrics.wall_seconds:.6f}")
        print(f"cells_per_second={metrics.cells_per_second:.6g}")
        print(f"cells_per_second_step_norm={metrics.step_normalized_rate:.6g}")
        print(f"energy_wh={energy:.6g}")
        print(f"state_hash={digest}")
        result = bench.BenchResult(
            paradigm=args.kernel, cores=args.localities * args.threads,
            repeats=1, time_min=metrics.wall_seconds,
            time_median=metrics.wall_seconds, time_max=metrics.wall_seconds,
            flops_basis=float(metrics.cells * metrics.steps))
        for path in bench.emit_csv([result], args.output_dir, suite="amr"):
            print(f"csv={path}")
        return 0
    except Exception as e:
        print(f"octask amr: run failed: {e}", file=sys.stderr)
        return 2
    finally:
        if group:
            for rt in group[1:]:
                rt.close()
            group[0].close()
        else:
            runtime.shutdown_cluster()


# ---------------------------------------------------------------------------
# serve (delegate)

def _cmd_serve(args) -> int:
    if args.parcelport != "tcp":
        print("octask serve: delegates only make sense on the tcp parcelport",
              file=sys.stderr)
        return 1
    if not args.agas or not args.listen:
        print("octask serve: --agas and --listen are required", file=sys.stderr)
        return 1
    try:
        runtime = bootstrap(_locality_config(args, is_worker=True))
    except (StartupError, BindError, ValueError) as e:
        print(f"octask serve: {e}", file=sys.stderr)
        return 3
    released = runtime.wait_shutdown(timeout=max(args.timeout * 40, 600.0))
    if not released:
        print("octask serve: no shutdown from the supervisor", file=sys.stderr)
        return 3
    if getattr(runtime, "_supervisor_lost", False):
        print("octask serve: supervisor connection lost", file=sys.stderr)
        return 3
    mgr = getattr(runtime, "amr_manager", None)
    if mgr is not None and mgr.final_hash:
        print(f"state_hash={mgr.final_hash}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    if args.command == "bench":
        return _cmd_bench(args)
    if args.command == "amr":
        return _cmd_amr(args)
    return _cmd_serve(args)


if __name__ == "__main__":
    sys.exit(main())
