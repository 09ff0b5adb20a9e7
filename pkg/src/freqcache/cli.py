"""Command-line front end: statistics, trace generation, simulation, sweeps,
policy comparison, and oracle verification.

Exit codes: 0 success, 1 runtime failure (including oracle divergence),
2 usage error. A JSON config file can seed `simulate`/`sweep`/`compare`/
`verify`; explicit flags always win over file values.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

from . import freq_stats, simulator, workload
from .simulator import POLICIES, SimConfig, TOOL_VERSION

HEAD_FRACTIONS = (0.001, 0.0014, 0.01, 0.1)


class UsageError(ValueError):
    """Bad flags or config values; exits 2 like an argparse error."""


def _write_json(path: str | None, text: str) -> None:
    if path is None or path == "-":
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _config_from_args(args: argparse.Namespace) -> SimConfig:
    base: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = json.load(fh)
        unknown = set(base) - {f.name for f in dataclasses.fields(SimConfig)}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    config = SimConfig(**base)
    overrides = {
        "preset": args.preset,
        "exponent": args.exponent,
        "shift": args.shift,
        "trace_path": args.trace,
        "num_ids": args.num_ids,
        "features": args.features,
        "num_batches": args.batches,
        "batch_size": args.batch_size,
        "embedding_dim": args.dim,
        "cache_ratio": args.cache_ratio,
        "policy": args.policy,
        "write_back": args.write_back,
        "evict_mode": args.evict_mode,
        "shard_strategy": args.strategy,
        "num_shards": args.shards,
        "buffer_bytes": args.buffer_bytes,
        "seed": args.seed,
    }
    for name, value in overrides.items():
        if value is not None:
            config = dataclasses.replace(config, **{name: value})
    if args.exponent is not None and "preset" not in base and args.preset is None:
        config = dataclasses.replace(config, preset=None)
    try:
        config.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return config


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--preset", choices=sorted(workload.PRESETS))
    p.add_argument("--exponent", type=float, help="explicit skew exponent instead of a preset")
    p.add_argument("--shift", type=float, default=None, help="Zipf-Mandelbrot shift (default 0)")
    p.add_argument("--trace", help="CSV trace file to replay instead of generating")
    p.add_argument("--num-ids", type=int, dest="num_ids")
    p.add_argument("--features", type=int)
    p.add_argument("--batches", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--dim", type=int, help="embedding dimension")
    p.add_argument("--cache-ratio", type=float, dest="cache_ratio")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--write-back", choices=("dirty_only", "always"), dest="write_back")
    p.add_argument("--evict-mode", choices=("occupancy_aware", "paper_literal"), dest="evict_mode")
    p.add_argument("--strategy", choices=("column", "table"))
    p.add_argument("--shards", type=int)
    p.add_argument("--buffer-bytes", type=int, dest="buffer_bytes")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="metrics JSON path (default: stdout)")


def _per_batch_csv(path: str, metrics_list) -> None:
    keys = sorted(metrics_list[0].per_batch)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "cache_ratio", "policy", "batch"] + keys)
        for i, m in enumerate(metrics_list):
            ratio = m.config["cache_ratio"]
            policy = m.config["policy"]
            for b in range(m.summary["batches"]):
                writer.writerow([i, ratio, policy, b] + [m.per_batch[k][b] for k in keys])


def _summary_line(metrics) -> str:
    s = metrics.summary
    return (
        f"policy={metrics.config['policy']:<17} ratio={metrics.config['cache_ratio']:<7g} "
        f"hit_ratio={s['hit_ratio']:.4f} steady={s['steady_state_hit_ratio']:.4f} "
        f"evictions={s['evictions']:<8} transfer_s={s['total_modeled_transfer_time_s']:.6f}"
    )


def cmd_stats(args: argparse.Namespace) -> int:
    if args.sample_rate is not None and not (0.0 < args.sample_rate <= 1.0):
        raise UsageError(f"--sample-rate must be in (0, 1], got {args.sample_rate}")
    trace = workload.load_csv(args.trace, id_remap="identity", num_ids=args.num_ids)
    if args.sample_rate is not None and args.sample_rate < 1.0:
        table = freq_stats.sample_frequencies(trace, args.num_ids, args.sample_rate, args.seed or 0)
    else:
        table = freq_stats.scan_frequencies(trace, args.num_ids)
    freq_stats.save_table(table, args.out)
    print(f"wrote {args.out}: num_ids={table.num_ids} total_accesses={table.total_accesses}")
    for frac in HEAD_FRACTIONS:
        print(f"head_coverage({frac:g}) = {freq_stats.head_coverage(table, frac):.4f}")
    if args.json_out:
        _write_json(args.json_out, freq_stats.table_to_json(table))
    return 0


def cmd_gen_trace(args: argparse.Namespace) -> int:
    if args.preset:
        trace = workload.gen_preset(
            args.preset, args.num_ids, args.samples, args.seed, features=args.features
        )
    else:
        if args.exponent is None:
            raise UsageError("need --preset or --exponent")
        trace = workload.gen_zipf(
            args.num_ids,
            args.exponent,
            args.samples,
            args.features or 1,
            args.seed,
            shift=args.shift or 0.0,
        )
    workload.save_csv(trace, args.out)
    print(
        f"wrote {args.out}: {trace.num_samples} samples x {trace.features} features, "
        f"num_ids={trace.num_ids}, provenance={trace.provenance}"
    )
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    metrics = simulator.run(config)
    _write_json(args.out, metrics.to_json())
    print(_summary_line(metrics), file=sys.stderr)
    if args.per_batch_csv:
        _per_batch_csv(args.per_batch_csv, [metrics])
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    ratios = [float(r) for r in args.cache_ratios.split(",")]
    results = simulator.sweep(config, ratios)
    doc = {
        "tool_version": TOOL_VERSION,
        "config": config.resolved(),
        "cache_ratios": ratios,
        "runs": [m.to_dict() for m in results],
    }
    _write_json(args.out, json.dumps(doc, indent=2, sort_keys=True))
    for m in results:
        print(_summary_line(m), file=sys.stderr)
    if args.per_batch_csv:
        _per_batch_csv(args.per_batch_csv, results)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    policies = tuple(args.policies.split(","))
    for p in policies:
        if p not in POLICIES:
            raise UsageError(f"unknown policy {p!r}, have {POLICIES}")
    report = simulator.compare_policies(config, policies)
    doc = {
        "tool_version": TOOL_VERSION,
        "config": config.resolved(),
        "ranking": report["ranking"],
        "runs": {name: m.to_dict() for name, m in report["runs"].items()},
    }
    _write_json(args.out, json.dumps(doc, indent=2, sort_keys=True))
    print("ranking (best hit ratio first):", file=sys.stderr)
    for name in report["ranking"]:
        print("  " + _summary_line(report["runs"][name]), file=sys.stderr)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    report = simulator.verify_against_oracle(config)
    doc = report.metrics.to_dict()
    _write_json(args.out, json.dumps(doc, indent=2, sort_keys=True))
    if not report.ok:
        print(f"oracle divergence: {report.first_divergence}", file=sys.stderr)
        return 1
    print("oracle check passed: slow tier equals reference bitwise", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqcache",
        description="Frequency-aware two-tier embedding cache simulator",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="build a frequency table from a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--num-ids", type=int, required=True, dest="num_ids")
    p.add_argument("--sample-rate", type=float, dest="sample_rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="binary statistics file")
    p.add_argument("--json-out", dest="json_out", help="also export as JSON")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gen-trace", help="generate a synthetic skewed trace CSV")
    p.add_argument("--preset", choices=sorted(workload.PRESETS))
    p.add_argument("--exponent", type=float)
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--num-ids", type=int, required=True, dest="num_ids")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--features", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("simulate", help="run the cache simulation once")
    _add_sim_flags(p)
    p.add_argument("--per-batch-csv", dest="per_batch_csv", help="also dump per-batch series as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run once per cache ratio over a shared trace")
    _add_sim_flags(p)
    p.add_argument("--cache-ratios", required=True, dest="cache_ratios",
                   help="comma list, e.g. 0.005,0.015,0.05")
    p.add_argument("--per-batch-csv", dest="per_batch_csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="run several eviction policies on one trace")
    _add_sim_flags(p)
    p.add_argument("--policies", default=",".join(POLICIES))
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="run with the dense oracle attached and compare")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 1
    except Exception as exc:  # runtime failures exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
