"""End-to-end trace-driven runs and the experiment tooling around them.

A run wires the whole thing together: scan the trace for frequencies,
reorder the slow tier, warm the fast tier with the hottest rows, then per
batch prepare residency, gather, apply a synthetic update, and account every
transfer. Updates are deterministic functions of (seed, batch, id) so an
independent dense reference store can replay them exactly and the post-flush
slow tier can be compared bit for bit.

Besides the static-frequency LFU the cache is built around, two classic
baselines (runtime-counting LFU and LRU) and a row-wise transfer mode are
available for comparison under identical traces and seeds.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import workload
from .cache_manager import InsufficientEvictable, StaticFreqLfu
from .freq_stats import build_reorder, scan_frequencies
from .sharding import (
    build_column_stacks,
    partition_columns,
    plan_tables_greedy,
    tablewise_imbalance,
)
from .store import fast_capacity
from .transmitter import (
    DEFAULT_BANDWIDTH_BPS,
    DEFAULT_BUFFER_BYTES,
    DEFAULT_LATENCY_S,
    DEFAULT_LOCAL_BANDWIDTH_BPS,
    TO_FAST,
    ChannelModel,
)

TOOL_VERSION = "0.1.0"

POLICIES = ("freq_lfu", "runtime_lfu", "lru", "rowwise_transfer")
SHARD_STRATEGIES = ("column", "table")
TRACE_FORMATS = ("global", "categorical")

# Fields that may differ between reruns of an identical config; everything
# else in a metrics document is covered by the determinism guarantee.
NONDETERMINISTIC_FIELDS = ("created_unix", "elapsed_s")


class RuntimeLfu:
    """Classic LFU over counts observed during the run itself.

    Counts are batch-granularity references (one per unique id per batch),
    start at zero, and warm-up counts as one reference. Ties evict the
    largest rank first, which keeps selection deterministic and comparable
    with the static policy.
    """

    name = "runtime_lfu"

    def __init__(self, num_ids: int):
        self.counts = np.zeros(num_ids, dtype=np.int64)

    def on_reference(self, ranks: np.ndarray, multiplicities: np.ndarray, batch_seq: int) -> None:
        self.counts[ranks] += 1

    def victim_ranks(self, candidate_ranks: np.ndarray, needed: int) -> np.ndarray:
        if needed > candidate_ranks.size:
            raise InsufficientEvictable(
                f"need {needed} victims but only {candidate_ranks.size} evictable rows"
            )
        order = np.lexsort((-candidate_ranks, self.counts[candidate_ranks]))
        return candidate_ranks[order[:needed]]


class LruPolicy:
    """Evict the least recently referenced rank; recency updated every batch,
    ties broken toward the largest rank."""

    name = "lru"

    def __init__(self, num_ids: int):
        self.last_used = np.full(num_ids, np.iinfo(np.int64).min, dtype=np.int64)

    def on_reference(self, ranks: np.ndarray, multiplicities: np.ndarray, batch_seq: int) -> None:
        self.last_used[ranks] = batch_seq

    def victim_ranks(self, candidate_ranks: np.ndarray, needed: int) -> np.ndarray:
        if needed > candidate_ranks.size:
            raise InsufficientEvictable(
                f"need {needed} victims but only {candidate_ranks.size} evictable rows"
            )
        order = np.lexsort((-candidate_ranks, self.last_used[candidate_ranks]))
        return candidate_ranks[order[:needed]]


class RowwiseFreqLfu(StaticFreqLfu):
    """Static-frequency eviction with block buffering disabled; the transfer
    path degrades to one message per row."""

    name = "rowwise_transfer"


def make_policy(name: str, num_ids: int):
    """(policy instance, transmitter mode) for a policy name."""
    if name == "freq_lfu":
        return StaticFreqLfu(), "block"
    if name == "runtime_lfu":
        return RuntimeLfu(num_ids), "block"
    if name == "lru":
        return LruPolicy(num_ids), "block"
    if name == "rowwise_transfer":
        return RowwiseFreqLfu(), "rowwise"
    raise ValueError(f"unknown policy {name!r}, have {POLICIES}")


@dataclass
class SimConfig:
    """Everything a run needs; defaults echo the system's headline settings
    (128-wide rows, 1.5% cache ratio)."""

    # trace source: a named preset, explicit law parameters, or a CSV file
    preset: str | None = "criteo_like"
    exponent: float | None = None
    shift: float = 0.0
    trace_path: str | None = None
    trace_format: str = "global"
    num_ids: int = 1_000_000
    features: int | None = None
    num_batches: int = 100
    batch_size: int = 16384
    # cache geometry and behavior
    embedding_dim: int = 128
    cache_ratio: float = 0.015
    policy: str = "freq_lfu"
    write_back: str = "dirty_only"
    evict_mode: str = "occupancy_aware"
    shard_strategy: str = "column"
    num_shards: int = 1
    # channel and buffer
    buffer_bytes: int = DEFAULT_BUFFER_BYTES
    latency_s: float = DEFAULT_LATENCY_S
    bandwidth_Bps: float = DEFAULT_BANDWIDTH_BPS
    local_bandwidth_Bps: float = DEFAULT_LOCAL_BANDWIDTH_BPS
    # bookkeeping
    seed: int = 0
    track_oracle: bool = False
    log_events: bool = False
    table_sizes: list | None = None

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.shard_strategy not in SHARD_STRATEGIES:
            raise ValueError(f"shard_strategy must be one of {SHARD_STRATEGIES}")
        if self.trace_format not in TRACE_FORMATS:
            raise ValueError(f"trace_format must be one of {TRACE_FORMATS}")
        if self.write_back not in ("dirty_only", "always"):
            raise ValueError(f"write_back must be 'dirty_only' or 'always', got {self.write_back!r}")
        if self.evict_mode not in ("occupancy_aware", "paper_literal"):
            raise ValueError("evict_mode must be 'occupancy_aware' or 'paper_literal'")
        if not (0.0 < self.cache_ratio <= 1.0):
            raise ValueError(f"cache_ratio must be in (0, 1], got {self.cache_ratio}")
        if self.num_ids < 1 or self.embedding_dim < 1:
            raise ValueError("num_ids and embedding_dim must be >= 1")
        if self.batch_size < 1 or self.num_batches < 0:
            raise ValueError("batch_size must be >= 1 and num_batches >= 0")
        if self.num_shards < 1:
            raise ValueError("num_shards must be >= 1")
        if self.trace_path is None and self.preset is None and self.exponent is None:
            raise ValueError("need a trace source: preset, exponent, or trace_path")
        if self.trace_path is None and self.preset is not None and self.preset not in workload.PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}, have {sorted(workload.PRESETS)}")

    def channel(self) -> ChannelModel:
        return ChannelModel(self.latency_s, self.bandwidth_Bps, self.local_bandwidth_Bps)

    def resolved(self) -> dict:
        """The fully explicit config embedded in every report."""
        doc = asdict(self)
        doc["capacity"] = fast_capacity(self.num_ids, self.cache_ratio)
        if self.trace_path is None:
            if self.preset is not None:
                exp, shift = workload.preset_params(self.preset, self.num_ids)
                doc["exponent_resolved"] = exp
                doc["shift_resolved"] = shift
                doc["features_resolved"] = (
                    self.features if self.features is not None else workload.PRESETS[self.preset].features
                )
            else:
                doc["exponent_resolved"] = self.exponent
                doc["shift_resolved"] = self.shift
                doc["features_resolved"] = self.features if self.features is not None else 1
        return doc


def derive_seeds(seed: int) -> dict:
    """Named independent substreams so trace, store init, and updates cannot
    interfere no matter how the run is restructured."""
    children = np.random.SeedSequence(seed).spawn(3)
    names = ("trace", "init", "updates")
    return {n: int(c.generate_state(1, np.uint64)[0]) for n, c in zip(names, children)}


def build_trace(config: SimConfig) -> workload.Trace:
    seeds = derive_seeds(config.seed)
    if config.trace_path is not None:
        if config.trace_format == "global":
            return workload.load_csv(config.trace_path, id_remap="identity", num_ids=config.num_ids)
        return workload.load_csv(config.trace_path)
    num_samples = config.num_batches * config.batch_size
    if config.preset is not None:
        return workload.gen_preset(
            config.preset, config.num_ids, num_samples, seeds["trace"], features=config.features
        )
    return workload.gen_zipf(
        config.num_ids,
        config.exponent,
        num_samples,
        config.features if config.features is not None else 1,
        seeds["trace"],
        shift=config.shift,
    )


# splitmix64-style mixing; all arithmetic wraps mod 2**64 on purpose
_MIX_A = np.uint64(0x9E3779B97F4A7C15)
_MIX_B = np.uint64(0xBF58476D1CE4E5B9)
_MIX_C = np.uint64(0x94D049BB133111EB)


def _hash_unit(values: np.ndarray, salt: int) -> np.ndarray:
    """Deterministic [0, 1) float32 per value, 24-bit resolution."""
    h = values.astype(np.uint64) * _MIX_A + np.uint64(salt % 2**64)
    h ^= h >> np.uint64(30)
    h *= _MIX_B
    h ^= h >> np.uint64(27)
    h *= _MIX_C
    h ^= h >> np.uint64(31)
    return (h >> np.uint64(40)).astype(np.float32) * np.float32(2.0**-24)


def update_column_weights(embedding_dim: int, updates_seed: int) -> np.ndarray:
    """Per-column scale in [0.5, 1.5); sliced per shard, never recomputed."""
    return _hash_unit(np.arange(embedding_dim), updates_seed * 3 + 1) + np.float32(0.5)


def update_row_scalars(unique_ids: np.ndarray, counts: np.ndarray, batch_seq: int, updates_seed: int) -> np.ndarray:
    """Per-unique-id update scalar for one batch, duplicates pre-aggregated.

    The per-occurrence delta for (batch, id) is hash(id, batch) - 0.5 scaled
    by the column weights; occurrences simply multiply the scalar, keeping
    the arithmetic identical between the cache path and the dense oracle.
    """
    salt = (batch_seq + 1) * 0x9E3779B97F4A7C15 + updates_seed
    g = _hash_unit(unique_ids, salt) - np.float32(0.5)
    return g * counts.astype(np.float32)


@dataclass
class RunMetrics:
    """Per-batch series plus the cumulative summary, self-describing."""

    config: dict
    per_batch: dict
    summary: dict
    per_shard: list
    tool_version: str = TOOL_VERSION
    created_unix: float = 0.0
    elapsed_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "tool_version": self.tool_version,
            "created_unix": self.created_unix,
            "elapsed_s": self.elapsed_s,
            "config": self.config,
            "per_batch": self.per_batch,
            "summary": self.summary,
            "per_shard": self.per_shard,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def determinism_json(self) -> str:
        """Canonical JSON with the wall-clock fields removed; identical for
        identical configs and seeds."""
        doc = self.to_dict()
        for key in NONDETERMINISTIC_FIELDS:
            doc.pop(key, None)
        return json.dumps(doc, sort_keys=True)


@dataclass
class OracleReport:
    ok: bool
    first_divergence: dict | None
    metrics: RunMetrics
    events_per_shard: list
    capacity: int
    num_ids: int


def _build_stacks(config: SimConfig, idx_map, seeds: dict) -> list:
    if config.shard_strategy == "column" and config.num_shards > 1:
        plan = partition_columns(config.embedding_dim, config.num_shards)
    else:
        plan = partition_columns(config.embedding_dim, 1)
    _, mode = make_policy(config.policy, config.num_ids)
    return build_column_stacks(
        idx_map,
        plan,
        config.embedding_dim,
        config.cache_ratio,
        seeds["init"],
        channel=config.channel(),
        buffer_bytes=config.buffer_bytes,
        transmitter_mode=mode,
        policy_factory=lambda: make_policy(config.policy, config.num_ids)[0],
        write_back=config.write_back,
        evict_mode=config.evict_mode,
        log_events=config.log_events,
        with_reference=config.track_oracle,
    )


def _report_tally(tally: dict, reports) -> None:
    for rep in reports:
        side = "to_fast" if rep.direction == TO_FAST else "to_slow"
        tally[f"rows_{side}"] += rep.rows
        tally[f"bytes_{side}"] += rep.bytes
        tally[f"messages_{side}"] += rep.messages
        tally["modeled_time_s"] += rep.modeled_time_s


def _empty_tally() -> dict:
    return {
        "rows_to_fast": 0,
        "bytes_to_fast": 0,
        "messages_to_fast": 0,
        "rows_to_slow": 0,
        "bytes_to_slow": 0,
        "messages_to_slow": 0,
        "modeled_time_s": 0.0,
    }


def _run_stacks(config: SimConfig, trace: workload.Trace | None):
    """The full run; returns (metrics, stacks) so callers can inspect state."""
    t0 = time.perf_counter()
    config.validate()
    if trace is None:
        trace = build_trace(config)
    if trace.num_ids != config.num_ids:
        config = replace(config, num_ids=trace.num_ids)
    seeds = derive_seeds(config.seed)

    freq = scan_frequencies(trace, config.num_ids)
    idx_map = build_reorder(freq)
    stacks = _build_stacks(config, idx_map, seeds)
    capacity = stacks[0].capacity

    table_placement = None
    if config.shard_strategy == "table":
        sizes = config.table_sizes if config.table_sizes is not None else trace.table_sizes
        if sizes is None:
            raise ValueError(
                "table strategy needs per-feature table sizes; load a categorical "
                "CSV trace or set config.table_sizes"
            )
        plan = plan_tables_greedy(sizes, config.num_shards)
        stats = tablewise_imbalance(plan)
        table_placement = {
            "num_shards": config.num_shards,
            "assignment": plan.assignment.tolist(),
            "per_shard_rows": stats.per_shard_rows.tolist(),
            "imbalance_ratio": stats.imbalance_ratio,
            "per_shard_full_residency_bytes": [
                int(r) * config.embedding_dim * 4 for r in stats.per_shard_rows
            ],
        }

    shard_tallies = [
        {"warmup": _empty_tally(), "batch_phase": _empty_tally(), "flush": _empty_tally()}
        for _ in stacks
    ]
    warmup_tally = _empty_tally()
    for i, st in enumerate(stacks):
        rep = st.warmup(capacity)
        _report_tally(warmup_tally, [rep])
        _report_tally(shard_tallies[i]["warmup"], [rep])

    col_w = update_column_weights(config.embedding_dim, seeds["updates"])
    per_batch = {
        "unique": [],
        "hits": [],
        "misses": [],
        "evictions": [],
        "hit_ratio": [],
        "bytes_to_fast": [],
        "bytes_to_slow": [],
        "rows_to_fast": [],
        "rows_to_slow": [],
        "messages": [],
        "modeled_transfer_time_s": [],
    }
    batch_tally = _empty_tally()
    counters = {"prepare_calls": 0, "ids_processed": 0, "unique_ids_processed": 0}
    n_batches = 0

    for batch in workload.batches(trace, config.batch_size):
        n_batches += 1
        try:
            preps = [st.prepare(batch.ids, batch.seq) for st in stacks]
        except Exception as exc:
            raise type(exc)(f"batch {batch.seq}: {exc}") from exc
        p0 = preps[0]
        for p in preps[1:]:
            # column shards see the same ids over the same ranks; anything
            # else is a sharding bug
            assert p.hits == p0.hits and p.misses == p0.misses and p.evictions == p0.evictions

        if p0.unique_ids.size:
            g = update_row_scalars(p0.unique_ids, p0.unique_counts, batch.seq, seeds["updates"])
            for st, prep in zip(stacks, preps):
                _ = st.gather_unique(prep)  # the simulated lookup itself
                lo, hi = st.col_range
                st.apply_unique_update(prep, g[:, None] * col_w[lo:hi][None, :])

        step = _empty_tally()
        for i, prep in enumerate(preps):
            _report_tally(step, prep.transfer_reports)
            _report_tally(shard_tallies[i]["batch_phase"], prep.transfer_reports)
            counters["prepare_calls"] += 1
        counters["ids_processed"] += int(batch.ids.size)
        counters["unique_ids_processed"] += int(p0.unique_ids.size)

        per_batch["unique"].append(int(p0.unique_ids.size))
        per_batch["hits"].append(p0.hits)
        per_batch["misses"].append(p0.misses)
        per_batch["evictions"].append(p0.evictions)
        per_batch["hit_ratio"].append(p0.hits / max(1, p0.unique_ids.size))
        per_batch["bytes_to_fast"].append(step["bytes_to_fast"])
        per_batch["bytes_to_slow"].append(step["bytes_to_slow"])
        per_batch["rows_to_fast"].append(step["rows_to_fast"])
        per_batch["rows_to_slow"].append(step["rows_to_slow"])
        per_batch["messages"].append(step["messages_to_fast"] + step["messages_to_slow"])
        per_batch["modeled_transfer_time_s"].append(step["modeled_time_s"])
        for key in batch_tally:
            batch_tally[key] += step[key]

    flush_tally = _empty_tally()
    for i, st in enumerate(stacks):
        rep = st.flush()
        _report_tally(flush_tally, [rep])
        _report_tally(shard_tallies[i]["flush"], [rep])

    oracle = {"checked": bool(config.track_oracle), "ok": None, "first_divergence": None}
    if config.track_oracle:
        divergence = None
        for st in stacks:
            divergence = st.first_divergence()
            if divergence is not None:
                break
        oracle["ok"] = divergence is None
        oracle["first_divergence"] = divergence

    steady_from = n_batches // 10
    hits_total = sum(per_batch["hits"])
    unique_total = sum(per_batch["unique"])
    steady_hits = sum(per_batch["hits"][steady_from:])
    steady_unique = sum(per_batch["unique"][steady_from:])
    per_shard = []
    for i, st in enumerate(stacks):
        mem = st.memory_report()
        per_shard.append({"shard": i, "col_range": list(st.col_range), **mem, **shard_tallies[i]})

    summary = {
        "batches": n_batches,
        "capacity": capacity,
        "unique_refs": unique_total,
        "hits": hits_total,
        "misses": sum(per_batch["misses"]),
        "evictions": sum(per_batch["evictions"]),
        "hit_ratio": hits_total / max(1, unique_total),
        "steady_state_hit_ratio": steady_hits / max(1, steady_unique),
        "steady_state_from_batch": steady_from,
        "warmup": warmup_tally,
        "batch_phase": batch_tally,
        "flush": flush_tally,
        "total_modeled_transfer_time_s": (
            warmup_tally["modeled_time_s"]
            + batch_tally["modeled_time_s"]
            + flush_tally["modeled_time_s"]
        ),
        "peak_fast_tier_bytes": {
            "fast_rows_bytes": sum(s["fast_rows_bytes"] for s in per_shard),
            "buffer_bytes": sum(s["buffer_bytes"] for s in per_shard),
            "index_bytes": sum(s["index_bytes"] for s in per_shard),
            "total": sum(s["peak_fast_tier_bytes"] for s in per_shard),
        },
        "fast_row_fraction_of_full_residency": capacity / config.num_ids,
        "overhead_counters": counters,
        "oracle": oracle,
    }
    if table_placement is not None:
        summary["table_placement"] = table_placement

    metrics = RunMetrics(
        config=config.resolved(),
        per_batch=per_batch,
        summary=summary,
        per_shard=per_shard,
        created_unix=time.time(),
        elapsed_s=time.perf_counter() - t0,
    )
    return metrics, stacks


def run(config: SimConfig, trace: workload.Trace | None = None) -> RunMetrics:
    """Simulate the whole trace; deterministic for a given config and seed."""
    metrics, _ = _run_stacks(config, trace)
    return metrics


def sweep(config: SimConfig, cache_ratios) -> list:
    """One run per cache ratio over the identical trace and seed."""
    trace = build_trace(config)
    out = []
    for ratio in cache_ratios:
        out.append(run(replace(config, cache_ratio=float(ratio)), trace))
    return out


def compare_policies(config: SimConfig, policies=POLICIES) -> dict:
    """Identical trace and seed across policies; ranked by hit ratio, then
    by modeled transfer time."""
    trace = build_trace(config)
    runs = {}
    for name in policies:
        runs[name] = run(replace(config, policy=name), trace)
    ranking = sorted(
        runs,
        key=lambda p: (
            -runs[p].summary["hit_ratio"],
            runs[p].summary["total_modeled_transfer_time_s"],
        ),
    )
    return {"runs": runs, "ranking": ranking}


def verify_against_oracle(config: SimConfig, trace: workload.Trace | None = None) -> OracleReport:
    """Run with the dense reference attached and compare after the flush."""
    config = replace(config, track_oracle=True, log_events=True)
    metrics, stacks = _run_stacks(config, trace)
    return OracleReport(
        ok=bool(metrics.summary["oracle"]["ok"]),
        first_divergence=metrics.summary["oracle"]["first_divergence"],
        metrics=metrics,
        events_per_shard=[st.events for st in stacks],
        capacity=stacks[0].capacity,
        num_ids=config.num_ids,
    )


def replay_eviction_law(events: list, num_ids: int) -> list:
    """Re-derive every eviction from the event log and report violations.

    For the static-frequency policies the law is exact: the evicted set must
    equal the ``needed`` largest ranks among occupied-minus-protected. The
    runtime policies are replayed against their own bookkeeping, rebuilt
    from the same events. Protected ranks may never be evicted, under any
    policy.
    """
    if not events:
        return []
    policy_name = events[0].policy
    counts = np.zeros(num_ids, dtype=np.int64)
    last_used = np.full(num_ids, np.iinfo(np.int64).min, dtype=np.int64)
    occupied = np.zeros(num_ids, dtype=bool)
    violations = []

    for idx, ev in enumerate(events):
        referenced = ev.admitted_ranks if ev.batch_seq < 0 else ev.protected_ranks
        counts[referenced] += 1
        last_used[referenced] = ev.batch_seq

        if ev.evicted_ranks.size:
            protected = set(ev.protected_ranks.tolist())
            if protected & set(ev.evicted_ranks.tolist()):
                violations.append({"event": idx, "kind": "protected_evicted"})
            candidates = np.flatnonzero(occupied)
            candidates = candidates[~np.isin(candidates, ev.protected_ranks, assume_unique=True)]
            needed = ev.evicted_ranks.size
            if policy_name in ("freq_lfu", "rowwise_transfer"):
                expect = np.sort(candidates)[-needed:]
            elif policy_name == "runtime_lfu":
                order = np.lexsort((-candidates, counts[candidates]))
                expect = candidates[order[:needed]]
            elif policy_name == "lru":
                order = np.lexsort((-candidates, last_used[candidates]))
                expect = candidates[order[:needed]]
            else:
                raise ValueError(f"cannot replay unknown policy {policy_name!r}")
            if not np.array_equal(np.sort(expect), np.sort(ev.evicted_ranks)):
                violations.append(
                    {
                        "event": idx,
                        "kind": "wrong_victims",
                        "expected": np.sort(expect).tolist(),
                        "got": np.sort(ev.evicted_ranks).tolist(),
                    }
                )
            occupied[ev.evicted_ranks] = False
        occupied[ev.admitted_ranks] = True
    return violations
