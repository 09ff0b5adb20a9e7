"""Scaling the cached embedding across workers, at desk scale.

Column-wise 1D tensor parallelism splits the embedding dimension into
near-equal contiguous slices; every shard then holds all rows for its slice
and runs its own private cache stack, making the same residency decisions as
every other shard. The all-to-all exchange that stitches per-shard activation
slices back together is accounted in bytes, not actually communicated. The
table-wise placement (one whole table per worker, the usual planner output)
is kept as a baseline for its load-imbalance behavior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cache_manager import CacheStack
from .freq_stats import IdxMap
from .store import FastTierStore, ReferenceStore, SlowTierStore, fast_capacity, init_reference_rows
from .transmitter import ChannelModel, TransferBuffer, Transmitter

# Per-feature categorical cardinalities of the Criteo Kaggle click log after
# the standard preprocessing; 26 tables totalling 33,762,577 rows, dominated
# by a handful of giant tables.
CRITEO_KAGGLE_TABLE_SIZES = (
    1460, 583, 10131227, 2202608, 305, 24, 12517, 633, 3, 93145, 5683,
    8351593, 3194, 27, 14992, 5461306, 10, 5652, 2173, 4, 7046547, 18,
    15, 286181, 105, 142572,
)


@dataclass(frozen=True)
class ColumnShardPlan:
    """Contiguous [start, end) column ranges, one per shard, covering the
    embedding dimension exactly with widths differing by at most one."""

    num_shards: int
    ranges: tuple

    @property
    def widths(self) -> list:
        return [e - s for s, e in self.ranges]


def partition_columns(embedding_dim: int, num_shards: int) -> ColumnShardPlan:
    if not (1 <= num_shards <= embedding_dim):
        raise ValueError(
            f"num_shards must be in [1, embedding_dim={embedding_dim}], got {num_shards}"
        )
    base = embedding_dim // num_shards
    extra = embedding_dim % num_shards
    ranges = []
    start = 0
    for s in range(num_shards):
        width = base + (1 if s < extra else 0)
        ranges.append((start, start + width))
        start += width
    return ColumnShardPlan(num_shards=num_shards, ranges=tuple(ranges))


def build_column_stacks(
    idx_map: IdxMap,
    plan: ColumnShardPlan,
    embedding_dim: int,
    cache_ratio: float,
    init_seed: int,
    channel: ChannelModel | None = None,
    buffer_bytes: int | None = None,
    transmitter_mode: str = "block",
    policy_factory=None,
    write_back: str = "dirty_only",
    evict_mode: str = "occupancy_aware",
    log_events: bool = False,
    with_reference: bool = False,
) -> list:
    """One private CacheStack per shard over its column slice.

    All shards see the same full-width seeded values sliced by column, so a
    sharded run is bitwise comparable with an unsharded one.
    """
    if plan.ranges[-1][1] != embedding_dim:
        raise ValueError(f"plan covers {plan.ranges[-1][1]} columns, table has {embedding_dim}")
    num_ids = idx_map.num_ids
    full = init_reference_rows(num_ids, embedding_dim, init_seed)
    capacity = fast_capacity(num_ids, cache_ratio)
    stacks = []
    for start, end in plan.ranges:
        ref_rows = np.ascontiguousarray(full[:, start:end])
        slow = SlowTierStore(rows=ref_rows[idx_map.id_of])
        fast = FastTierStore(slots=np.zeros((capacity, end - start), dtype=ref_rows.dtype))
        tx = Transmitter(
            buffer=TransferBuffer(buffer_bytes) if buffer_bytes else TransferBuffer(),
            channel=channel if channel is not None else ChannelModel(),
            mode=transmitter_mode,
        )
        stacks.append(
            CacheStack(
                idx_map=idx_map,
                slow=slow,
                fast=fast,
                transmitter=tx,
                reference=ReferenceStore(rows=ref_rows) if with_reference else None,
                policy=policy_factory() if policy_factory is not None else None,
                write_back=write_back,
                evict_mode=evict_mode,
                log_events=log_events,
                col_range=(start, end),
            )
        )
    return stacks


def sharded_lookup(stacks: list, ids, batch_seq: int = 0) -> np.ndarray:
    """Prepare and gather on every shard; concatenated along the column axis
    this equals the unsharded gather bitwise."""
    preps = [stack.prepare(ids, batch_seq) for stack in stacks]
    return np.concatenate([stack.gather(prep) for stack, prep in zip(stacks, preps)], axis=1)


@dataclass(frozen=True)
class AllToAllReport:
    """Activation exchange volume when switching the embedding output from
    tensor parallel to data parallel; accounting only."""

    num_shards: int
    batch_size: int
    embedding_dim: int
    per_pair_bytes: float
    total_bytes: float


def alltoall_volume(batch_size: int, embedding_dim: int, num_shards: int) -> AllToAllReport:
    """Bytes each shard sends each other shard for one activation step.

    Every shard holds its column slice for the whole batch and needs the full
    width for its 1/N share of samples, so each ordered pair exchanges
    (batch/N) x (dim/N) float32 values; totals grow as (N-1)/N.
    """
    if num_shards < 1 or batch_size < 0 or embedding_dim < 1:
        raise ValueError("invalid all-to-all shape")
    if num_shards == 1:
        return AllToAllReport(1, batch_size, embedding_dim, 0.0, 0.0)
    per_pair = (batch_size / num_shards) * (embedding_dim / num_shards) * 4.0
    total = per_pair * num_shards * (num_shards - 1)
    return AllToAllReport(num_shards, batch_size, embedding_dim, per_pair, total)


@dataclass(frozen=True)
class TableShardPlan:
    """Whole-table placement: table i lives on shard assignment[i]."""

    assignment: np.ndarray
    table_sizes: np.ndarray
    num_shards: int


def plan_tables_greedy(table_sizes, num_shards: int) -> TableShardPlan:
    """Largest-first greedy packing: biggest remaining table onto the least
    loaded shard. A reproducible stand-in for planner search."""
    sizes = np.asarray(table_sizes, dtype=np.int64)
    if sizes.ndim != 1 or sizes.size == 0:
        raise ValueError("table_sizes must be a non-empty 1D sequence")
    if num_shards < 1:
        raise ValueError("num_shards must be >= 1")
    assignment = np.zeros(sizes.size, dtype=np.int64)
    loads = np.zeros(num_shards, dtype=np.int64)
    for t in np.argsort(-sizes, kind="stable"):
        shard = int(np.argmin(loads))
        assignment[t] = shard
        loads[shard] += sizes[t]
    return TableShardPlan(assignment=assignment, table_sizes=sizes, num_shards=num_shards)


@dataclass(frozen=True)
class ShardLoadStats:
    per_shard_rows: np.ndarray
    max_rows: int
    mean_rows: float
    imbalance_ratio: float


def tablewise_imbalance(plan: TableShardPlan) -> ShardLoadStats:
    """Row-load spread of a table-wise placement; ratio 1.0 is perfect."""
    loads = np.bincount(plan.assignment, weights=plan.table_sizes, minlength=plan.num_shards)
    loads = loads.astype(np.int64)
    mean = float(loads.mean())
    return ShardLoadStats(
        per_shard_rows=loads,
        max_rows=int(loads.max()),
        mean_rows=mean,
        imbalance_ratio=float(loads.max() / mean) if mean > 0 else 1.0,
    )


def columnwise_imbalance(plan: ColumnShardPlan, num_rows: int) -> ShardLoadStats:
    """Same statistic for a column split: load is rows x slice width."""
    loads = np.asarray([num_rows * w for w in plan.widths], dtype=np.int64)
    mean = float(loads.mean())
    return ShardLoadStats(
        per_shard_rows=loads,
        max_rows=int(loads.max()),
        mean_rows=mean,
        imbalance_ratio=float(loads.max() / mean) if mean > 0 else 1.0,
    )


def criteo_like_table_sizes(scale_divisor: int = 1) -> list:
    """The Criteo Kaggle per-table row counts, optionally scaled down."""
    if scale_divisor < 1:
        raise ValueError("scale_divisor must be >= 1")
    return [max(1, round(s / scale_divisor)) for s in CRITEO_KAGGLE_TABLE_SIZES]
