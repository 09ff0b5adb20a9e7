"""Scaling across workers: column-wise tensor parallelism vs whole tables.

Column sharding splits the embedding dimension; every shard keeps all rows
for its slice and runs its own cache, making identical residency decisions.
Concatenating the per-shard lookups reproduces the unsharded result bit for
bit. The whole-table placement baseline is what planners typically emit, and
its load balance is at the mercy of the table-size distribution.
"""

import numpy as np

from freqcache import (
    alltoall_volume,
    build_column_stacks,
    build_reorder,
    columnwise_imbalance,
    criteo_like_table_sizes,
    gen_criteo_like,
    partition_columns,
    plan_tables_greedy,
    scan_frequencies,
    sharded_lookup,
    tablewise_imbalance,
)
from freqcache.workload import batches

NUM_IDS, DIM = 20_000, 64

trace = gen_criteo_like(NUM_IDS, 6000, seed=4)
idx_map = build_reorder(scan_frequencies(trace, NUM_IDS))

single = build_column_stacks(idx_map, partition_columns(DIM, 1), DIM, 0.02, init_seed=5)
quad = build_column_stacks(idx_map, partition_columns(DIM, 4), DIM, 0.02, init_seed=5)
for st in single + quad:
    st.warmup(st.capacity)

mismatch = 0
for batch in batches(trace, 200):
    a = sharded_lookup(single, batch.ids, batch.seq)
    b = sharded_lookup(quad, batch.ids, batch.seq)
    mismatch += 0 if np.array_equal(a, b) else 1
print(f"1-shard vs 4-shard lookups over {batch.seq + 1} batches: "
      f"{'bitwise identical' if mismatch == 0 else f'{mismatch} mismatching batches'}")
print(f"per-shard fast-tier bytes: {[st.fast.nbytes for st in quad]} "
      f"(unsharded: {single[0].fast.nbytes})\n")

print("all-to-all activation exchange per step (batch 16384, dim 128):")
for shards in (1, 2, 4, 8):
    rep = alltoall_volume(16384, 128, shards)
    print(f"  {shards} shards: {rep.per_pair_bytes / 2**20:7.3f} MiB per pair, "
          f"{rep.total_bytes / 2**20:7.2f} MiB total")

sizes = criteo_like_table_sizes(scale_divisor=100)
table_stats = tablewise_imbalance(plan_tables_greedy(sizes, 8))
column_stats = columnwise_imbalance(partition_columns(128, 8), sum(sizes))
print(f"\nplacement balance over 8 workers, 26 click-log tables "
      f"({sum(sizes):,} rows total, largest {max(sizes):,}):")
print(f"  table-wise greedy: max/mean load ratio {table_stats.imbalance_ratio:.2f}")
print(f"  column-wise      : max/mean load ratio {column_stats.imbalance_ratio:.2f}")
