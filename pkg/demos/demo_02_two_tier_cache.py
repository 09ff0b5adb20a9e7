"""One batch through the two-tier cache, step by step.

Builds the full stack by hand (reorder map, stores, transmitter, residency
state), warms the fast tier with the hottest rows, then walks through a few
prepare calls, showing hits, misses, and who got evicted and why: the victim
is always the occupied row with the largest rank (statically least frequent)
outside the current batch.
"""

import numpy as np

from freqcache import (
    CacheStack,
    FastTierStore,
    Transmitter,
    build_reorder,
    gen_zipf,
    init_stores,
    scan_frequencies,
)

NUM_IDS, DIM, CAPACITY = 1000, 16, 12

trace = gen_zipf(NUM_IDS, 1.6, 4000, 1, seed=7)
idx_map = build_reorder(scan_frequencies(trace, NUM_IDS))
slow, _, ref = init_stores(NUM_IDS, DIM, CAPACITY / NUM_IDS, init_seed=0, idx_map=idx_map)
fast = FastTierStore(slots=np.zeros((CAPACITY, DIM), dtype=np.float32))
stack = CacheStack(idx_map, slow, fast, Transmitter(), reference=ref, log_events=True)

print(f"fast tier: {CAPACITY} slots over {NUM_IDS} rows "
      f"(cache ratio {CAPACITY / NUM_IDS:.1%})")
rep = stack.warmup(CAPACITY)
print(f"warm-up admitted ranks 0..{CAPACITY - 1}: "
      f"{rep.rows} rows, {rep.bytes} B, {rep.messages} message\n")

rng = np.random.default_rng(3)
for step in range(4):
    ids = rng.choice(NUM_IDS, size=8, replace=True)
    ranks = idx_map.rank_of[np.unique(ids)]
    prep = stack.prepare(ids, batch_seq=step)
    ev = stack.events[-1]
    print(f"batch {step}: ids={sorted(set(ids.tolist()))}")
    print(f"  ranks needed {sorted(ranks.tolist())} -> "
          f"{prep.hits} hits, {prep.misses} misses, {prep.evictions} evictions")
    if ev.evicted_ranks.size:
        print(f"  evicted ranks {ev.evicted_ranks.tolist()} "
              f"(largest unprotected = statically least frequent)")
    rows = stack.gather(prep)
    assert np.array_equal(rows, ref.rows[ids])
    stack.scatter_update(prep, np.full((ids.size, DIM), 0.01, dtype=np.float32))

rep = stack.flush()
print(f"\nflush wrote back {rep.rows} dirty rows; "
      f"slow tier equals dense reference: {stack.first_divergence() is None}")
