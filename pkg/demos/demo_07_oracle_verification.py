"""Trust, then verify: bitwise oracle equivalence and eviction-law replay.

Every run can carry a dense reference store that applies the same updates by
raw id, no cache anywhere. After the final flush the frequency-reordered
slow tier must match it exactly, bit for bit, and the event log must replay
to the letter of the eviction law: victims are always the largest-rank
occupied rows outside the protected batch.
"""

from freqcache import SimConfig, replay_eviction_law, verify_against_oracle

config = SimConfig(
    preset=None,
    exponent=1.3,
    num_ids=50_000,
    features=4,
    num_batches=300,
    batch_size=64,
    embedding_dim=32,
    cache_ratio=0.01,
    policy="freq_lfu",
    write_back="dirty_only",
    seed=123,
)
report = verify_against_oracle(config)

s = report.metrics.summary
print(f"{s['batches']} batches, {s['misses']:,} misses, {s['evictions']:,} evictions, "
      f"hit ratio {s['hit_ratio']:.4f}")
print(f"oracle: slow tier equals dense reference bitwise -> {report.ok}")

events = report.events_per_shard[0]
violations = replay_eviction_law(events, report.num_ids)
evicting = sum(1 for ev in events if ev.evicted_ranks.size)
print(f"replayed {len(events)} events ({evicting} with evictions): "
      f"{len(violations)} violations")

print("\nsame run, write-back on every eviction instead of dirty-only:")
from dataclasses import replace

always = verify_against_oracle(replace(config, write_back="always"))
a, d = always.metrics.summary, report.metrics.summary
print(f"  rows written back: {a['batch_phase']['rows_to_slow']:,} vs "
      f"{d['batch_phase']['rows_to_slow']:,} (dirty-only)")
print(f"  oracle still exact -> {always.ok}")
