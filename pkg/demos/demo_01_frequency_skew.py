"""How skewed are embedding accesses, and what does the reorder map do?

Generates a click-log-shaped trace, scans it for id frequencies, and shows
that a sliver of hot ids carries almost all accesses. The reorder map turns
that skew into geometry: after it, "row index" means "popularity rank".
"""

import numpy as np

from freqcache import build_reorder, gen_criteo_like, head_coverage, scan_frequencies

NUM_IDS = 200_000
NUM_SAMPLES = 400_000

trace = gen_criteo_like(NUM_IDS, NUM_SAMPLES, seed=1)
print(f"trace: {trace.num_samples:,} samples x {trace.features} features "
      f"over {NUM_IDS:,} ids ({trace.samples.size:,} lookups)")

table = scan_frequencies(trace, NUM_IDS)
print(f"observed ids: {table.observed_ids:,} of {NUM_IDS:,} "
      f"({table.observed_ids / NUM_IDS:.1%})\n")

print("share of all accesses captured by the hottest ids:")
for frac in (0.0001, 0.0014, 0.005, 0.015, 0.05, 0.2):
    cov = head_coverage(table, frac)
    k = int(np.ceil(frac * NUM_IDS))
    print(f"  top {frac:>7.4%} ({k:>6,} ids): {cov:6.1%}")

idx_map = build_reorder(table)
hottest = int(np.argmax(table.counts))
print(f"\nhottest raw id is {hottest} with {int(table.counts[hottest]):,} accesses;")
print(f"the reorder map places it at slow-tier row {int(idx_map.rank_of[hottest])}.")
print("raw id carries no popularity information; the row index now does.")
