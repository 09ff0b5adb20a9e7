"""freqcache: a frequency-aware two-tier software cache for large embedding
tables, as a deterministic trace-driven simulator.

The slow tier holds every embedding row reordered by dataset id frequency;
the small fast tier holds the active subset, managed per batch with
static-frequency LFU eviction and in-batch protection; a bounded staging
buffer batches scattered rows into large block transfers. Workload
generators, sharding models, and policy baselines round out the toolkit.
"""

from .cache_manager import (
    ABSENT,
    EMPTY,
    BatchExceedsCapacity,
    CacheStack,
    CacheState,
    InsufficientEvictable,
    InsufficientFreeSlots,
    PrepareResult,
    StaticFreqLfu,
    flush,
    gather,
    mark_dirty,
    prepare_cache,
    scatter_update,
    select_evictions,
    warmup,
)
from .freq_stats import (
    FrequencyTable,
    IdxMap,
    build_reorder,
    head_coverage,
    sample_frequencies,
    scan_frequencies,
)
from .sharding import (
    AllToAllReport,
    ColumnShardPlan,
    TableShardPlan,
    alltoall_volume,
    build_column_stacks,
    columnwise_imbalance,
    criteo_like_table_sizes,
    partition_columns,
    plan_tables_greedy,
    sharded_lookup,
    tablewise_imbalance,
)
from .simulator import (
    LruPolicy,
    OracleReport,
    RunMetrics,
    RuntimeLfu,
    SimConfig,
    compare_policies,
    replay_eviction_law,
    run,
    sweep,
    verify_against_oracle,
)
from .store import (
    FastTierStore,
    ReferenceStore,
    SlowTierStore,
    fast_capacity,
    init_stores,
)
from .transmitter import (
    BufferTooSmall,
    ChannelModel,
    TransferBuffer,
    TransferReport,
    Transmitter,
    chunk_plan,
    rowwise_baseline_report,
)
from .workload import (
    Batch,
    Trace,
    batches,
    calibrate_exponent,
    gen_avazu_like,
    gen_criteo_like,
    gen_preset,
    gen_zipf,
    load_csv,
    save_csv,
    zipf_pmf,
)

__version__ = "0.1.0"
