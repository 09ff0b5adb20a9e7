"""Fast-tier residency management for one batch at a time.

The entry point is :func:`prepare_cache`: deduplicate the batch ids, map them
to slow-tier ranks, admit whatever is missing, and when the tier is full
evict victims chosen by the eviction policy, never touching ranks the current
batch needs. The default policy is the static-frequency LFU: because the slow
tier is ordered by dataset frequency, "least frequently used" is simply
"largest rank", so victim selection needs no runtime counters at all.

Three index spaces meet here and are easy to confuse: raw ids (what traces
contain), slow-tier ranks (idx_map output, the cache's currency), and fast
tier slots. Variables are named by their space throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .freq_stats import IdxMap
from .store import FastTierStore, SlowTierStore
from .transmitter import TO_SLOW, Transmitter, TransferReport

# Explicit empty/absent markers for the two residency arrays. Kept negative
# so valid ranks and slots (always >= 0) can never collide with them.
EMPTY = -1   # slot_to_rank: slot holds no row
ABSENT = -1  # rank_to_slot: rank not resident

WRITE_BACK_MODES = ("dirty_only", "always")
EVICT_MODES = ("occupancy_aware", "paper_literal")


class BatchExceedsCapacity(ValueError):
    """More unique ids in one batch than the fast tier has slots.

    There is no partial-residency path; the cache ratio is too small for
    this workload's batches.
    """


class InsufficientEvictable(RuntimeError):
    """Eviction needs more slots than there are unprotected occupied ones."""


class InsufficientFreeSlots(RuntimeError):
    """Admission ran out of free slots.

    Unreachable in occupancy_aware mode; in paper_literal mode the eviction
    count ignores current occupancy and under-evicts once the tier fills up.
    """


class StaticFreqLfu:
    """Evict the occupied, unprotected rows with the largest ranks.

    Rank order equals static dataset-frequency order, so this is the LFU
    of the precomputed statistics; it keeps no per-access state.
    """

    name = "freq_lfu"

    def on_reference(self, ranks: np.ndarray, multiplicities: np.ndarray, batch_seq: int) -> None:
        pass

    def victim_ranks(self, candidate_ranks: np.ndarray, needed: int) -> np.ndarray:
        if needed > candidate_ranks.size:
            raise InsufficientEvictable(
                f"need {needed} victims but only {candidate_ranks.size} evictable rows"
            )
        if needed == 0:
            return np.empty(0, dtype=candidate_ranks.dtype)
        top = np.partition(candidate_ranks, candidate_ranks.size - needed)[-needed:]
        return np.sort(top)[::-1]


@dataclass
class CacheEvent:
    """One prepare/warmup decision, enough to replay eviction legality."""

    batch_seq: int
    policy: str
    protected_ranks: np.ndarray
    evicted_ranks: np.ndarray
    admitted_ranks: np.ndarray
    hits: int
    misses: int

    def to_json_dict(self) -> dict:
        return {
            "batch_seq": self.batch_seq,
            "policy": self.policy,
            "protected": self.protected_ranks.tolist(),
            "evicted": self.evicted_ranks.tolist(),
            "admitted": self.admitted_ranks.tolist(),
            "hits": self.hits,
            "misses": self.misses,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CacheEvent":
        return cls(
            batch_seq=int(doc["batch_seq"]),
            policy=doc["policy"],
            protected_ranks=np.asarray(doc["protected"], dtype=np.int64),
            evicted_ranks=np.asarray(doc["evicted"], dtype=np.int64),
            admitted_ranks=np.asarray(doc["admitted"], dtype=np.int64),
            hits=int(doc["hits"]),
            misses=int(doc["misses"]),
        )


def write_events_jsonl(events, path) -> None:
    """Append-only event log, one JSON object per line, for offline replay."""
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_json_dict()) + "\n")


def read_events_jsonl(path) -> list:
    with open(path) as fh:
        return [CacheEvent.from_json_dict(json.loads(line)) for line in fh if line.strip()]


class CacheState:
    """Slot table of the fast tier plus its exact inverse membership index."""

    def __init__(self, capacity: int, num_ids: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if capacity > num_ids:
            raise ValueError(f"capacity {capacity} exceeds num_ids {num_ids}")
        self.capacity = int(capacity)
        self.num_ids = int(num_ids)
        self.slot_to_rank = np.full(capacity, EMPTY, dtype=np.int64)
        self.rank_to_slot = np.full(num_ids, ABSENT, dtype=np.int32)
        self.dirty = np.zeros(capacity, dtype=bool)
        self.free_count = int(capacity)

    @property
    def occupied_count(self) -> int:
        return self.capacity - self.free_count

    def occupied_slots(self) -> np.ndarray:
        return np.flatnonzero(self.slot_to_rank != EMPTY)

    def occupied_ranks(self) -> np.ndarray:
        return self.slot_to_rank[self.slot_to_rank != EMPTY]

    def free_slots(self) -> np.ndarray:
        return np.flatnonzero(self.slot_to_rank == EMPTY)

    @property
    def index_bytes(self) -> int:
        return int(self.slot_to_rank.nbytes + self.rank_to_slot.nbytes + self.dirty.nbytes)

    def check_invariants(self) -> None:
        occupied = self.slot_to_rank != EMPTY
        ranks = self.slot_to_rank[occupied]
        if np.unique(ranks).size != ranks.size:
            raise AssertionError("a rank occupies more than one slot")
        if self.free_count != int(np.count_nonzero(~occupied)):
            raise AssertionError("free_count out of sync with slot table")
        slots = np.flatnonzero(occupied)
        if not np.array_equal(self.rank_to_slot[ranks], slots.astype(self.rank_to_slot.dtype)):
            raise AssertionError("rank_to_slot is not the inverse of slot_to_rank")
        resident = np.flatnonzero(self.rank_to_slot != ABSENT)
        if resident.size != ranks.size:
            raise AssertionError("rank_to_slot has entries for non-occupied ranks")


@dataclass
class PrepareResult:
    """Residency outcome for one batch: every unique id now has a slot."""

    ids: np.ndarray
    unique_ids: np.ndarray
    unique_ranks: np.ndarray
    unique_counts: np.ndarray
    unique_slots: np.ndarray
    hits: int
    misses: int
    evictions: int
    transfer_reports: list = field(default_factory=list)

    def slots_for_ids(self) -> np.ndarray:
        """Slot of every id in original batch order, duplicates repeated."""
        pos = np.searchsorted(self.unique_ids, self.ids)
        return self.unique_slots[pos]

    def slot_of(self) -> dict:
        """Raw id -> slot for every unique id in the batch."""
        return {int(i): int(s) for i, s in zip(self.unique_ids, self.unique_slots)}


def _sorted_membership(sorted_ref: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Boolean mask of which ``values`` appear in the sorted array."""
    if sorted_ref.size == 0:
        return np.zeros(values.shape, dtype=bool)
    pos = np.searchsorted(sorted_ref, values).clip(max=sorted_ref.size - 1)
    return sorted_ref[pos] == values


def select_evictions(state: CacheState, needed: int, protected_ranks) -> np.ndarray:
    """Slots of the ``needed`` largest-rank occupied rows outside the
    protected set; the static-frequency LFU choice."""
    if needed < 0:
        raise ValueError("needed must be >= 0")
    if needed == 0:
        return np.empty(0, dtype=np.int64)
    protected = np.sort(np.asarray(protected_ranks, dtype=np.int64).reshape(-1))
    occupied = state.occupied_ranks()
    candidates = occupied[~_sorted_membership(protected, occupied)]
    victims = StaticFreqLfu().victim_ranks(candidates, needed)
    return state.rank_to_slot[victims].astype(np.int64)


def _write_back(
    state: CacheState,
    victim_slots: np.ndarray,
    slow: SlowTierStore,
    fast: FastTierStore,
    transmitter: Transmitter,
    write_back: str,
) -> TransferReport:
    if write_back == "dirty_only":
        victim_slots = victim_slots[state.dirty[victim_slots]]
    if victim_slots.size == 0:
        return TransferReport.empty(TO_SLOW)
    return transmitter.move_to_slow(fast, slow, victim_slots, state.slot_to_rank[victim_slots])


def prepare_cache(
    state: CacheState,
    idx_map: IdxMap,
    ids,
    transmitter: Transmitter,
    slow: SlowTierStore,
    fast: FastTierStore,
    *,
    policy=None,
    write_back: str = "dirty_only",
    evict_mode: str = "occupancy_aware",
    batch_seq: int = 0,
    event_log: list | None = None,
) -> PrepareResult:
    """Make every id of the batch resident and return its slot assignment.

    Mirrors the framework's per-iteration cache pass: dedupe the ids, map
    them to ranks, find the missing subset through the inverse membership
    index, write back and evict victims if the free slots do not cover the
    misses, then admit the missing rows from the slow tier. Ranks referenced
    by this batch are protected from eviction for the whole call.

    evict_mode "occupancy_aware" evicts max(0, misses - free); the
    "paper_literal" variant reproduces the published formula
    (unique_ids - capacity, which is never positive for a legal batch) and
    exists to demonstrate that it under-evicts once the tier is full.
    """
    if write_back not in WRITE_BACK_MODES:
        raise ValueError(f"write_back must be one of {WRITE_BACK_MODES}, got {write_back!r}")
    if evict_mode not in EVICT_MODES:
        raise ValueError(f"evict_mode must be one of {EVICT_MODES}, got {evict_mode!r}")
    if policy is None:
        policy = StaticFreqLfu()

    ids = np.asarray(ids).reshape(-1)
    if ids.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return PrepareResult(ids, empty, empty, empty, empty, 0, 0, 0, [])
    lo, hi = int(ids.min()), int(ids.max())
    if lo < 0 or hi >= idx_map.num_ids:
        bad = lo if lo < 0 else hi
        raise ValueError(f"id out of range: {bad} not in [0, {idx_map.num_ids})")

    unique_ids, counts = np.unique(ids, return_counts=True)
    if unique_ids.size > state.capacity:
        raise BatchExceedsCapacity(
            f"batch has {unique_ids.size} unique ids but the fast tier holds "
            f"{state.capacity}; the cache ratio is too small for this batch"
        )
    unique_ranks = idx_map.rank_of[unique_ids].astype(np.int64)
    policy.on_reference(unique_ranks, counts, batch_seq)

    slots = state.rank_to_slot[unique_ranks].astype(np.int64)
    miss_mask = slots == ABSENT
    misses = int(miss_mask.sum())
    hits = int(unique_ids.size - misses)
    reports: list[TransferReport] = []
    evicted_ranks = np.empty(0, dtype=np.int64)

    if evict_mode == "occupancy_aware":
        needed = max(0, misses - state.free_count)
    else:
        needed = max(0, int(unique_ids.size) - state.capacity)

    if needed:
        protected = np.sort(unique_ranks)
        occupied = state.occupied_ranks()
        candidates = occupied[~_sorted_membership(protected, occupied)]
        evicted_ranks = policy.victim_ranks(candidates, needed)
        victim_slots = state.rank_to_slot[evicted_ranks].astype(np.int64)
        reports.append(_write_back(state, victim_slots, slow, fast, transmitter, write_back))
        state.slot_to_rank[victim_slots] = EMPTY
        state.rank_to_slot[evicted_ranks] = ABSENT
        state.dirty[victim_slots] = False
        state.free_count += needed

    admitted_ranks = np.sort(unique_ranks[miss_mask])
    if misses:
        free = state.free_slots()
        if free.size < misses:
            raise InsufficientFreeSlots(
                f"{misses} rows to admit but only {free.size} free slots "
                f"(evict_mode={evict_mode!r} left the tier over-full)"
            )
        target_slots = free[:misses]
        reports.append(transmitter.move_to_fast(slow, fast, admitted_ranks, target_slots))
        state.slot_to_rank[target_slots] = admitted_ranks
        state.rank_to_slot[admitted_ranks] = target_slots.astype(state.rank_to_slot.dtype)
        state.dirty[target_slots] = False
        state.free_count -= misses

    unique_slots = state.rank_to_slot[unique_ranks].astype(np.int64)
    if event_log is not None:
        event_log.append(
            CacheEvent(
                batch_seq=batch_seq,
                policy=policy.name,
                protected_ranks=np.sort(unique_ranks),
                evicted_ranks=evicted_ranks,
                admitted_ranks=admitted_ranks,
                hits=hits,
                misses=misses,
            )
        )
    return PrepareResult(
        ids=ids,
        unique_ids=unique_ids,
        unique_ranks=unique_ranks,
        unique_counts=counts,
        unique_slots=unique_slots,
        hits=hits,
        misses=misses,
        evictions=int(needed),
        transfer_reports=reports,
    )


def warmup(
    state: CacheState,
    idx_map: IdxMap,
    k: int,
    transmitter: Transmitter,
    slow: SlowTierStore,
    fast: FastTierStore,
    *,
    policy=None,
    event_log: list | None = None,
) -> TransferReport:
    """Pre-fill an empty cache with the k highest-frequency rows (ranks 0..k-1)."""
    if k < 0 or k > state.capacity:
        raise ValueError(f"warmup k must be in [0, capacity={state.capacity}], got {k}")
    if state.free_count != state.capacity:
        raise ValueError("warmup requires an empty cache")
    if k == 0:
        return TransferReport.empty("to_fast")
    ranks = np.arange(k, dtype=np.int64)
    slots = np.arange(k, dtype=np.int64)
    report = transmitter.move_to_fast(slow, fast, ranks, slots)
    state.slot_to_rank[slots] = ranks
    state.rank_to_slot[ranks] = slots.astype(state.rank_to_slot.dtype)
    state.dirty[slots] = False
    state.free_count -= k
    if policy is not None:
        policy.on_reference(ranks, np.ones(k, dtype=np.int64), -1)
    if event_log is not None:
        event_log.append(
            CacheEvent(
                batch_seq=-1,
                policy=policy.name if policy is not None else "warmup",
                protected_ranks=np.empty(0, dtype=np.int64),
                evicted_ranks=np.empty(0, dtype=np.int64),
                admitted_ranks=ranks,
                hits=0,
                misses=k,
            )
        )
    return report


def mark_dirty(state: CacheState, slots) -> None:
    """Flag fast-tier slots as holding values newer than the slow tier's."""
    slots = np.asarray(slots, dtype=np.int64).reshape(-1)
    if slots.size:
        lo, hi = int(slots.min()), int(slots.max())
        if lo < 0 or hi >= state.capacity:
            raise IndexError(f"slot out of range [0, {state.capacity})")
        state.dirty[slots] = True


def flush(
    state: CacheState,
    transmitter: Transmitter,
    slow: SlowTierStore,
    fast: FastTierStore,
) -> TransferReport:
    """Write every dirty slot back; rows stay resident, now clean."""
    dirty_slots = np.flatnonzero(state.dirty)
    if dirty_slots.size == 0:
        return TransferReport.empty(TO_SLOW)
    report = transmitter.move_to_slow(fast, slow, dirty_slots, state.slot_to_rank[dirty_slots])
    state.dirty[dirty_slots] = False
    return report


def gather(fast: FastTierStore, prep: PrepareResult) -> np.ndarray:
    """Rows for the batch in id order, duplicates repeated."""
    return fast.slots[prep.slots_for_ids()]


def scatter_update(
    state: CacheState, fast: FastTierStore, prep: PrepareResult, deltas
) -> None:
    """Add per-occurrence deltas to the resident rows and mark them dirty.

    Duplicated ids accumulate, one addition per occurrence. Zero deltas still
    dirty the slot; comparing values to skip the mark would cost more than
    the write-back it saves.
    """
    deltas = np.asarray(deltas, dtype=fast.slots.dtype)
    if deltas.shape != (prep.ids.size, fast.embedding_dim):
        raise ValueError(
            f"deltas must be ({prep.ids.size}, {fast.embedding_dim}), got {deltas.shape}"
        )
    np.add.at(fast.slots, prep.slots_for_ids(), deltas)
    state.dirty[prep.unique_slots] = True


class CacheStack:
    """One worker's complete cache assembly over (a column slice of) the table.

    Owns the stores, residency state, transmitter and policy, and exposes the
    per-batch verbs the simulator drives. A stack is strictly single-writer.
    """

    def __init__(
        self,
        idx_map: IdxMap,
        slow: SlowTierStore,
        fast: FastTierStore,
        transmitter: Transmitter,
        reference=None,
        policy=None,
        write_back: str = "dirty_only",
        evict_mode: str = "occupancy_aware",
        log_events: bool = False,
        col_range: tuple | None = None,
    ):
        if slow.embedding_dim != fast.embedding_dim:
            raise ValueError("slow and fast tier column widths differ")
        self.idx_map = idx_map
        self.slow = slow
        self.fast = fast
        self.reference = reference
        self.transmitter = transmitter
        self.policy = policy if policy is not None else StaticFreqLfu()
        self.write_back = write_back
        self.evict_mode = evict_mode
        self.events: list[CacheEvent] | None = [] if log_events else None
        self.col_range = col_range if col_range is not None else (0, slow.embedding_dim)
        self.state = CacheState(fast.capacity, idx_map.num_ids)

    @property
    def capacity(self) -> int:
        return self.fast.capacity

    def warmup(self, k: int) -> TransferReport:
        return warmup(
            self.state,
            self.idx_map,
            k,
            self.transmitter,
            self.slow,
            self.fast,
            policy=self.policy,
            event_log=self.events,
        )

    def prepare(self, ids, batch_seq: int) -> PrepareResult:
        return prepare_cache(
            self.state,
            self.idx_map,
            ids,
            self.transmitter,
            self.slow,
            self.fast,
            policy=self.policy,
            write_back=self.write_back,
            evict_mode=self.evict_mode,
            batch_seq=batch_seq,
            event_log=self.events,
        )

    def gather(self, prep: PrepareResult) -> np.ndarray:
        return gather(self.fast, prep)

    def gather_unique(self, prep: PrepareResult) -> np.ndarray:
        return self.fast.slots[prep.unique_slots]

    def scatter_update(self, prep: PrepareResult, deltas) -> None:
        scatter_update(self.state, self.fast, prep, deltas)
        if self.reference is not None:
            np.add.at(self.reference.rows, prep.ids, np.asarray(deltas, dtype=self.fast.slots.dtype))

    def apply_unique_update(self, prep: PrepareResult, add: np.ndarray) -> None:
        """Fast path for pre-aggregated per-unique-id updates (no duplicate
        indices, so a plain fancy add is exact and cheap)."""
        self.fast.slots[prep.unique_slots] += add
        self.state.dirty[prep.unique_slots] = True
        if self.reference is not None:
            self.reference.rows[prep.unique_ids] += add

    def flush(self) -> TransferReport:
        return flush(self.state, self.transmitter, self.slow, self.fast)

    def first_divergence(self, chunk_rows: int = 1 << 16):
        """Compare slow tier against the reference after a flush; None if equal.

        Chunked so full-table verification never materializes a second copy
        of the slow tier.
        """
        if self.reference is None:
            raise ValueError("stack was built without a reference store")
        id_of = self.idx_map.id_of
        for start in range(0, id_of.size, chunk_rows):
            stop = min(start + chunk_rows, id_of.size)
            expected = self.reference.rows[id_of[start:stop]]
            got = self.slow.rows[start:stop]
            if not np.array_equal(got, expected):
                rank_off, col = np.argwhere(got != expected)[0]
                rank = int(start + rank_off)
                return {
                    "rank": rank,
                    "id": int(id_of[rank]),
                    "col": int(self.col_range[0] + col),
                    "slow_value": float(got[rank_off, col]),
                    "reference_value": float(expected[rank_off, col]),
                }
        return None

    def memory_report(self) -> dict:
        rows = self.fast.nbytes
        buf = self.transmitter.buffer.capacity_bytes
        index = self.state.index_bytes
        return {
            "fast_rows_bytes": int(rows),
            "buffer_bytes": int(buf),
            "index_bytes": int(index),
            "peak_fast_tier_bytes": int(rows + buf + index),
        }
