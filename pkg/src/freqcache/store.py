"""Two-tier embedding value storage plus a dense reference oracle.

The slow tier holds every row, laid out by frequency rank; the fast tier is a
small slot table holding the active subset. The reference store keeps the
same values indexed by raw id and exists purely so tests can compare a full
simulation against plain dense semantics, bit for bit.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .freq_stats import IdxMap

EMB_DTYPE = np.float32
SNAP_MAGIC = b"EMBS"
SNAP_VERSION = 1

# Rows initialized per chunk of this many elements to bound the transient
# float64 draw buffer.
_INIT_CHUNK = 1 << 24


def _check_indices(idx: np.ndarray, limit: int, what: str) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    if idx.size:
        lo, hi = int(idx.min()), int(idx.max())
        if lo < 0 or hi >= limit:
            bad = lo if lo < 0 else hi
            raise IndexError(f"{what} index {bad} out of range [0, {limit})")
    return idx


@dataclass
class SlowTierStore:
    """Full-capacity tier; rows live at their frequency rank, never at raw id."""

    rows: np.ndarray

    @property
    def num_rows(self) -> int:
        return int(self.rows.shape[0])

    @property
    def embedding_dim(self) -> int:
        return int(self.rows.shape[1])

    def read(self, ranks) -> np.ndarray:
        return self.rows[_check_indices(ranks, self.num_rows, "slow-row")].copy()

    def write(self, ranks, values) -> None:
        ranks = _check_indices(ranks, self.num_rows, "slow-row")
        values = np.asarray(values, dtype=EMB_DTYPE).reshape(ranks.size, self.embedding_dim)
        self.rows[ranks] = values


@dataclass
class FastTierStore:
    """Capacity-bounded tier of slots; which rank occupies which slot is the
    cache manager's business, this class only stores values."""

    slots: np.ndarray

    @property
    def capacity(self) -> int:
        return int(self.slots.shape[0])

    @property
    def embedding_dim(self) -> int:
        return int(self.slots.shape[1])

    @property
    def nbytes(self) -> int:
        return int(self.slots.nbytes)

    def read(self, slots) -> np.ndarray:
        return self.slots[_check_indices(slots, self.capacity, "slot")].copy()

    def write(self, slots, values) -> None:
        slots = _check_indices(slots, self.capacity, "slot")
        values = np.asarray(values, dtype=EMB_DTYPE).reshape(slots.size, self.embedding_dim)
        self.slots[slots] = values


@dataclass
class ReferenceStore:
    """Dense oracle indexed by raw id."""

    rows: np.ndarray

    def read(self, ids) -> np.ndarray:
        return self.rows[_check_indices(ids, self.rows.shape[0], "id")].copy()

    def write(self, ids, values) -> None:
        ids = _check_indices(ids, self.rows.shape[0], "id")
        self.rows[ids] = np.asarray(values, dtype=EMB_DTYPE).reshape(ids.size, self.rows.shape[1])


def fast_capacity(num_ids: int, cache_ratio: float) -> int:
    """Slot count of the fast tier: floor(cache_ratio * num_ids), at least 1."""
    if not (0.0 < cache_ratio <= 1.0):
        raise ValueError(f"cache_ratio must be in (0, 1], got {cache_ratio}")
    cap = math.floor(cache_ratio * num_ids)
    if cap < 1:
        warnings.warn(
            f"cache_ratio {cache_ratio} of {num_ids} ids yields zero slots; clamping capacity to 1",
            stacklevel=2,
        )
        return 1
    return cap


def init_reference_rows(num_ids: int, embedding_dim: int, init_seed: int) -> np.ndarray:
    """Seeded row values in raw-id order, uniform in +-0.5/embedding_dim.

    Drawn in fixed-size chunks so the result is bitwise reproducible while the
    float64 staging stays small.
    """
    scale = 0.5 / embedding_dim
    rows = np.empty((num_ids, embedding_dim), dtype=EMB_DTYPE)
    flat = rows.reshape(-1)
    rng = np.random.default_rng(init_seed)
    for start in range(0, flat.size, _INIT_CHUNK):
        stop = min(start + _INIT_CHUNK, flat.size)
        flat[start:stop] = rng.uniform(-scale, scale, stop - start)
    return rows


def init_stores(
    num_ids: int,
    embedding_dim: int,
    cache_ratio: float,
    init_seed: int,
    idx_map: IdxMap,
) -> tuple[SlowTierStore, FastTierStore, ReferenceStore]:
    """Build the three stores with matching values: the slow tier holds each
    id's row at rank_of[id], the reference at the raw id, the fast tier zeroed."""
    if num_ids < 1 or embedding_dim < 1:
        raise ValueError("num_ids and embedding_dim must be >= 1")
    if idx_map.num_ids != num_ids:
        raise ValueError(f"idx_map covers {idx_map.num_ids} ids, expected {num_ids}")
    ref_rows = init_reference_rows(num_ids, embedding_dim, init_seed)
    slow_rows = ref_rows[idx_map.id_of]
    capacity = fast_capacity(num_ids, cache_ratio)
    fast = FastTierStore(slots=np.zeros((capacity, embedding_dim), dtype=EMB_DTYPE))
    return SlowTierStore(rows=slow_rows), fast, ReferenceStore(rows=ref_rows)


def save_snapshot(rows: np.ndarray, path) -> None:
    """Row-matrix snapshot for test fixtures; not a training checkpoint."""
    rows = np.ascontiguousarray(rows, dtype=EMB_DTYPE)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIQQ", SNAP_MAGIC, SNAP_VERSION, rows.shape[0], rows.shape[1]))
        fh.write(rows.tobytes())


def load_snapshot(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, version, n, d = struct.unpack("<4sIQQ", fh.read(struct.calcsize("<4sIQQ")))
        if magic != SNAP_MAGIC or version != SNAP_VERSION:
            raise ValueError(f"{path}: not a store snapshot file")
        data = np.frombuffer(fh.read(int(n * d) * 4), dtype=EMB_DTYPE)
    return data.reshape(int(n), int(d)).copy()
