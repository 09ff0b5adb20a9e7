"""Static id-frequency statistics and the frequency-rank reorder map.

The slow tier keeps embedding rows sorted from most to least frequently
accessed id, so an id's row index in that tier *is* its frequency rank.
Everything here is computed once, before a simulation run, from a trace.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

FREQ_MAGIC = b"FQTB"
FREQ_VERSION = 1


@dataclass
class FrequencyTable:
    """Per-id access counts over the whole id space [0, num_ids).

    ``counts`` is dense: ids never observed simply hold zero. The table
    cardinality may exceed the number of observed ids.
    """

    counts: np.ndarray
    num_ids: int

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.num_ids,):
            raise ValueError(
                f"counts must be dense over num_ids={self.num_ids}, got shape {self.counts.shape}"
            )
        if self.num_ids < 0:
            raise ValueError("num_ids must be non-negative")
        if self.counts.size and self.counts.min() < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total_accesses(self) -> int:
        return int(self.counts.sum())

    @property
    def observed_ids(self) -> int:
        return int(np.count_nonzero(self.counts))


@dataclass
class IdxMap:
    """Mutually inverse permutations between raw id and slow-tier row index.

    ``rank_of[id]`` is the id's row in the frequency-reordered slow tier and
    ``id_of[rank]`` goes back. Rank 0 is the most frequent id.
    """

    rank_of: np.ndarray
    id_of: np.ndarray

    @property
    def num_ids(self) -> int:
        return int(self.rank_of.shape[0])

    def check(self) -> None:
        """Verify the two arrays really are inverse permutations."""
        n = self.num_ids
        if self.id_of.shape != (n,):
            raise ValueError("rank_of and id_of length mismatch")
        if not np.array_equal(self.rank_of[self.id_of], np.arange(n)):
            raise ValueError("rank_of and id_of are not inverse permutations")


def _flat_ids(trace) -> np.ndarray:
    """Accept a Trace or any array-like of ids and return a flat int array."""
    samples = getattr(trace, "samples", trace)
    return np.asarray(samples).reshape(-1)


def _check_id_range(ids: np.ndarray, num_ids: int) -> None:
    if ids.size == 0:
        return
    lo = int(ids.min())
    hi = int(ids.max())
    if lo < 0:
        raise ValueError(f"id out of range: {lo} < 0")
    if hi >= num_ids:
        raise ValueError(f"id out of range: {hi} >= num_ids={num_ids}")


# ids counted per chunk to keep bincount's widened temporaries small
_SCAN_CHUNK = 1 << 24


def scan_frequencies(trace, num_ids: int) -> FrequencyTable:
    """Exact occurrence counts of every id in the trace.

    One full pass, the static statistics scan done once before a run.
    Order-insensitive by construction.
    """
    if num_ids < 0:
        raise ValueError("num_ids must be non-negative")
    ids = _flat_ids(trace)
    _check_id_range(ids, num_ids)
    counts = np.zeros(num_ids, dtype=np.int64)
    for start in range(0, ids.size, _SCAN_CHUNK):
        chunk = ids[start : start + _SCAN_CHUNK]
        counts += np.bincount(chunk, minlength=num_ids)
    return FrequencyTable(counts=counts, num_ids=num_ids)


def sample_frequencies(trace, num_ids: int, sample_rate: float, seed: int) -> FrequencyTable:
    """Counts over a uniform subset of trace samples (rows, not ids).

    ``sample_rate=1.0`` reproduces ``scan_frequencies`` exactly; smaller rates
    trade accuracy for scan time. Deterministic for a fixed seed.
    """
    if not (0.0 < sample_rate <= 1.0):
        raise ValueError(f"sample_rate must be in (0, 1], got {sample_rate}")
    samples = getattr(trace, "samples", None)
    if samples is None:
        samples = np.asarray(trace)
    samples = np.asarray(samples)
    if samples.ndim == 1:
        samples = samples.reshape(-1, 1)
    rng = np.random.default_rng(seed)
    keep = rng.random(samples.shape[0]) < sample_rate
    ids = samples[keep].reshape(-1)
    _check_id_range(ids, num_ids)
    counts = np.bincount(ids, minlength=num_ids).astype(np.int64)
    return FrequencyTable(counts=counts, num_ids=num_ids)


def build_reorder(freq: FrequencyTable) -> IdxMap:
    """Rank ids by descending count; ties and unseen ids by ascending id.

    The stable sort over descending counts puts never-observed ids (count 0)
    after all observed ones, in raw-id order, so the map stays total over the
    id space.
    """
    if freq.num_ids < 1:
        raise ValueError("num_ids must be >= 1 to build a reorder map")
    id_of = np.argsort(-freq.counts, kind="stable")
    rank_of = np.empty_like(id_of)
    rank_of[id_of] = np.arange(freq.num_ids, dtype=id_of.dtype)
    return IdxMap(rank_of=rank_of, id_of=id_of)


def head_coverage(freq: FrequencyTable, top_fraction: float) -> float:
    """Fraction of all accesses going to the top-``top_fraction`` of ids.

    Takes the ceil(top_fraction * num_ids) highest-count ids. Zero when the
    table is empty.
    """
    if not (0.0 <= top_fraction <= 1.0):
        raise ValueError(f"top_fraction must be in [0, 1], got {top_fraction}")
    total = freq.total_accesses
    if total == 0:
        return 0.0
    k = math.ceil(top_fraction * freq.num_ids)
    if k == 0:
        return 0.0
    if k >= freq.num_ids:
        return 1.0
    top = -np.partition(-freq.counts, k - 1)[:k]
    return float(top.sum() / total)


def save_table(freq: FrequencyTable, path) -> None:
    """Write the binary statistics file: header + (id, count) pairs by id."""
    ids = np.flatnonzero(freq.counts)
    pairs = np.column_stack([ids, freq.counts[ids]]).astype(np.int64)
    header = struct.pack(
        "<4sIQQQ", FREQ_MAGIC, FREQ_VERSION, freq.num_ids, freq.total_accesses, pairs.shape[0]
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pairs.tobytes())


def load_table(path) -> FrequencyTable:
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sIQQQ"))
        if len(header) < struct.calcsize("<4sIQQQ") or header[:4] != FREQ_MAGIC:
            raise ValueError(f"{path}: not a frequency table file")
        magic, version, num_ids, total, n_pairs = struct.unpack("<4sIQQQ", header)
        if magic != FREQ_MAGIC:
            raise ValueError(f"{path}: not a frequency table file")
        if version != FREQ_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        pairs = np.frombuffer(fh.read(int(n_pairs) * 16), dtype=np.int64).reshape(-1, 2)
    counts = np.zeros(int(num_ids), dtype=np.int64)
    counts[pairs[:, 0]] = pairs[:, 1]
    table = FrequencyTable(counts=counts, num_ids=int(num_ids))
    if table.total_accesses != int(total):
        raise ValueError(f"{path}: checksum mismatch, header total {total} != {table.total_accesses}")
    return table


def table_to_json(freq: FrequencyTable) -> str:
    """JSON export for inspection; sparse (id, count) pairs sorted by id."""
    ids = np.flatnonzero(freq.counts)
    return json.dumps(
        {
            "num_ids": freq.num_ids,
            "total_accesses": freq.total_accesses,
            "pairs": [[int(i), int(freq.counts[i])] for i in ids],
        }
    )


def table_from_json(text: str) -> FrequencyTable:
    doc = json.loads(text)
    counts = np.zeros(int(doc["num_ids"]), dtype=np.int64)
    for i, c in doc["pairs"]:
        counts[int(i)] = int(c)
    return FrequencyTable(counts=counts, num_ids=int(doc["num_ids"]))
