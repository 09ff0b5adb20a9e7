"""Row movement between tiers through a strictly bounded staging buffer.

Scattered rows are gathered into one contiguous staging area and shipped as
few large messages instead of one message per row, which is what makes the
narrow channel between tiers usable. The buffer is allocated once and every
message must fit inside it. Channel cost is modeled arithmetic only; nothing
sleeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .store import EMB_DTYPE, FastTierStore, SlowTierStore

DEFAULT_BUFFER_BYTES = 64 * 2**20
DEFAULT_LATENCY_S = 10e-6
DEFAULT_BANDWIDTH_BPS = 12 * 2**30
DEFAULT_LOCAL_BANDWIDTH_BPS = 200 * 2**30

TO_FAST = "to_fast"
TO_SLOW = "to_slow"


class BufferTooSmall(ValueError):
    """A single row does not fit in the staging buffer."""


@dataclass(frozen=True)
class ChannelModel:
    """Per-message latency plus cross-tier and within-tier bandwidths.

    The within-tier bandwidth pays for gathering rows into the staging block
    at the source and scattering them out at the destination; it must not be
    slower than the tier boundary itself.
    """

    latency_s: float = DEFAULT_LATENCY_S
    bandwidth_Bps: float = DEFAULT_BANDWIDTH_BPS
    local_bandwidth_Bps: float = DEFAULT_LOCAL_BANDWIDTH_BPS

    def __post_init__(self) -> None:
        if min(self.latency_s, self.bandwidth_Bps, self.local_bandwidth_Bps) <= 0:
            raise ValueError("channel parameters must be strictly positive")
        if self.local_bandwidth_Bps < self.bandwidth_Bps:
            raise ValueError("local bandwidth must be >= cross-tier bandwidth")

    def block_time_s(self, messages: int, nbytes: int) -> float:
        return (
            messages * self.latency_s
            + nbytes / self.bandwidth_Bps
            + 2 * nbytes / self.local_bandwidth_Bps
        )

    def rowwise_time_s(self, rows: int, nbytes: int) -> float:
        return rows * self.latency_s + nbytes / self.bandwidth_Bps


@dataclass(frozen=True)
class TransferReport:
    direction: str
    rows: int
    bytes: int
    messages: int
    modeled_time_s: float

    @classmethod
    def empty(cls, direction: str) -> "TransferReport":
        return cls(direction=direction, rows=0, bytes=0, messages=0, modeled_time_s=0.0)


class TransferBuffer:
    """Fixed staging area, allocated once and reused for every message."""

    def __init__(self, capacity_bytes: int = DEFAULT_BUFFER_BYTES):
        if capacity_bytes < 1:
            raise ValueError("buffer capacity must be >= 1 byte")
        self.capacity_bytes = int(capacity_bytes)
        self.data = np.empty(self.capacity_bytes, dtype=np.uint8)

    def rows_per_message(self, row_bytes: int) -> int:
        if row_bytes > self.capacity_bytes:
            raise BufferTooSmall(
                f"row of {row_bytes} B cannot fit in a {self.capacity_bytes} B buffer"
            )
        return self.capacity_bytes // row_bytes

    def staging(self, rows: int, embedding_dim: int) -> np.ndarray:
        """A (rows, dim) float32 view over the start of the buffer."""
        n = rows * embedding_dim
        return self.data[: n * 4].view(EMB_DTYPE).reshape(rows, embedding_dim)


def chunk_plan(rows: int, row_bytes: int, buffer_bytes: int) -> int:
    """Messages needed to move ``rows`` whole rows through the buffer.

    Rows are never split across messages, so each message carries
    floor(buffer/row) rows and the count is the ceiling over that.
    """
    if rows < 0 or row_bytes < 1 or buffer_bytes < 1:
        raise ValueError("rows must be >= 0, sizes >= 1")
    if row_bytes > buffer_bytes:
        raise BufferTooSmall(f"row of {row_bytes} B cannot fit in a {buffer_bytes} B buffer")
    if rows == 0:
        return 0
    return math.ceil(rows / (buffer_bytes // row_bytes))


def rowwise_baseline_report(rows: int, row_bytes: int, channel: ChannelModel) -> TransferReport:
    """Cost of the one-message-per-row scheme the block transmitter replaces."""
    nbytes = rows * row_bytes
    return TransferReport(
        direction=TO_FAST,
        rows=rows,
        bytes=nbytes,
        messages=rows,
        modeled_time_s=channel.rowwise_time_s(rows, nbytes),
    )


class Transmitter:
    """Moves rows between a slow and a fast store and accounts channel cost.

    ``mode="block"`` stages whole-row chunks through the bounded buffer;
    ``mode="rowwise"`` models the naive per-row transfer (each row its own
    message, no staging) used as a baseline.
    """

    def __init__(
        self,
        buffer: TransferBuffer | None = None,
        channel: ChannelModel | None = None,
        mode: str = "block",
    ):
        if mode not in ("block", "rowwise"):
            raise ValueError(f"mode must be 'block' or 'rowwise', got {mode!r}")
        self.buffer = buffer if buffer is not None else TransferBuffer()
        self.channel = channel if channel is not None else ChannelModel()
        self.mode = mode

    def _move(
        self,
        src: np.ndarray,
        src_idx: np.ndarray,
        dst: np.ndarray,
        dst_idx: np.ndarray,
        direction: str,
    ) -> TransferReport:
        src_idx = np.asarray(src_idx).reshape(-1)
        dst_idx = np.asarray(dst_idx).reshape(-1)
        if src_idx.size != dst_idx.size:
            raise ValueError(f"{src_idx.size} source rows but {dst_idx.size} targets")
        for idx, limit, what in ((src_idx, src.shape[0], "source"), (dst_idx, dst.shape[0], "target")):
            if idx.size and (int(idx.min()) < 0 or int(idx.max()) >= limit):
                raise IndexError(f"{what} row index out of range [0, {limit})")
        rows = int(src_idx.size)
        dim = int(src.shape[1])
        row_bytes = dim * 4
        if rows == 0:
            self.buffer.rows_per_message(row_bytes)  # row must fit even for a no-op
            return TransferReport.empty(direction)
        nbytes = rows * row_bytes

        if self.mode == "rowwise":
            # One message per row, no staging block; copy stays vectorized,
            # only the accounting differs.
            dst[dst_idx] = src[src_idx]
            return TransferReport(
                direction=direction,
                rows=rows,
                bytes=nbytes,
                messages=rows,
                modeled_time_s=self.channel.rowwise_time_s(rows, nbytes),
            )

        per_msg = self.buffer.rows_per_message(row_bytes)
        messages = 0
        for start in range(0, rows, per_msg):
            stop = min(start + per_msg, rows)
            staging = self.buffer.staging(stop - start, dim)
            np.take(src, src_idx[start:stop], axis=0, out=staging)
            assert staging.nbytes <= self.buffer.capacity_bytes
            dst[dst_idx[start:stop]] = staging
            messages += 1
        assert messages == chunk_plan(rows, row_bytes, self.buffer.capacity_bytes)
        return TransferReport(
            direction=direction,
            rows=rows,
            bytes=nbytes,
            messages=messages,
            modeled_time_s=self.channel.block_time_s(messages, nbytes),
        )

    def move_to_fast(
        self, slow: SlowTierStore, fast: FastTierStore, ranks, target_slots
    ) -> TransferReport:
        """Copy slow rows (by rank) into fast slots; admission direction."""
        return self._move(slow.rows, ranks, fast.slots, target_slots, TO_FAST)

    def move_to_slow(
        self, fast: FastTierStore, slow: SlowTierStore, slots, target_ranks
    ) -> TransferReport:
        """Copy fast slots back to slow rows (by rank); eviction/write-back."""
        return self._move(fast.slots, slots, slow.rows, target_ranks, TO_SLOW)
