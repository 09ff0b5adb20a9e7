import math

import numpy as np
import pytest

from freqcache.store import FastTierStore, SlowTierStore
from freqcache.transmitter import (
    BufferTooSmall,
    ChannelModel,
    TransferBuffer,
    Transmitter,
    chunk_plan,
    rowwise_baseline_report,
)

MiB = 2**20
GiB = 2**30


def make_tiers(num_rows=64, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    slow = SlowTierStore(rows=rng.uniform(-1, 1, (num_rows, dim)).astype(np.float32))
    fast = FastTierStore(slots=np.zeros((16, dim), dtype=np.float32))
    return slow, fast


def test_chunk_plan_zero_rows():
    assert chunk_plan(0, 512, MiB) == 0


def test_chunk_plan_single_message():
    assert chunk_plan(16384, 512, 64 * MiB) == 1


def test_chunk_plan_eight_messages():
    # 2048 rows of 512 B per 1 MiB message
    assert chunk_plan(16384, 512, MiB) == 8


def test_chunk_plan_whole_rows_only():
    # 3 rows of 400 B in a 1000 B buffer: 2 whole rows per message
    assert chunk_plan(3, 400, 1000) == 2


def test_chunk_plan_row_too_large():
    with pytest.raises(BufferTooSmall):
        chunk_plan(1, 2 * MiB, MiB)


def test_channel_validation():
    with pytest.raises(ValueError):
        ChannelModel(latency_s=0.0)
    with pytest.raises(ValueError):
        ChannelModel(bandwidth_Bps=10.0, local_bandwidth_Bps=5.0)


def test_move_single_row_arithmetic():
    slow = SlowTierStore(rows=np.ones((4, 128), dtype=np.float32))
    fast = FastTierStore(slots=np.zeros((2, 128), dtype=np.float32))
    rep = Transmitter().move_to_fast(slow, fast, [1], [0])
    assert rep.rows == 1
    assert rep.bytes == 512
    assert rep.messages == 1


def test_move_copies_exact_values():
    slow, fast = make_tiers()
    tx = Transmitter(buffer=TransferBuffer(1024))
    ranks = np.array([3, 9, 40, 7])
    rep = tx.move_to_fast(slow, fast, ranks, np.arange(4))
    assert np.array_equal(fast.slots[:4], slow.rows[ranks])
    assert rep.messages == chunk_plan(4, 8 * 4, 1024)


def test_roundtrip_clean_is_involution():
    slow, fast = make_tiers()
    before = slow.rows.copy()
    tx = Transmitter()
    tx.move_to_fast(slow, fast, [5, 6], [0, 1])
    tx.move_to_slow(fast, slow, [0, 1], [5, 6])
    assert np.array_equal(slow.rows, before)


def test_writeback_carries_updates():
    slow, fast = make_tiers()
    tx = Transmitter()
    tx.move_to_fast(slow, fast, [2], [0])
    fast.slots[0] += 1.0
    tx.move_to_slow(fast, slow, [0], [2])
    assert np.array_equal(slow.rows[2], fast.slots[0])


def test_empty_move_reports_zero():
    slow, fast = make_tiers()
    rep = Transmitter().move_to_slow(fast, slow, [], [])
    assert (rep.rows, rep.bytes, rep.messages, rep.modeled_time_s) == (0, 0, 0, 0.0)


def test_multi_message_staging_respects_buffer():
    slow, fast = make_tiers(num_rows=64, dim=8)
    buffer = TransferBuffer(3 * 8 * 4)  # three rows per message
    tx = Transmitter(buffer=buffer)
    ranks = np.arange(10)
    rep = tx.move_to_fast(slow, fast, ranks, np.arange(10)[::-1] % 16)
    assert rep.messages == math.ceil(10 / 3)


def test_mismatched_indices_rejected():
    slow, fast = make_tiers()
    with pytest.raises(ValueError):
        Transmitter().move_to_fast(slow, fast, [1, 2], [0])
    with pytest.raises(IndexError):
        Transmitter().move_to_fast(slow, fast, [-1], [0])


def test_block_modeled_time_formula():
    ch = ChannelModel(latency_s=10e-6, bandwidth_Bps=12 * GiB, local_bandwidth_Bps=200 * GiB)
    slow = SlowTierStore(rows=np.ones((4096, 128), dtype=np.float32))
    fast = FastTierStore(slots=np.zeros((4096, 128), dtype=np.float32))
    rep = Transmitter(buffer=TransferBuffer(MiB), channel=ch).move_to_fast(
        slow, fast, np.arange(4096), np.arange(4096)
    )
    nbytes = 4096 * 512
    messages = chunk_plan(4096, 512, MiB)
    expected = messages * 10e-6 + nbytes / (12 * GiB) + 2 * nbytes / (200 * GiB)
    assert rep.modeled_time_s == pytest.approx(expected, rel=1e-12)


def test_rowwise_baseline_report():
    ch = ChannelModel()
    rep = rowwise_baseline_report(1000, 512, ch)
    assert rep.messages == 1000
    assert rep.bytes == 1000 * 512
    assert rep.modeled_time_s == pytest.approx(
        1000 * ch.latency_s + rep.bytes / ch.bandwidth_Bps, rel=1e-12
    )
    one = rowwise_baseline_report(1, 512, ch)
    assert one.messages == 1


def test_rowwise_transmitter_mode():
    slow, fast = make_tiers()
    tx = Transmitter(mode="rowwise")
    rep = tx.move_to_fast(slow, fast, np.arange(5), np.arange(5))
    assert rep.messages == 5
    assert np.array_equal(fast.slots[:5], slow.rows[:5])
    assert rep.modeled_time_s == pytest.approx(
        5 * tx.channel.latency_s + rep.bytes / tx.channel.bandwidth_Bps, rel=1e-12
    )


def test_block_never_more_messages_than_rowwise():
    for rows in (1, 2, 7, 100, 4096):
        for buffer in (512, 1024, 65536):
            assert chunk_plan(rows, 512, buffer) <= rows


def test_conservation_bytes():
    slow, fast = make_tiers(num_rows=32, dim=8)
    tx = Transmitter(buffer=TransferBuffer(256))
    rep = tx.move_to_fast(slow, fast, np.arange(12), np.arange(12) % 16)
    assert rep.bytes == 12 * 8 * 4
