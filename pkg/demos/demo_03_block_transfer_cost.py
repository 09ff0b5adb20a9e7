"""Why rows move in blocks: modeled channel cost of block vs row-wise.

A narrow channel with per-message latency punishes one-message-per-row
transfers. Gathering scattered rows into a bounded staging buffer and
shipping few large messages costs a little local bandwidth and saves orders
of magnitude of latency. All numbers are the cost model's, not wall clock.
"""

from freqcache import ChannelModel, chunk_plan, rowwise_baseline_report

MiB = 2**20
GiB = 2**30

channel = ChannelModel()  # 10 us/message, 12 GiB/s across, 200 GiB/s local
ROW_BYTES = 128 * 4  # a 128-wide float32 embedding row

print(f"channel: {channel.latency_s * 1e6:.0f} us/message, "
      f"{channel.bandwidth_Bps / GiB:.0f} GiB/s across tiers, "
      f"{channel.local_bandwidth_Bps / GiB:.0f} GiB/s within a tier")
print(f"row: {ROW_BYTES} B\n")

print(f"{'rows':>8} {'buffer':>8} {'messages':>9} {'block time':>12} "
      f"{'row-wise time':>14} {'speedup':>8}")
for rows in (64, 1024, 16384, 262144):
    for buffer_bytes in (1 * MiB, 64 * MiB):
        messages = chunk_plan(rows, ROW_BYTES, buffer_bytes)
        nbytes = rows * ROW_BYTES
        block_s = channel.block_time_s(messages, nbytes)
        row_s = rowwise_baseline_report(rows, ROW_BYTES, channel).modeled_time_s
        print(f"{rows:>8,} {buffer_bytes // MiB:>6}Mi {messages:>9} "
              f"{block_s * 1e3:>10.3f}ms {row_s * 1e3:>12.3f}ms {row_s / block_s:>7.1f}x")

print("\nthe buffer is a hard ceiling: a transfer larger than the buffer is"
      "\nsplit into several messages rather than growing the staging memory.")
