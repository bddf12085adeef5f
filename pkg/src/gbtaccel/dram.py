"""Bandwidth/row-buffer DRAM model plus a small discrete-event bank oracle.

The analytic model charges every fetched 64-byte block against the sustained
bandwidth, derated when the blocks sharing an activated row are too few to
cover the bank's activate/precharge time with the other banks' transfers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

CONTIGUOUS = "contiguous_blocks"
SCATTERED = "scattered_blocks"
COLUMN_SPANS = "scattered_column_spans"
PATTERNS = (CONTIGUOUS, SCATTERED, COLUMN_SPANS)


@dataclass(frozen=True)
class DramConfig:
    channels: int = 24
    banks_per_channel: int = 16
    row_bytes: int = 1024
    tCAS: int = 12
    tRP: int = 12
    tRCD: int = 12
    tRAS: int = 28
    mem_clock_ghz: float = 0.5
    bus_bytes_per_cycle: int = 64  # per channel, both clock edges of a 32-byte bus
    sustained_gbps: float = 400.0
    block_bytes: int = 64

    def __post_init__(self):
        for k in ("channels", "banks_per_channel", "row_bytes", "tCAS", "tRP", "tRCD", "tRAS",
                  "bus_bytes_per_cycle", "block_bytes"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive")
        if self.mem_clock_ghz <= 0 or self.sustained_gbps <= 0:
            raise ValueError("mem_clock_ghz and sustained_gbps must be positive")
        if self.sustained_gbps > self.peak_gbps:
            raise ValueError(f"sustained {self.sustained_gbps} GB/s exceeds peak {self.peak_gbps} GB/s")

    @property
    def peak_gbps(self) -> float:
        return self.channels * self.bus_bytes_per_cycle * self.mem_clock_ghz

    @property
    def block_time(self) -> float:
        """Memory cycles one channel needs per block at the sustained rate."""
        ns = self.channels * self.block_bytes / self.sustained_gbps
        return ns * self.mem_clock_ghz

    def block_interval(self, blocks_per_row: float) -> float:
        """Memory cycles per block a channel's banks can sustain when each
        activation serves k blocks."""
        k = max(float(blocks_per_row), 1.0)
        bank = max(self.tRAS, self.tRCD + self.tCAS + k * self.block_time) + self.tRP
        return bank / (k * self.banks_per_channel)

    def row_efficiency(self, blocks_per_row: float) -> float:
        """Fraction of sustained bandwidth reached when each activation serves k blocks."""
        tb = self.block_time
        return tb / max(tb, self.block_interval(blocks_per_row))


class DramResult(NamedTuple):
    cycles: float
    row_hits: int
    row_misses: int
    blocks: int


def dram_stream_cycles(n_bytes: float, pattern: str, dram: DramConfig, clock_ghz: float = 1.0,
                       blocks: int | None = None, rows: int | None = None,
                       span_rows: int | None = None) -> DramResult:
    """Cycles (at ``clock_ghz``) to move ``n_bytes`` with the given access pattern.

    ``blocks`` and ``rows`` are the distinct 64-byte blocks and DRAM rows the
    access touches. Scattered patterns are timed on blocks, so a column span of
    a few useful bytes still costs a whole block. Unspecified counts default to
    the worst case of one block per row. ``span_rows`` is the number of rows
    between the first and last touched row: a sorted stream sweeps the banks
    across the whole span, so sparse spans pay an activation per block even
    when the touched rows hold several blocks.
    """
    if n_bytes < 0:
        raise ValueError("n_bytes must be >= 0")
    if pattern not in PATTERNS:
        raise ValueError(f"pattern must be one of {PATTERNS}, got {pattern!r}")
    if n_bytes == 0 and not blocks:
        return DramResult(0.0, 0, 0, 0)
    bytes_per_cycle = dram.sustained_gbps / clock_ghz
    bb = dram.block_bytes
    if pattern == CONTIGUOUS:
        nb = math.ceil(n_bytes / bb) if blocks is None else blocks
        nr = math.ceil(n_bytes / dram.row_bytes) if rows is None else rows
        return DramResult(n_bytes / bytes_per_cycle, nb - nr, nr, nb)
    nb = math.ceil(n_bytes / bb) if blocks is None else blocks
    nr = nb if rows is None else max(min(rows, nb), 1 if nb else 0)
    if nb == 0:
        return DramResult(0.0, 0, 0, 0)
    k = nb / nr
    if span_rows:
        k = min(k, max(1.0, nb / span_rows))
    stream = nb * bb / bytes_per_cycle
    banked = nb / dram.channels * dram.block_interval(k) / dram.mem_clock_ghz * clock_ghz
    return DramResult(max(stream, banked), nb - nr, nr, nb)


# ---------------------------------------------------------------- oracle

@dataclass
class _Bank:
    open_row: int = -1
    act_time: float = -1e18
    col_ready: float = 0.0


def simulate_block_reads(addresses: Iterable[int], dram: DramConfig,
                         window: int = 32) -> tuple[float, int, int]:
    """Discrete-event timing of block reads under an open-page policy.

    Rows interleave across channels, then banks. Requests enter each channel's
    queue in order, at most ``window`` ahead of the oldest unfinished one; the
    channel's data bus then serves whichever queued block is ready first.
    Returns (elapsed ns, row hits, row misses).
    """
    tb = dram.block_time
    per_channel: dict[int, list[tuple[int, int]]] = {}
    for a in addresses:
        r = int(a) // dram.row_bytes
        ch = r % dram.channels
        bank = (r // dram.channels) % dram.banks_per_channel
        per_channel.setdefault(ch, []).append((bank, r))
    hits = misses = 0
    end = 0.0
    for reqs in per_channel.values():
        banks = [_Bank() for _ in range(dram.banks_per_channel)]
        ready: list[float] = []
        for i, (b, row) in enumerate(reqs):
            issue = ready[i - window] if i >= window else 0.0
            bank = banks[b]
            if bank.open_row == row:
                hits += 1
                t = max(issue, bank.col_ready)
            else:
                misses += 1
                act = issue
                if bank.open_row >= 0:
                    act = max(act, max(bank.act_time + dram.tRAS, bank.col_ready) + dram.tRP)
                bank.open_row, bank.act_time = row, act
                t = act + dram.tRCD + dram.tCAS
            bank.col_ready = t + tb
            ready.append(t)
        bus = 0.0
        for t in sorted(ready):
            bus = max(bus, t) + tb
        end = max(end, bus)
    return end / dram.mem_clock_ghz, hits, misses
