"""Booster organization: BU/cluster sizing, bin-to-SRAM maps, tree tables."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import FieldSchema
from .engine import Tree

GROUP_BY_FIELD = "group_by_field"
NAIVE_PACK = "naive_pack"
STRATEGIES = (GROUP_BY_FIELD, NAIVE_PACK)


class CapacityError(ValueError):
    def __init__(self, required: int, available: int, what: str = "histogram bins"):
        super().__init__(f"{what} need {required} bytes of SRAM, {available} available")
        self.required = required
        self.available = available


@dataclass(frozen=True)
class BoosterConfig:
    n_clusters: int = 50
    bus_per_cluster: int = 64
    sram_bytes: int = 2048
    bin_entry_bytes: int = 8
    bus_per_link: int = 16
    clock_ghz: float = 1.0
    block_bytes: int = 64
    bu_cycles_per_field: int = 8
    sram_access_cycles: int = 2  # one read plus one write
    tree_entry_bytes: int = 16
    traversal_overhead_cycles: int = 2  # per record per tree: load G/H, emit output
    field_partitioning: bool = True

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and v <= 0:
                raise ValueError(f"{k} must be positive, got {v}")

    @property
    def total_bus(self) -> int:
        return self.n_clusters * self.bus_per_cluster

    @property
    def fill_cycles(self) -> int:
        """Pipeline fill of the broadcast links (one hop per link of BUs)."""
        return self.total_bus // self.bus_per_link

    @property
    def bins_per_sram(self) -> int:
        return self.sram_bytes // self.bin_entry_bytes

    @property
    def tree_entries_per_sram(self) -> int:
        return self.sram_bytes // self.tree_entry_bytes


@dataclass(frozen=True)
class SramMap:
    """Bins laid out in per-BU slots of ``capacity_bins``.

    Field f's bin b lives in BU ``(field_start[f] + b) // capacity_bins``.
    """

    strategy: str
    capacity_bins: int
    field_start: tuple[int, ...]
    field_bins: tuple[int, ...]
    n_bus: int
    bu_fields: tuple[tuple[int, ...], ...] = field(repr=False)

    def bu_of(self, f: int, b) -> np.ndarray:
        return (self.field_start[f] + np.asarray(b)) // self.capacity_bins

    def bus_of_field(self, f: int) -> range:
        first = self.field_start[f] // self.capacity_bins
        last = (self.field_start[f] + self.field_bins[f] - 1) // self.capacity_bins
        return range(first, last + 1)

    @property
    def fields_per_bu(self) -> np.ndarray:
        return np.array([len(fs) for fs in self.bu_fields], dtype=np.int64)

    @property
    def max_fields_per_bu(self) -> int:
        """Worst-case SRAM updates one record can send to a single BU."""
        return int(self.fields_per_bu.max()) if self.n_bus else 0

    def bu_bytes(self, entry_bytes: int) -> np.ndarray:
        used = np.zeros(self.n_bus, dtype=np.int64)
        for f, (s, nb) in enumerate(zip(self.field_start, self.field_bins)):
            for bu in self.bus_of_field(f):
                lo = max(s, bu * self.capacity_bins)
                hi = min(s + nb, (bu + 1) * self.capacity_bins)
                used[bu] += (hi - lo) * entry_bytes
        return used

    def replay(self, codes: np.ndarray) -> np.ndarray:
        """Per-BU update counts for binning the given (n, d) records."""
        codes = np.asarray(codes)
        hits = np.zeros(self.n_bus, dtype=np.int64)
        for f in range(len(self.field_bins)):
            hits += np.bincount(self.bu_of(f, codes[:, f].astype(np.int64)), minlength=self.n_bus)
        return hits

    def describe(self) -> str:
        lines = [f"strategy {self.strategy} capacity_bins {self.capacity_bins} bus {self.n_bus}"]
        for bu, fs in enumerate(self.bu_fields):
            lines.append(f"bu {bu} fields {' '.join(map(str, fs))}")
        return "\n".join(lines)


def _bu_fields(starts: Sequence[int], bins: Sequence[int], cap: int, n_bus: int):
    out = [[] for _ in range(n_bus)]
    for f, (s, nb) in enumerate(zip(starts, bins)):
        for bu in range(s // cap, (s + nb - 1) // cap + 1):
            out[bu].append(f)
    return tuple(tuple(x) for x in out)


def _check_capacity(n_bus: int, bins: Sequence[int], config: BoosterConfig) -> None:
    if n_bus > config.total_bus and not config.field_partitioning:
        raise CapacityError(sum(bins) * config.bin_entry_bytes if n_bus else 0,
                            config.total_bus * config.sram_bytes)


def map_group_by_field(schema: Sequence[FieldSchema], config: BoosterConfig) -> SramMap:
    """Each field owns whole BUs; a field too large for one SRAM spans a group.

    With field partitioning enabled, maps needing more BUs than the chip has
    are allowed and processed in several passes by the timing model.
    """
    cap = config.bins_per_sram
    bins = [fs.n_bins for fs in schema]
    starts, bu = [], 0
    for nb in bins:
        starts.append(bu * cap)
        bu += -(-nb // cap)
    _check_capacity(bu, bins, config)
    return SramMap(GROUP_BY_FIELD, cap, tuple(starts), tuple(bins), bu,
                   _bu_fields(starts, bins, cap, bu))


def map_naive_pack(schema: Sequence[FieldSchema], config: BoosterConfig) -> SramMap:
    """Pack bins back to back by capacity, letting fields share and straddle BUs."""
    cap = config.bins_per_sram
    bins = [fs.n_bins for fs in schema]
    starts = [int(x) for x in np.concatenate([[0], np.cumsum(bins)[:-1]])] if bins else []
    n_bus = -(-sum(bins) // cap)
    _check_capacity(n_bus, bins, config)
    return SramMap(NAIVE_PACK, cap, tuple(starts), tuple(bins), n_bus,
                   _bu_fields(starts, bins, cap, n_bus))


def make_map(schema: Sequence[FieldSchema], config: BoosterConfig, strategy: str) -> SramMap:
    if strategy == GROUP_BY_FIELD:
        return map_group_by_field(schema, config)
    if strategy == NAIVE_PACK:
        return map_naive_pack(schema, config)
    raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")


# ---------------------------------------------------------------- tree tables

@dataclass(frozen=True)
class TreeTable:
    """One entry per vertex, fields renumbered densely among those the tree uses."""

    field: np.ndarray
    boundary: np.ndarray
    missing_left: np.ndarray
    categorical: np.ndarray
    missing_bin: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray
    field_remap: dict[int, int]
    entry_bytes: int = 16

    @property
    def n_entries(self) -> int:
        return self.field.size

    @property
    def table_bytes(self) -> int:
        return self.n_entries * self.entry_bytes

    @property
    def relevant_fields(self) -> list[int]:
        return sorted(self.field_remap, key=self.field_remap.get)

    def traverse(self, columns: np.ndarray) -> np.ndarray:
        """Leaf entry per record; ``columns`` is (n, len(remap)) in renumbered order."""
        columns = np.asarray(columns)
        node = np.zeros(columns.shape[0], dtype=np.int64)
        rows = np.arange(columns.shape[0])
        while True:
            sel = np.flatnonzero(self.left[node] >= 0)
            if sel.size == 0:
                return node
            nd = node[sel]
            codes = columns[rows[sel], self.field[nd]]
            b = self.boundary[nd]
            go = np.where(self.categorical[nd], codes == b, codes <= b)
            go = np.where(codes == self.missing_bin[nd], self.missing_left[nd], go)
            node[sel] = np.where(go, self.left[nd], self.right[nd])

    def describe(self) -> str:
        lines = ["remap " + " ".join(f"{o}->{n}" for o, n in sorted(self.field_remap.items()))]
        for i in range(self.n_entries):
            if self.left[i] >= 0:
                lines.append(f"{i} f{self.field[i]} b{self.boundary[i]} "
                             f"{'L' if self.missing_left[i] else 'R'} -> {self.left[i]} {self.right[i]}")
            else:
                lines.append(f"{i} leaf {self.weight[i]!r}")
        return "\n".join(lines)


def encode_tree_table(tree: Tree, config: BoosterConfig | None = None) -> TreeTable:
    config = config or BoosterConfig()
    need = tree.n_nodes * config.tree_entry_bytes
    if need > config.sram_bytes:
        raise CapacityError(need, config.sram_bytes, f"tree with {tree.n_nodes} vertices")
    used = tree.fields_used()
    remap = {f: i for i, f in enumerate(used)}
    internal = tree.left >= 0
    renum = np.array([remap[int(f)] if internal[i] else -1 for i, f in enumerate(tree.feature)],
                     dtype=np.int32)
    return TreeTable(renum, tree.boundary.copy(), tree.missing_left.copy(),
                     tree.categorical.copy(), tree.missing_bin.copy(), tree.left.copy(),
                     tree.right.copy(), tree.weight.copy(), remap, config.tree_entry_bytes)
