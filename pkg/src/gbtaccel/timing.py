"""Cycle-approximate Booster model for training steps 1, 3, 5 and batch inference.

Every step is double-buffered, so a step costs the larger of its DRAM stream
time and its BU occupancy, plus one pipeline fill of the broadcast links.
Split finding (step 2) and the cross-cluster histogram reduction run on the
host; their time is converted into accelerator cycles.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .arch import (GROUP_BY_FIELD, BoosterConfig, SramMap, TreeTable, encode_tree_table,
                   make_map)
from .data import FieldSchema, record_stride as _record_stride
from .dram import COLUMN_SPANS, CONTIGUOUS, SCATTERED, DramConfig, dram_stream_cycles
from .engine import GRAD_BYTES, Ensemble, TrainConfig, train
from .trace import POINTER_BYTES, TraceRecord, WorkTrace

STEP_KEYS = ("step1", "step2_host", "step3", "step5", "inference")
OUTPUT_BYTES = 8  # one float64 score per record


class InfeasibleError(ValueError):
    pass


@dataclass
class StepCost:
    cycles: float = 0.0
    dram_cycles: float = 0.0
    compute_cycles: float = 0.0
    host_cycles: float = 0.0
    bytes_read: float = 0.0
    bytes_written: float = 0.0
    sram_accesses: float = 0.0
    host_sram_accesses: float = 0.0
    row_hits: int = 0
    row_misses: int = 0
    passes: int = 0

    def __iadd__(self, o: "StepCost") -> "StepCost":
        for k, v in asdict(o).items():
            setattr(self, k, getattr(self, k) + v)
        return self

    @property
    def dram_bytes(self) -> float:
        return self.bytes_read + self.bytes_written


@dataclass
class CycleReport:
    platform: str
    clock_ghz: float
    steps: dict[str, StepCost] = field(default_factory=lambda: {k: StepCost() for k in STEP_KEYS})
    workload: str = ""
    layout: str = "row_major"
    sram_bw_util: float = 0.0
    dram_bw_util: float = 0.0
    feasible: bool = True
    note: str = ""
    rows: list[dict] = field(default_factory=list, repr=False)

    @property
    def total_cycles(self) -> float:
        return sum(s.cycles for s in self.steps.values())

    @property
    def time_ns(self) -> float:
        return self.total_cycles / self.clock_ghz

    def shares(self) -> dict[str, float]:
        tot = self.total_cycles
        return {k: (s.cycles / tot if tot else 0.0) for k, s in self.steps.items()}

    @property
    def sram_accesses(self) -> float:
        return sum(s.sram_accesses for s in self.steps.values())

    @property
    def host_sram_accesses(self) -> float:
        return sum(s.host_sram_accesses for s in self.steps.values())

    @property
    def dram_bytes(self) -> float:
        return sum(s.dram_bytes for s in self.steps.values())

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("platform", "clock_ghz", "workload", "layout",
                                           "sram_bw_util", "dram_bw_util", "feasible", "note")}
        d["steps"] = {k: asdict(s) for k, s in self.steps.items()}
        d["rows"] = self.rows
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CycleReport":
        d = dict(d)
        steps = {k: StepCost(**v) for k, v in d.pop("steps").items()}
        return cls(steps=steps, **d)

    def summary(self) -> dict:
        out = {"platform": self.platform, "clock_ghz": self.clock_ghz, "workload": self.workload,
               "layout": self.layout, "feasible": self.feasible, "note": self.note,
               "total_cycles": self.total_cycles, "time_ns": self.time_ns,
               "sram_bw_util": self.sram_bw_util, "dram_bw_util": self.dram_bw_util,
               "dram_bytes": self.dram_bytes, "sram_accesses": self.sram_accesses}
        for k, s in self.steps.items():
            out[f"{k}_cycles"] = s.cycles
        return out


@dataclass(frozen=True)
class HostModel:
    """Host that runs split finding and histogram reductions.

    ``bin_scan_cycles`` is the host cost of evaluating one bin in the split
    scan (both missing directions, gain arithmetic, bookkeeping). The default
    host is a 32-core multicore at half parallel efficiency.
    """

    clock_ghz: float = 2.2
    bin_scan_cycles: float = 40.0
    subtract_cycles_per_bin: float = 1.0
    reduce_cycles_per_bin: float = 1.0
    parallel_speedup: float = 16.0

    def step2_ns(self, bins_scanned: float, bins_subtracted: float = 0.0) -> float:
        c = bins_scanned * self.bin_scan_cycles + bins_subtracted * self.subtract_cycles_per_bin
        return c / self.parallel_speedup / self.clock_ghz

    def reduce_ns(self, copies: int, total_bins: int) -> float:
        if copies <= 1:
            return 0.0
        return (copies - 1) * total_bins * self.reduce_cycles_per_bin / self.parallel_speedup / self.clock_ghz


def _dram(n_bytes, pattern, dram, clock, blocks=None, rows=None, span=None):
    return dram_stream_cycles(n_bytes, pattern, dram, clock, blocks=blocks, rows=rows,
                              span_rows=span)


def _record_read(n, stride, dram, clock, blocks, rows, span, root):
    """Row-major record fetch for n records (whole 64-byte blocks)."""
    bb = dram.block_bytes
    if blocks is None:
        blocks = math.ceil(n * stride / bb) if root else n * max(1, -(-stride // bb))
    if root:
        return _dram(blocks * bb, CONTIGUOUS, dram, clock, blocks=blocks, rows=rows), blocks * bb
    return _dram(blocks * bb, SCATTERED, dram, clock, blocks, rows, span), blocks * bb


def _pointer_traffic(n, root, dram, clock) -> tuple[float, float, float]:
    """(cycles, bytes read, bytes written) for a vertex's pointer streams."""
    rd = 0 if root else n * POINTER_BYTES
    wr = n * POINTER_BYTES
    c = _dram(rd, CONTIGUOUS, dram, clock).cycles + _dram(wr, CONTIGUOUS, dram, clock).cycles
    return c, rd, wr


# ---------------------------------------------------------------- step 1

def step1_replicas(sram_map: SramMap, cfg: BoosterConfig) -> tuple[int, int]:
    """(max histogram-set replicas, passes over the records)."""
    if sram_map.n_bus > cfg.total_bus:
        return 1, -(-sram_map.n_bus // cfg.total_bus)
    clusters_per_set = max(1, -(-sram_map.n_bus // cfg.bus_per_cluster))
    return max(1, cfg.n_clusters // clusters_per_set), 1


def sim_step1(subset_size: int, schema: Sequence[FieldSchema], sram_map: SramMap,
              cfg: BoosterConfig, dram: DramConfig, *, blocks: int | None = None,
              rows: int | None = None, span: int | None = None, root: bool = True,
              stride: int | None = None, host: HostModel | None = None,
              replicas: int | None = None) -> StepCost:
    """Histogram binning of one vertex's records.

    Records are partitioned across cluster replicas of the histogram set. The
    replica count minimises binning plus host reduction time (more replicas
    than DRAM can feed only add reduction work) unless ``replicas`` is given.
    """
    n, d = subset_size, len(schema)
    stride = stride or _record_stride(d, cfg.block_bytes)
    max_rep, passes = step1_replicas(sram_map, cfg)
    occ = sram_map.max_fields_per_bu * cfg.bu_cycles_per_field  # cycles per record on worst BU
    rec, rbytes = _record_read(n, stride, dram, cfg.clock_ghz, blocks, rows, span, root)
    ptr_r = 0 if root else n * POINTER_BYTES  # binning emits no pointers
    ptr_c = _dram(ptr_r, CONTIGUOUS, dram, cfg.clock_ghz).cycles
    dram_c = passes * (rec.cycles + ptr_c)
    total_bins = sum(sram_map.field_bins)

    def reduce_cycles(r):
        return host.reduce_ns(r, total_bins) * cfg.clock_ghz if host is not None and n else 0.0

    if replicas is None:
        replicas = min(range(1, max_rep + 1),
                       key=lambda r: max(dram_c, passes * n * occ / r) + reduce_cycles(r))
    replicas = min(replicas, max_rep)
    bu_c = passes * n * occ / replicas
    out = StepCost(passes=passes)
    out.dram_cycles = dram_c
    out.compute_cycles = bu_c
    out.bytes_read = passes * (rbytes + ptr_r)
    out.row_hits, out.row_misses = passes * rec.row_hits, passes * rec.row_misses
    out.sram_accesses = n * d
    out.cycles = max(dram_c, bu_c) + cfg.fill_cycles
    if host is not None and n:
        out.host_cycles = reduce_cycles(replicas)
        out.host_sram_accesses = (replicas - 1) * total_bins
        out.cycles += out.host_cycles
    return out


def rate_match_bus(cfg: BoosterConfig, dram: DramConfig, fields_per_record: int = 64) -> float:
    """BUs needed so binning keeps pace with DRAM for fields_per_record-byte records."""
    blocks_per_cycle = dram.sustained_gbps / cfg.clock_ghz / cfg.block_bytes
    records_per_block = cfg.block_bytes / max(fields_per_record, 1)
    return blocks_per_cycle * records_per_block * fields_per_record * cfg.bu_cycles_per_field


def step1_crossover_bus(schema: Sequence[FieldSchema], cfg: BoosterConfig, dram: DramConfig,
                        n_records: int = 10_000_000, mapping: str = GROUP_BY_FIELD) -> int:
    """Smallest BU count (whole clusters) at which a root binning pass is DRAM-bound."""
    for c in range(1, 100_000):
        trial = BoosterConfig(**{**cfg.__dict__, "n_clusters": c})
        smap = make_map(schema, trial, mapping)
        max_rep, passes = step1_replicas(smap, trial)
        s = sim_step1(n_records, schema, smap, trial, dram, replicas=max_rep)
        if s.compute_cycles <= s.dram_cycles:
            return trial.total_bus
    raise InfeasibleError("no crossover found")


# ---------------------------------------------------------------- steps 3 and 5

def sim_step3(subset_size: int, fmt: str, cfg: BoosterConfig, dram: DramConfig, *,
              stride: int = 64, blocks: int | None = None, rows: int | None = None,
              span: int | None = None, root: bool = False) -> StepCost:
    n = subset_size
    out = StepCost(passes=1)
    if fmt == "row_major":
        rec, rbytes = _record_read(n, stride, dram, cfg.clock_ghz, blocks, rows, span, root)
    elif fmt == "column_major":
        rbytes = n
        if root:
            rec = _dram(n, CONTIGUOUS, dram, cfg.clock_ghz)
        else:
            rec = _dram(n, COLUMN_SPANS, dram, cfg.clock_ghz, blocks if blocks is not None else n,
                        rows, span)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    ptr_c, ptr_r, ptr_w = _pointer_traffic(n, root, dram, cfg.clock_ghz)
    out.dram_cycles = rec.cycles + ptr_c
    out.compute_cycles = n / cfg.total_bus
    out.bytes_read = rbytes + ptr_r
    out.bytes_written = ptr_w
    out.row_hits, out.row_misses = rec.row_hits, rec.row_misses
    out.sram_accesses = n
    out.cycles = max(out.dram_cycles, out.compute_cycles) + cfg.fill_cycles
    return out


def sim_step5(n_records: int, tree_table: TreeTable | None, fields_used: int,
              cfg: BoosterConfig, dram: DramConfig, *, fmt: str = "column_major",
              stride: int = 64, path_sum: float | None = None) -> StepCost:
    """One-tree traversal of every record plus the G/H rewrite stream.

    ``path_sum`` is the total number of internal vertices visited; without it
    every record is assumed to walk the table's deepest path.
    """
    n = n_records
    if path_sum is None:
        path_sum = n * (_table_depth(tree_table) if tree_table is not None else 0)
    if fmt == "column_major":
        rbytes = n * fields_used
    elif fmt == "row_major":
        rbytes = math.ceil(n * stride / cfg.block_bytes) * cfg.block_bytes
    else:
        raise ValueError(f"unknown format {fmt!r}")
    rd = rbytes + n * GRAD_BYTES
    wr = n * GRAD_BYTES
    out = StepCost(passes=1)
    out.dram_cycles = (_dram(rd, CONTIGUOUS, dram, cfg.clock_ghz).cycles
                       + _dram(wr, CONTIGUOUS, dram, cfg.clock_ghz).cycles)
    out.compute_cycles = (path_sum * cfg.sram_access_cycles
                          + n * cfg.traversal_overhead_cycles) / cfg.total_bus
    out.bytes_read, out.bytes_written = rd, wr
    out.sram_accesses = path_sum + n
    out.cycles = max(out.dram_cycles, out.compute_cycles) + cfg.fill_cycles
    return out


def _table_depth(t: TreeTable) -> int:
    depth = [0] * t.n_entries
    best = 0
    for i in range(t.n_entries):
        if t.left[i] >= 0:
            depth[t.left[i]] = depth[t.right[i]] = depth[i] + 1
            best = max(best, depth[i] + 1)
    return best


# ---------------------------------------------------------------- training

def sim_training(trace: WorkTrace, cfg: BoosterConfig | None = None,
                 dram: DramConfig | None = None, host: HostModel | None = None,
                 mapping: str = GROUP_BY_FIELD, layout: str = "column_major",
                 platform: str = "booster") -> CycleReport:
    """Replay a training work trace on the Booster model."""
    cfg = cfg or BoosterConfig()
    dram = dram or DramConfig()
    host = host or HostModel()
    meta = trace.meta
    schema = meta.schema()
    smap = make_map(schema, cfg, mapping)
    rep = CycleReport(platform, cfg.clock_ghz, workload=trace.digest(), layout=layout)
    s1_cycles = s1_dram = s1_ideal = 0.0
    max_rep, passes = step1_replicas(smap, cfg)
    for r in trace.records:
        cost = _booster_record(r, meta, schema, smap, cfg, dram, host, layout)
        key = {1: "step1", 2: "step2_host", 3: "step3", 5: "step5"}[r.step]
        rep.steps[key] += cost
        rep.rows.append({"tree": r.tree, "vertex": r.vertex, "depth": r.depth, "step": key,
                         "records": r.records, "cycles": cost.cycles,
                         "bytes": cost.dram_bytes})
        if r.step == 1:
            busy = cost.cycles - cfg.fill_cycles - cost.host_cycles
            s1_cycles += busy
            s1_dram += cost.dram_cycles
            used = min(smap.n_bus * max_rep, cfg.total_bus)
            s1_ideal += passes * r.records * meta.n_fields * cfg.bu_cycles_per_field / used
    if s1_cycles > 0:
        rep.sram_bw_util = min(1.0, s1_ideal / s1_cycles)
        rep.dram_bw_util = min(1.0, s1_dram / s1_cycles)
    return rep


def _booster_record(r: TraceRecord, meta, schema, smap, cfg, dram, host, layout) -> StepCost:
    stride = meta.record_stride
    if r.step == 1:
        return sim_step1(r.records, schema, smap, cfg, dram, blocks=r.rm_blocks, rows=r.rm_rows,
                         span=r.rm_span, root=r.root, stride=stride, host=host)
    if r.step == 2:
        c = host.step2_ns(r.bins_scanned, r.bins_subtracted) * cfg.clock_ghz
        return StepCost(cycles=c, host_cycles=c, host_sram_accesses=r.bins_scanned + r.bins_subtracted)
    if r.step == 3:
        if layout == "column_major":
            return sim_step3(r.records, layout, cfg, dram, stride=stride, blocks=r.col_blocks,
                             rows=r.col_rows, span=r.col_span, root=r.root)
        return sim_step3(r.records, layout, cfg, dram, stride=stride, blocks=r.rm_blocks,
                         rows=r.rm_rows, span=r.rm_span, root=r.root)
    if r.step == 5:
        return sim_step5(r.records, None, r.fields_used, cfg, dram, fmt=layout, stride=stride,
                         path_sum=r.node_visits)
    raise ValueError(f"unknown step {r.step}")


def train_and_simulate(dataset, train_config: TrainConfig, cfg: BoosterConfig | None = None,
                       dram: DramConfig | None = None, host: HostModel | None = None,
                       mapping: str = GROUP_BY_FIELD, layout: str = "column_major"):
    ens, trace = train(dataset, train_config)
    return ens, trace, sim_training(trace, cfg, dram, host, mapping, layout)


# ---------------------------------------------------------------- inference

def tree_path_means(ensemble: Ensemble) -> list[float]:
    return [t.mean_path_length() for t in ensemble.trees]


def sim_batch_inference(ensemble: Ensemble, n_records: int, cfg: BoosterConfig | None = None,
                        dram: DramConfig | None = None, replicas: int | None = None, *,
                        stride: int = 64, path_means: Sequence[float] | None = None,
                        chips: int = 1) -> CycleReport:
    """Every BU holds one tree; whole records are broadcast to all BUs.

    The slowest tree (longest mean path) sets the per-record BU occupancy, which
    ``replicas`` copies of the ensemble divide. ``chips`` spreads trees
    round-robin over that many chips that each see every record.
    """
    cfg = cfg or BoosterConfig()
    dram = dram or DramConfig()
    trees = ensemble.trees
    per_chip = -(-len(trees) // chips) if trees else 0
    if replicas is None:
        replicas = max(1, cfg.total_bus // per_chip) if per_chip else 1
    if per_chip * replicas > cfg.total_bus:
        raise InfeasibleError(f"{per_chip} trees x {replicas} replicas exceed {cfg.total_bus} BUs;"
                              f" use more chips")
    for t in trees:
        encode_tree_table(t, cfg)
    means = list(path_means) if path_means is not None else tree_path_means(ensemble)
    n = n_records
    occ = max((m * cfg.sram_access_cycles for m in means), default=0.0)
    rbytes = math.ceil(n * stride / cfg.block_bytes) * cfg.block_bytes
    rep = CycleReport("booster", cfg.clock_ghz, layout="row_major")
    s = rep.steps["inference"]
    s.dram_cycles = (_dram(rbytes, CONTIGUOUS, dram, cfg.clock_ghz).cycles
                     + _dram(n * OUTPUT_BYTES, CONTIGUOUS, dram, cfg.clock_ghz).cycles)
    s.compute_cycles = n * occ / replicas
    s.bytes_read, s.bytes_written = rbytes, n * OUTPUT_BYTES
    s.sram_accesses = n * sum(means)
    s.passes = 1
    s.cycles = max(s.dram_cycles, s.compute_cycles) + cfg.fill_cycles
    rep.note = f"replicas={replicas} chips={chips}"
    return rep
