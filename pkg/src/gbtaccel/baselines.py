"""Ideal-parallelism baselines sharing Booster's DRAM and host models.

A baseline executes each step's primitive operations spread perfectly over
``parallelism`` workers, limited only by the same DRAM streams Booster sees.
Step-1 histograms are privatized per worker and reduced at the end of each
binning pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dram import DramConfig
from .engine import GRAD_BYTES
from .timing import (CONTIGUOUS, COLUMN_SPANS, CycleReport, HostModel, InfeasibleError,
                     StepCost, _dram, _pointer_traffic, _record_read)
from .trace import POINTER_BYTES, TraceRecord, WorkTrace

IDEAL32 = "ideal32"
IDEAL_GPU = "ideal_gpu"
INTER_RECORD = "inter_record"
SEQUENTIAL = "sequential"

BOOSTER_SRAM_BYTES = 3200 * 2048
# Per-bin footprint of one inter-record histogram copy, calibrated so a
# 28-field, 256-bin schema fits 271 copies in Booster's aggregate SRAM.
IR_BYTES_PER_BIN = 3.3735
GPU_BYTES_PER_BIN = 8


@dataclass(frozen=True)
class OpCosts:
    """Cycles per primitive operation on one baseline worker."""

    bin_update: float = 6.0
    predicate: float = 2.0
    node_visit: float = 4.0
    grad_update: float = 10.0
    reduce_per_bin: float = 1.0


@dataclass(frozen=True)
class BaselineConfig:
    kind: str
    parallelism: int
    clock_ghz: float
    op_cycles: OpCosts = field(default_factory=OpCosts)
    ir_copy_bytes: float = 0.0
    ir_cap: int = 3200
    ir_sram_bytes: int = BOOSTER_SRAM_BYTES
    column_major: bool = False

    def __post_init__(self):
        if self.parallelism < 1 and self.kind != INTER_RECORD:
            raise ValueError("parallelism must be >= 1")


def ideal32(**kw) -> BaselineConfig:
    return BaselineConfig(IDEAL32, 32, 2.2, **kw)


def ideal_gpu(**kw) -> BaselineConfig:
    return BaselineConfig(IDEAL_GPU, 64, 2.2, **kw)


def sequential(**kw) -> BaselineConfig:
    return BaselineConfig(SEQUENTIAL, 1, 2.2, **kw)


def inter_record(total_bins: int, bytes_per_bin: float = IR_BYTES_PER_BIN, **kw) -> BaselineConfig:
    return BaselineConfig(INTER_RECORD, 0, 1.0, ir_copy_bytes=total_bins * bytes_per_bin, **kw)


def ir_units(cfg: BaselineConfig) -> int:
    """Histogram copies (hence record-parallel units) that fit on chip."""
    if cfg.ir_copy_bytes <= 0:
        raise ValueError("ir_copy_bytes must be positive")
    return min(cfg.ir_cap, math.floor(cfg.ir_sram_bytes / cfg.ir_copy_bytes))


def effective_parallelism(cfg: BaselineConfig) -> int:
    if cfg.kind == INTER_RECORD:
        p = ir_units(cfg)
        if p < 1:
            raise InfeasibleError(
                f"one histogram copy needs {cfg.ir_copy_bytes:.0f} bytes, "
                f"only {cfg.ir_sram_bytes} bytes of SRAM")
        return p
    return cfg.parallelism


def _step_cost(r: TraceRecord, meta, cfg: BaselineConfig, p: int, dram: DramConfig,
               host: HostModel) -> StepCost:
    op, clock, stride = cfg.op_cycles, cfg.clock_ghz, meta.record_stride
    out = StepCost(passes=1)
    if r.step == 2:
        c = host.step2_ns(r.bins_scanned, r.bins_subtracted) * clock
        return StepCost(cycles=c, host_cycles=c, host_sram_accesses=r.bins_scanned + r.bins_subtracted)
    if r.step == 1:
        rec, rbytes = _record_read(r.records, stride, dram, clock, r.rm_blocks, r.rm_rows,
                                   r.rm_span, r.root)
        ptr = 0 if r.root else r.records * POINTER_BYTES
        out.dram_cycles = rec.cycles + _dram(ptr, CONTIGUOUS, dram, clock).cycles
        out.compute_cycles = r.bin_updates * op.bin_update / p
        out.bytes_read = rbytes + ptr
        out.row_hits, out.row_misses = rec.row_hits, rec.row_misses
        copies = min(p, max(r.records, 1))
        reduce_bins = (copies - 1) * meta.total_bins
        out.sram_accesses = r.bin_updates + reduce_bins
        out.cycles = (max(out.dram_cycles, out.compute_cycles)
                      + reduce_bins * op.reduce_per_bin / p)
        return out
    if r.step == 3:
        if cfg.column_major:
            if r.root:
                rec = _dram(r.records, CONTIGUOUS, dram, clock)
            else:
                rec = _dram(r.records, COLUMN_SPANS, dram, clock, r.col_blocks, r.col_rows,
                            r.col_span)
            rbytes = r.records
        else:
            rec, rbytes = _record_read(r.records, stride, dram, clock, r.rm_blocks, r.rm_rows,
                                       r.rm_span, r.root)
        pc, pr, pw = _pointer_traffic(r.records, r.root, dram, clock)
        out.dram_cycles = rec.cycles + pc
        out.compute_cycles = r.records * op.predicate / p
        out.bytes_read, out.bytes_written = rbytes + pr, pw
        out.row_hits, out.row_misses = rec.row_hits, rec.row_misses
        out.sram_accesses = r.records
        out.cycles = max(out.dram_cycles, out.compute_cycles)
        return out
    if r.step == 5:
        n = r.records
        if cfg.column_major:
            rbytes = n * r.fields_used
        else:
            rbytes = math.ceil(n * stride / meta.block_bytes) * meta.block_bytes
        rd, wr = rbytes + n * GRAD_BYTES, n * GRAD_BYTES
        out.dram_cycles = (_dram(rd, CONTIGUOUS, dram, clock).cycles
                           + _dram(wr, CONTIGUOUS, dram, clock).cycles)
        out.compute_cycles = (r.node_visits * op.node_visit + n * op.grad_update) / p
        out.bytes_read, out.bytes_written = rd, wr
        out.sram_accesses = r.node_visits + n
        out.cycles = max(out.dram_cycles, out.compute_cycles)
        return out
    raise ValueError(f"unknown step {r.step}")


def baseline_step_cycles(trace: WorkTrace, cfg: BaselineConfig, dram: DramConfig | None = None,
                         host: HostModel | None = None) -> CycleReport:
    """Replay a training trace on an ideal baseline.

    An inter-record configuration whose single histogram copy does not fit
    returns an infeasible report rather than raising.
    """
    dram = dram or DramConfig()
    host = host or HostModel()
    rep = CycleReport(cfg.kind, cfg.clock_ghz, workload=trace.digest(),
                      layout="column_major" if cfg.column_major else "row_major")
    try:
        p = effective_parallelism(cfg)
    except InfeasibleError as e:
        rep.feasible, rep.note = False, str(e)
        return rep
    rep.note = f"parallelism={p}"
    key = {1: "step1", 2: "step2_host", 3: "step3", 5: "step5"}
    for r in trace.records:
        c = _step_cost(r, trace.meta, cfg, p, dram, host)
        rep.steps[key[r.step]] += c
        rep.rows.append({"tree": r.tree, "vertex": r.vertex, "depth": r.depth, "step": key[r.step],
                         "records": r.records, "cycles": c.cycles, "bytes": c.dram_bytes})
    return rep


def sequential_reference(trace: WorkTrace, dram: DramConfig | None = None,
                         host: HostModel | None = None) -> CycleReport:
    """One worker at 2.2 GHz with a single-threaded host."""
    host = host or HostModel()
    h1 = HostModel(host.clock_ghz, host.bin_scan_cycles, host.subtract_cycles_per_bin,
                   host.reduce_cycles_per_bin, parallel_speedup=1.0)
    return baseline_step_cycles(trace, sequential(), dram, h1)


def baseline_inference(n_records: int, path_means, cfg: BaselineConfig,
                       dram: DramConfig | None = None, stride: int = 64) -> CycleReport:
    """Batch inference: each record walks every tree, trees shared by all workers."""
    dram = dram or DramConfig()
    p = effective_parallelism(cfg)
    op = cfg.op_cycles
    rep = CycleReport(cfg.kind, cfg.clock_ghz)
    s = rep.steps["inference"]
    rbytes = math.ceil(n_records * stride / 64) * 64
    visits = n_records * sum(path_means)
    s.dram_cycles = (_dram(rbytes, CONTIGUOUS, dram, cfg.clock_ghz).cycles
                     + _dram(n_records * 8, CONTIGUOUS, dram, cfg.clock_ghz).cycles)
    s.compute_cycles = (visits * op.node_visit + n_records * len(path_means)) / p
    s.bytes_read, s.bytes_written = rbytes, n_records * 8
    s.sram_accesses = visits
    s.cycles = max(s.dram_cycles, s.compute_cycles)
    s.passes = 1
    rep.note = f"parallelism={p}"
    return rep


# ---------------------------------------------------------------- comparison

class WorkloadMismatch(ValueError):
    pass


def geomean(values) -> float:
    vals = [float(v) for v in values]
    if not vals or any(v <= 0 for v in vals):
        raise ValueError("geomean needs positive values")
    return math.exp(sum(math.log(v) for v in vals) / len(vals))


def speedup_table(reports: list[CycleReport], reference: str = IDEAL32) -> list[dict]:
    """Wall time and speedup over ``reference`` for each feasible report."""
    digests = {r.workload for r in reports}
    if len(digests) > 1:
        raise WorkloadMismatch(f"reports come from different workloads: {sorted(digests)}")
    ref = next((r for r in reports if r.platform == reference and r.feasible), None)
    if ref is None:
        raise ValueError(f"no feasible {reference} report to normalize against")
    rows = []
    for r in reports:
        row = {"platform": r.platform, "feasible": r.feasible, "time_ns": r.time_ns if r.feasible else float("nan"),
               "speedup": ref.time_ns / r.time_ns if r.feasible and r.time_ns > 0 else float("nan")}
        for k, v in r.shares().items():
            row[f"share_{k}"] = v
        rows.append(row)
    return rows
