"""Per-step work records emitted by training and replayed by the cost models.

One record per (tree, vertex, step). Steps 1-3 are per vertex; step 5 is one
record per tree. Layout byte counts describe what each record format would
move for that step: ``rm_*`` for row-major record blocks, ``col_*`` for the
redundant column-major format (useful bytes, plus the 64-byte blocks and DRAM
rows the column spans touch).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import CATEGORICAL, NUMERIC, FieldSchema

ROW_BYTES = 1024  # DRAM row size the contiguity counts are computed against
POINTER_BYTES = 4


@dataclass
class TraceRecord:
    tree: int
    vertex: int
    depth: int
    step: int
    records: int = 0
    fields: int = 0
    bin_updates: int = 0
    node_visits: int = 0
    bins_scanned: int = 0
    bins_subtracted: int = 0
    rm_bytes: int = 0
    rm_blocks: int = 0
    rm_rows: int = 0
    col_bytes: int = 0
    col_blocks: int = 0
    col_rows: int = 0
    rm_span: int = 0
    col_span: int = 0
    root: bool = False
    fields_used: int = 0
    path_max: int = 0
    split_field: int = -1


TRACE_COLUMNS = tuple(f.name for f in fields(TraceRecord))


@dataclass
class TraceMeta:
    n_records: int
    n_fields: int
    record_stride: int
    block_bytes: int
    row_bytes: int
    bins_per_field: list[int]
    kinds: list[str]
    n_trees: int = 0
    max_depth: int = 0

    @property
    def total_bins(self) -> int:
        return sum(self.bins_per_field)

    def schema(self) -> list[FieldSchema]:
        out, start = [], 0
        for f, (nb, kind) in enumerate(zip(self.bins_per_field, self.kinds)):
            if kind == CATEGORICAL:
                fs = FieldSchema(f, CATEGORICAL, n_categories=nb - 1, start_feature=start)
            else:
                fs = FieldSchema(f, NUMERIC, max_bins=nb, start_feature=start)
            out.append(fs)
            start += fs.n_features
        return out


@dataclass
class WorkTrace:
    meta: TraceMeta
    records: list[TraceRecord] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    def step(self, s: int) -> list[TraceRecord]:
        return [r for r in self.records if r.step == s]

    def totals(self) -> dict[int, dict[str, int]]:
        out: dict[int, dict[str, int]] = {}
        for r in self.records:
            acc = out.setdefault(r.step, {k: 0 for k in ("records", "bin_updates", "node_visits",
                                                          "bins_scanned", "rm_bytes", "col_bytes")})
            for k in acc:
                acc[k] += getattr(r, k)
        return out

    def digest(self) -> str:
        """Stable workload identity (used to refuse comparing unrelated runs)."""
        h = hashlib.sha256()
        h.update(json.dumps(asdict(self.meta), sort_keys=True).encode())
        for r in self.records:
            h.update(json.dumps(asdict(r), sort_keys=True).encode())
        return h.hexdigest()[:16]

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"kind": "meta", **asdict(self.meta)}, sort_keys=True) + "\n")
            for r in self.records:
                fh.write(json.dumps({"kind": "step", **asdict(r)}, sort_keys=True) + "\n")
            for k, loss in enumerate(self.losses):
                fh.write(json.dumps({"kind": "loss", "tree": k, "loss": loss}) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "WorkTrace":
        meta, records, losses = None, [], []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                kind = obj.pop("kind")
                if kind == "meta":
                    meta = TraceMeta(**obj)
                elif kind == "step":
                    records.append(TraceRecord(**obj))
                elif kind == "loss":
                    losses.append(obj["loss"])
        if meta is None:
            raise ValueError(f"{path}: no meta record")
        return cls(meta, records, losses)


def _span(a: np.ndarray) -> int:
    return int(a[-1] - a[0]) + 1 if a.size else 0


def _distinct_sorted(a: np.ndarray) -> int:
    if a.size == 0:
        return 0
    return int(np.count_nonzero(np.diff(a))) + 1


def layout_counts(idx: np.ndarray, record_stride: int, block_bytes: int = 64,
                  row_bytes: int = ROW_BYTES) -> dict[str, int]:
    """Block and DRAM-row footprints of a sorted record subset in both layouts."""
    idx = np.asarray(idx, dtype=np.int64)
    if record_stride <= block_bytes:
        rm_blocks = _distinct_sorted(idx // (block_bytes // record_stride))
    else:
        rm_blocks = idx.size * (record_stride // block_bytes)
    return {
        "rm_blocks": rm_blocks,
        "rm_rows": _distinct_sorted((idx * record_stride) // row_bytes),
        "col_blocks": _distinct_sorted(idx // block_bytes),
        "col_rows": _distinct_sorted(idx // row_bytes),
        "rm_span": _span((idx * record_stride) // row_bytes),
        "col_span": _span(idx // row_bytes),
    }
