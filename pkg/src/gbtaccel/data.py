"""Tabular ingestion, quantile binning and the dual-layout quantized dataset.

A quantized record stores one byte per field (the bin index). Records are kept
twice: row-major, padded into 64-byte blocks, and column-major, one contiguous
byte array per field. Gradient pairs live in their own buffer.
"""

from __future__ import annotations

import csv
import math
import struct
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"

MAX_BINS = 256  # one byte per field: 255 value bins + the missing bin
DEFAULT_MAX_BINS = 256
BLOCK_BYTES = 64

MAGIC = b"BSTRDSv1"
_MAGIC_STEM = b"BSTRDSv"


class IngestError(ValueError):
    """Raw data that cannot be quantized against its schema."""

    def __init__(self, message: str, field_id: int | None = None, record: int | None = None):
        super().__init__(message)
        self.field_id = field_id
        self.record = record


class DatasetFormatError(ValueError):
    """Binary dataset file is malformed. ``kind`` is one of
    ``magic``, ``version``, ``truncated``, ``checksum``."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


@dataclass(frozen=True)
class FieldSchema:
    field_id: int
    kind: str
    n_categories: int = 0
    max_bins: int = DEFAULT_MAX_BINS
    start_feature: int = 0
    name: str = ""

    @property
    def n_bins(self) -> int:
        if self.kind == CATEGORICAL:
            return self.n_categories + 1
        return self.max_bins

    @property
    def missing_bin(self) -> int:
        return self.n_bins - 1

    @property
    def n_features(self) -> int:
        """Width of the field after (logical) one-hot expansion."""
        return self.n_categories if self.kind == CATEGORICAL else 1


@dataclass(frozen=True)
class BinMap:
    field_id: int
    upper_boundaries: tuple[float, ...]
    missing_bin: int

    @property
    def n_value_bins(self) -> int:
        return self.missing_bin

    def transform(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        out = np.searchsorted(np.asarray(self.upper_boundaries, dtype=np.float64), values, side="left")
        out = np.minimum(out, max(self.n_value_bins - 1, 0))
        out[np.isnan(values)] = self.missing_bin
        return out.astype(np.uint8)


def build_bin_map(values: Sequence[float] | np.ndarray, max_bins: int = DEFAULT_MAX_BINS,
                  field_id: int = 0) -> BinMap:
    """Exact-quantile bin map. Bin ``i`` holds values ``<= upper_boundaries[i]``;
    the last value bin is open-ended and the missing bin follows it."""
    if max_bins < 2:
        raise ValueError("max_bins must be >= 2 (one bin is reserved for missing values)")
    if max_bins > MAX_BINS:
        raise ValueError(f"max_bins {max_bins} exceeds the one-byte cap of {MAX_BINS}")
    arr = np.asarray(values, dtype=np.float64)
    present = np.sort(arr[~np.isnan(arr)])
    if present.size == 0:
        warnings.warn(f"field {field_id}: all values missing; only the missing bin is kept",
                      stacklevel=2)
        return BinMap(field_id, (), 0)

    n = present.size
    n_target = max_bins - 1
    distinct = np.unique(present)
    if distinct.size <= n_target:
        cuts = distinct[:-1]
    else:
        ranks = (np.arange(1, n_target, dtype=np.int64) * n) // n_target - 1
        cuts = np.unique(present[ranks])
        cuts = cuts[cuts < present[-1]]
    boundaries = tuple(float(c) for c in cuts)
    return BinMap(field_id, boundaries, len(boundaries) + 1)


@dataclass
class RawTable:
    """Column store of raw values. Numeric columns are float with NaN for
    missing; categorical columns are integer codes with -1 for missing."""

    names: list[str]
    kinds: list[str]
    columns: list[np.ndarray]
    labels: np.ndarray
    n_categories: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.n_categories:
            self.n_categories = [0] * len(self.columns)

    @property
    def n_records(self) -> int:
        return int(self.labels.shape[0])

    def __eq__(self, other):
        if not isinstance(other, RawTable):
            return NotImplemented
        return (self.names == other.names and self.kinds == other.kinds
                and self.n_categories == other.n_categories
                and np.array_equal(self.labels, other.labels)
                and all(np.array_equal(a, b, equal_nan=True)
                        for a, b in zip(self.columns, other.columns)))


def build_schema(raw: RawTable, bin_maps: dict[int, BinMap]) -> list[FieldSchema]:
    schema = []
    start = 0
    for f, kind in enumerate(raw.kinds):
        if kind == CATEGORICAL:
            n_cat = raw.n_categories[f]
            if n_cat + 1 > MAX_BINS:
                raise IngestError(f"field {f}: {n_cat} categories do not fit a one-byte bin index",
                                  field_id=f)
            fs = FieldSchema(f, CATEGORICAL, n_categories=n_cat, start_feature=start,
                             name=raw.names[f])
        else:
            fs = FieldSchema(f, NUMERIC, max_bins=bin_maps[f].missing_bin + 1,
                             start_feature=start, name=raw.names[f])
        schema.append(fs)
        start += fs.n_features
    return schema


def fit_bin_maps(raw: RawTable, max_bins: int = DEFAULT_MAX_BINS) -> dict[int, BinMap]:
    return {f: build_bin_map(col, max_bins, field_id=f)
            for f, (kind, col) in enumerate(zip(raw.kinds, raw.columns)) if kind == NUMERIC}


def record_stride(n_fields: int, block_bytes: int = BLOCK_BYTES, pack_small: bool = True) -> int:
    """Bytes one record occupies in the row-major layout."""
    if pack_small and n_fields <= block_bytes // 2:
        return block_bytes // 2
    return max(1, math.ceil(n_fields / block_bytes)) * block_bytes


@dataclass(frozen=True, eq=False)
class QuantizedDataset:
    schema: tuple[FieldSchema, ...]
    row_blocks: np.ndarray  # (n, stride) uint8
    columns: np.ndarray  # (d, n) uint8, each field contiguous
    labels: np.ndarray
    grad_buffer: np.ndarray  # (n, 2) float64: g, h
    bin_maps: tuple[BinMap, ...] = ()
    block_bytes: int = BLOCK_BYTES

    @property
    def n_records(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_fields(self) -> int:
        return len(self.schema)

    @property
    def record_stride(self) -> int:
        return int(self.row_blocks.shape[1])

    @property
    def bins_per_field(self) -> list[int]:
        return [fs.n_bins for fs in self.schema]

    @property
    def total_bins(self) -> int:
        return sum(self.bins_per_field)

    def column(self, f: int) -> np.ndarray:
        return self.columns[f]

    def with_gradients(self, grads: np.ndarray) -> "QuantizedDataset":
        grads = np.ascontiguousarray(grads, dtype=np.float64).reshape(self.n_records, 2)
        grads.setflags(write=False)
        return QuantizedDataset(self.schema, self.row_blocks, self.columns, self.labels,
                                grads, self.bin_maps, self.block_bytes)

    def __eq__(self, other):
        if not isinstance(other, QuantizedDataset):
            return NotImplemented
        return (self.schema == other.schema and self.bin_maps == other.bin_maps
                and self.block_bytes == other.block_bytes
                and np.array_equal(self.row_blocks, other.row_blocks)
                and np.array_equal(self.columns, other.columns)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.grad_buffer, other.grad_buffer))

    __hash__ = None


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


def make_dataset(schema: Sequence[FieldSchema], columns: np.ndarray, labels: np.ndarray,
                 grad_buffer: np.ndarray | None = None, bin_maps: Sequence[BinMap] = (),
                 block_bytes: int = BLOCK_BYTES, pack_small_records: bool = True) -> QuantizedDataset:
    """Assemble both layouts from per-field bin-index columns."""
    columns = np.ascontiguousarray(columns, dtype=np.uint8)
    d, n = columns.shape
    if d != len(schema):
        raise ValueError(f"{d} columns for {len(schema)} schema fields")
    stride = record_stride(d, block_bytes, pack_small_records)
    rows = np.zeros((n, stride), dtype=np.uint8)
    rows[:, :d] = columns.T
    labels = np.ascontiguousarray(labels, dtype=np.float64)
    if grad_buffer is None:
        grad_buffer = np.zeros((n, 2), dtype=np.float64)
    grad_buffer = np.ascontiguousarray(grad_buffer, dtype=np.float64)
    _freeze(columns, rows, labels, grad_buffer)
    return QuantizedDataset(tuple(schema), rows, columns, labels, grad_buffer,
                            tuple(bin_maps), block_bytes)


def quantize_dataset(raw: RawTable, schema: Sequence[FieldSchema], bin_maps: dict[int, BinMap],
                     pack_small_records: bool = True, block_bytes: int = BLOCK_BYTES) -> QuantizedDataset:
    n = raw.n_records
    cols = np.empty((len(schema), n), dtype=np.uint8)
    for fs in schema:
        f = fs.field_id
        col = raw.columns[f]
        if raw.kinds[f] != fs.kind:
            raise IngestError(f"field {f}: raw column is {raw.kinds[f]}, schema says {fs.kind}",
                              field_id=f)
        if fs.kind == CATEGORICAL:
            codes = np.asarray(col, dtype=np.int64)
            bad = np.flatnonzero(codes >= fs.n_categories)
            if bad.size:
                r = int(bad[0])
                raise IngestError(f"field {f} record {r}: category {codes[r]} >= {fs.n_categories}",
                                  field_id=f, record=r)
            bad = np.flatnonzero(codes < -1)
            if bad.size:
                r = int(bad[0])
                raise IngestError(f"field {f} record {r}: negative category {codes[r]}",
                                  field_id=f, record=r)
            cols[f] = np.where(codes < 0, fs.missing_bin, codes)
        else:
            bm = bin_maps[f]
            if bm.missing_bin != fs.missing_bin:
                raise IngestError(f"field {f}: bin map and schema disagree on bin count", field_id=f)
            cols[f] = bm.transform(col)
    ordered_maps = [bin_maps[f] for f in sorted(bin_maps)]
    return make_dataset(schema, cols, raw.labels, bin_maps=ordered_maps,
                        block_bytes=block_bytes, pack_small_records=pack_small_records)


def prepare(raw: RawTable, max_bins: int = DEFAULT_MAX_BINS, **kwargs) -> QuantizedDataset:
    """Fit bin maps, derive the schema and quantize in one go."""
    maps = fit_bin_maps(raw, max_bins)
    return quantize_dataset(raw, build_schema(raw, maps), maps, **kwargs)


def replicate(ds: QuantizedDataset, factor: int) -> QuantizedDataset:
    """Pure record replication (the whole dataset repeated ``factor`` times)."""
    if factor < 1:
        raise ValueError("scale factor must be >= 1")
    if factor == 1:
        return ds
    cols = np.tile(ds.columns, (1, factor))
    rows = np.tile(ds.row_blocks, (factor, 1))
    labels = np.tile(ds.labels, factor)
    grads = np.tile(ds.grad_buffer, (factor, 1))
    _freeze(cols, rows, labels, grads)
    return QuantizedDataset(ds.schema, rows, cols, labels, grads, ds.bin_maps, ds.block_bytes)


def rebuild_columns(row_blocks: np.ndarray, n_fields: int) -> np.ndarray:
    return np.ascontiguousarray(row_blocks[:, :n_fields].T)


# --------------------------------------------------------------------------- CSV


def read_csv(path: str | Path, label: str = "label") -> RawTable:
    """Header cells ``name`` (numeric), ``name:cat`` or ``name:cat:N``
    (categorical integer codes, N categories). Empty or ``NA`` cells are missing."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = list(reader)
    if label not in header:
        raise IngestError(f"no label column {label!r} in header")
    li = header.index(label)
    specs = [(i, h) for i, h in enumerate(header) if i != li]
    names, kinds, ncat, cols = [], [], [], []
    for f, (i, h) in enumerate(specs):
        parts = h.split(":")
        cells = [row[i].strip() if i < len(row) else "" for row in body]
        missing = [c == "" or c.upper() == "NA" for c in cells]
        names.append(parts[0])
        if len(parts) > 1 and parts[1] == "cat":
            try:
                codes = np.array([-1 if m else int(c) for c, m in zip(cells, missing)], dtype=np.int64)
            except ValueError as exc:
                raise IngestError(f"field {f}: non-integer category code ({exc})", field_id=f) from None
            kinds.append(CATEGORICAL)
            ncat.append(int(parts[2]) if len(parts) > 2 else int(codes.max(initial=-1)) + 1)
            cols.append(codes)
        else:
            kinds.append(NUMERIC)
            ncat.append(0)
            cols.append(np.array([np.nan if m else float(c) for c, m in zip(cells, missing)]))
    labels = np.array([float(row[li]) for row in body], dtype=np.float64)
    return RawTable(names, kinds, cols, labels, ncat)


def write_csv(raw: RawTable, path: str | Path, label: str = "label") -> None:
    header = []
    for name, kind, nc in zip(raw.names, raw.kinds, raw.n_categories):
        header.append(f"{name}:cat:{nc}" if kind == CATEGORICAL else name)
    header.append(label)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in range(raw.n_records):
            row = []
            for kind, col in zip(raw.kinds, raw.columns):
                v = col[r]
                if kind == CATEGORICAL:
                    row.append("" if v < 0 else str(int(v)))
                else:
                    row.append("" if np.isnan(v) else repr(float(v)))
            row.append(repr(float(raw.labels[r])))
            w.writerow(row)


# --------------------------------------------------------------- binary format

_KIND_CODE = {NUMERIC: 0, CATEGORICAL: 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


def _schema_bytes(ds: QuantizedDataset) -> bytes:
    out = bytearray()
    out += struct.pack("<I", ds.n_fields)
    for fs in ds.schema:
        name = fs.name.encode()
        out += struct.pack("<IBHHIH", fs.field_id, _KIND_CODE[fs.kind], fs.n_categories,
                           fs.max_bins, fs.start_feature, len(name))
        out += name
    out += struct.pack("<I", len(ds.bin_maps))
    for bm in ds.bin_maps:
        out += struct.pack("<IHI", bm.field_id, bm.missing_bin, len(bm.upper_boundaries))
        out += np.asarray(bm.upper_boundaries, dtype="<f8").tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DatasetFormatError("truncated", f"need {n} bytes at offset {self.pos}")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _parse_schema(r: _Reader) -> tuple[list[FieldSchema], list[BinMap]]:
    (d,) = r.unpack("<I")
    schema = []
    for _ in range(d):
        fid, kind, ncat, maxb, start, nlen = r.unpack("<IBHHIH")
        schema.append(FieldSchema(fid, _CODE_KIND[kind], ncat, maxb, start, r.take(nlen).decode()))
    (nmaps,) = r.unpack("<I")
    maps = []
    for _ in range(nmaps):
        fid, miss, nb = r.unpack("<IHI")
        bounds = np.frombuffer(r.take(8 * nb), dtype="<f8")
        maps.append(BinMap(fid, tuple(float(b) for b in bounds), miss))
    return schema, maps


def serialize(ds: QuantizedDataset, path: str | Path) -> int:
    """Write ``ds``; returns the CRC32 stored in the trailer."""
    sections = [
        _schema_bytes(ds),
        ds.row_blocks.tobytes(),
        ds.columns.tobytes(),
        ds.labels.astype("<f8").tobytes(),
        ds.grad_buffer.astype("<f8").tobytes(),
    ]
    body = bytearray(MAGIC)
    body += struct.pack("<QII", ds.n_records, ds.record_stride, ds.block_bytes)
    for s in sections:
        body += struct.pack("<Q", len(s))
        body += s
    crc = zlib.crc32(body)
    body += struct.pack("<I", crc)
    Path(path).write_bytes(bytes(body))
    return crc


def deserialize(path: str | Path) -> QuantizedDataset:
    buf = Path(path).read_bytes()
    if len(buf) < len(MAGIC):
        raise DatasetFormatError("truncated", "file shorter than the magic")
    head = buf[:len(MAGIC)]
    if head != MAGIC:
        if head.startswith(_MAGIC_STEM):
            raise DatasetFormatError("version", f"unsupported format version {head[-1:]!r}")
        raise DatasetFormatError("magic", f"bad magic {head!r}")
    if len(buf) < len(MAGIC) + 4:
        raise DatasetFormatError("truncated", "missing checksum")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    r = _Reader(body)
    r.take(len(MAGIC))
    n, stride, block = r.unpack("<QII")
    sections = []
    for _ in range(5):
        (length,) = r.unpack("<Q")
        sections.append(r.take(length))
    if r.pos != len(body):
        raise DatasetFormatError("truncated", "trailing bytes before checksum")
    if zlib.crc32(body) != crc:
        raise DatasetFormatError("checksum", "CRC32 mismatch")
    schema, maps = _parse_schema(_Reader(sections[0]))
    d = len(schema)
    rows = np.frombuffer(sections[1], dtype=np.uint8).reshape(n, stride).copy()
    cols = np.frombuffer(sections[2], dtype=np.uint8).reshape(d, n).copy()
    labels = np.frombuffer(sections[3], dtype="<f8").astype(np.float64)
    grads = np.frombuffer(sections[4], dtype="<f8").astype(np.float64).reshape(n, 2)
    _freeze(rows, cols, labels, grads)
    return QuantizedDataset(tuple(schema), rows, cols, labels, grads, tuple(maps), block)


def checksum(path: str | Path) -> int:
    buf = Path(path).read_bytes()
    return struct.unpack("<I", buf[-4:])[0]


# ---------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SynthSpec:
    n_records: int
    numeric_fields: int
    categorical_fields: tuple[int, ...] = ()
    label_model: str = "linear_threshold"
    skew: float = 0.0
    seed: int = 0
    missing_rate: float = 0.0
    planted_depth: int = 4

    def __post_init__(self):
        if self.label_model not in ("linear_threshold", "noisy_tree"):
            raise ValueError(f"unknown label_model {self.label_model!r}")
        if not 0.0 <= self.skew <= 1.0:
            raise ValueError("skew must be in [0, 1]")
        if self.numeric_fields + len(self.categorical_fields) < 1:
            raise ValueError("need at least one field")


def synth_dataset(spec: SynthSpec) -> RawTable:
    """Deterministic synthetic table.

    ``linear_threshold`` yields 0/1 labels from a noisy linear score;
    ``noisy_tree`` yields real labels from a planted tree whose splits cut
    ``skew`` of the records to one side (0.5 balanced, 0.99 lopsided); the
    root cut is always on the first field. For ``linear_threshold`` a positive
    ``skew`` sets the negative-class fraction.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_records
    names, kinds, cols, ncat = [], [], [], []
    for j in range(spec.numeric_fields):
        x = rng.standard_normal(n)
        if spec.missing_rate:
            x[rng.random(n) < spec.missing_rate] = np.nan
        names.append(f"x{j}")
        kinds.append(NUMERIC)
        cols.append(x)
        ncat.append(0)
    for j, c in enumerate(spec.categorical_fields):
        if c < 1:
            raise ValueError("categorical fields need at least one category")
        codes = rng.integers(0, c, size=n)
        if spec.missing_rate:
            codes[rng.random(n) < spec.missing_rate] = -1
        names.append(f"c{j}")
        kinds.append(CATEGORICAL)
        cols.append(codes)
        ncat.append(int(c))

    if spec.label_model == "linear_threshold":
        score = np.zeros(n)
        for kind, col, nc in zip(kinds, cols, ncat):
            if kind == NUMERIC:
                score += rng.normal() * np.nan_to_num(col)
            else:
                effect = rng.normal(size=nc + 1)
                score += effect[np.where(col < 0, nc, col)]
        score += 0.5 * rng.standard_normal(n)
        cut = np.quantile(score, spec.skew if spec.skew > 0.0 else 0.5)
        labels = (score > cut).astype(np.float64)
    else:
        labels = _planted_tree_labels(rng, kinds, cols, ncat, spec)
    return RawTable(names, kinds, cols, labels, ncat)


def _rare_mask(kind: str, col: np.ndarray, nc: int, skew: float) -> np.ndarray:
    """Records on the small side of a ``skew``-lopsided cut."""
    if kind == NUMERIC:
        x = np.nan_to_num(col, nan=-np.inf)
        return x > np.quantile(x, skew)
    k = max(1, int(round((1.0 - skew) * nc)))
    return (col >= 0) & (col < k)


def _planted_tree_labels(rng, kinds, cols, ncat, spec: SynthSpec) -> np.ndarray:
    n = spec.n_records
    skew = spec.skew if spec.skew > 0 else 0.5
    values = np.zeros(n)
    frontier = [(np.arange(n), 0, 0.0)]
    while frontier:
        idx, depth, offset = frontier.pop()
        if depth == spec.planted_depth or idx.size < 2:
            values[idx] = offset + rng.normal()
            continue
        f = int(rng.integers(len(cols))) if depth else 0
        rare = _rare_mask(kinds[f], cols[f][idx], ncat[f], skew)
        bump = 10.0 / (depth + 1)
        frontier.append((idx[~rare], depth + 1, offset))
        frontier.append((idx[rare], depth + 1, offset + bump))
    return values + 0.1 * rng.standard_normal(n)


# ---------------------------------------------------- benchmark-shaped analogs

ANALOGS = {
    # name: (numeric fields, categorical category counts, label model, skew, loss)
    "iot": (115, (), "linear_threshold", 0.0, "logistic"),
    "higgs": (28, (), "linear_threshold", 0.0, "logistic"),
    "allstate": (16, (250, 230, 210, 190, 180, 170, 160, 150, 140, 130, 120, 110, 100, 90, 80, 66),
                 "noisy_tree", 0.99, "squared_error"),
    "mq2008": (46, (), "noisy_tree", 0.5, "squared_error"),
    "flight": (1, (255, 150, 100, 80, 40, 25, 15), "linear_threshold", 0.99, "logistic"),
}

ALL_NUMERIC = ("iot", "higgs", "mq2008")
CATEGORICAL_ANALOGS = ("allstate", "flight")


def analog_spec(name: str, n_records: int, seed: int = 0) -> SynthSpec:
    numeric, cats, model, skew, _ = ANALOGS[name]
    return SynthSpec(n_records, numeric, tuple(cats), model, skew, seed)


def analog_loss(name: str) -> str:
    return ANALOGS[name][4]


def one_hot_features(schema: Iterable[FieldSchema]) -> int:
    return sum(fs.n_features for fs in schema)
