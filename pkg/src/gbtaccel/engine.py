"""Histogram-based gradient-boosted tree training and prediction.

The reference engine works directly on quantized bin indices. Every read of a
record field goes through one of two access paths, ``column_major`` (the
per-field columns) or ``row_major`` (the padded record blocks); both produce
bit-identical models. Summations run in a fixed order with plain float64 adds.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .data import CATEGORICAL, QuantizedDataset
from .trace import TraceMeta, TraceRecord, WorkTrace, layout_counts

LOSSES = ("squared_error", "logistic")
GROWTH_ORDERS = ("vertex_by_vertex", "level_by_level")
LAYOUTS = ("column_major", "row_major")
GRAD_BYTES = 16  # g and h as two float64


class HistogramInvariantError(ValueError):
    pass


class NonFiniteError(ValueError):
    def __init__(self, record: int, value: float):
        super().__init__(f"non-finite prediction {value!r} at record {record}")
        self.record = record


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 10
    max_depth: int = 6
    loss: str = "squared_error"
    reg_lambda: float = 1.0
    gamma: float = 0.0
    learning_rate: float = 0.3
    growth_order: str = "vertex_by_vertex"

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.growth_order not in GROWTH_ORDERS:
            raise ValueError(f"growth_order must be one of {GROWTH_ORDERS}")
        if self.reg_lambda < 0 or self.gamma < 0:
            raise ValueError("reg_lambda and gamma must be >= 0")


# ---------------------------------------------------------------- gradients

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def loss_values(labels: np.ndarray, predictions: np.ndarray, loss: str) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if loss == "squared_error":
        return 0.5 * (p - y) ** 2
    if loss == "logistic":
        return np.logaddexp(0.0, p) - y * p
    raise ValueError(f"unknown loss {loss!r}")


def compute_gradients(labels, predictions, loss: str) -> tuple[np.ndarray, float]:
    """Return the (n, 2) gradient buffer and the total loss."""
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(predictions, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.shape} labels vs {p.shape} predictions")
    bad = np.flatnonzero(~np.isfinite(p))
    if bad.size:
        raise NonFiniteError(int(bad[0]), float(p[bad[0]]))
    out = np.empty((y.size, 2), dtype=np.float64)
    if loss == "squared_error":
        out[:, 0] = p - y
        out[:, 1] = 1.0
    elif loss == "logistic":
        s = _sigmoid(p)
        out[:, 0] = s - y
        out[:, 1] = s * (1.0 - s)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return out, float(np.sum(loss_values(y, p, loss)))


def base_score(labels: np.ndarray, loss: str) -> float:
    y = np.asarray(labels, dtype=np.float64)
    if y.size == 0:
        return 0.0
    m = float(y.mean())
    if loss == "logistic":
        m = min(max(m, 1e-12), 1 - 1e-12)
        return math.log(m / (1 - m))
    return m


# ---------------------------------------------------------------- histograms

class Stats(NamedTuple):
    count: int
    G: float
    H: float


@dataclass
class Histogram:
    field_id: int
    counts: np.ndarray
    G: np.ndarray
    H: np.ndarray
    categorical: bool = False

    @property
    def n_bins(self) -> int:
        return self.counts.size

    def totals(self) -> Stats:
        return Stats(int(self.counts.sum()), float(np.cumsum(self.G)[-1]) if self.n_bins else 0.0,
                     float(np.cumsum(self.H)[-1]) if self.n_bins else 0.0)


@dataclass
class HistogramSet:
    """All fields' bins in flat arrays; ``offsets[f]`` is field f's first bin."""

    counts: np.ndarray
    G: np.ndarray
    H: np.ndarray
    offsets: np.ndarray
    categorical: tuple[bool, ...]

    @classmethod
    def zeros(cls, bins_per_field: Sequence[int], categorical: Sequence[bool]) -> "HistogramSet":
        offsets = np.concatenate([[0], np.cumsum(bins_per_field)]).astype(np.int64)
        total = int(offsets[-1])
        return cls(np.zeros(total, np.int64), np.zeros(total), np.zeros(total), offsets,
                   tuple(bool(c) for c in categorical))

    def __len__(self) -> int:
        return self.offsets.size - 1

    def __getitem__(self, f: int) -> Histogram:
        a, b = self.offsets[f], self.offsets[f + 1]
        return Histogram(f, self.counts[a:b], self.G[a:b], self.H[a:b], self.categorical[f])

    def __iter__(self):
        return (self[f] for f in range(len(self)))

    @property
    def total_bins(self) -> int:
        return int(self.offsets[-1])

    def copy(self) -> "HistogramSet":
        return HistogramSet(self.counts.copy(), self.G.copy(), self.H.copy(), self.offsets,
                            self.categorical)

    def same_shape(self, other: "HistogramSet") -> bool:
        return np.array_equal(self.offsets, other.offsets) and self.categorical == other.categorical


def _field_codes(dataset: QuantizedDataset, f: int, idx: np.ndarray, layout: str) -> np.ndarray:
    if layout == "column_major":
        return dataset.columns[f][idx]
    if layout == "row_major":
        return dataset.row_blocks[idx, f]
    raise ValueError(f"layout must be one of {LAYOUTS}, got {layout!r}")


def _bin_into(hs: HistogramSet, dataset, grads, idx, layout) -> None:
    g = grads[idx, 0]
    h = grads[idx, 1]
    for f in range(len(hs)):
        a, b = hs.offsets[f], hs.offsets[f + 1]
        codes = _field_codes(dataset, f, idx, layout)
        nb = int(b - a)
        # bincount adds weights in input order, which keeps sums layout-independent
        hs.counts[a:b] = np.bincount(codes, minlength=nb)[:nb]
        hs.G[a:b] = np.bincount(codes, weights=g, minlength=nb)[:nb]
        hs.H[a:b] = np.bincount(codes, weights=h, minlength=nb)[:nb]


def bin_gradients(idx: np.ndarray, dataset: QuantizedDataset, grad_buffer: np.ndarray,
                  layout: str = "column_major", shards: int = 1) -> HistogramSet:
    """Histogram the gradient pairs of ``idx`` for every field.

    With ``shards > 1`` the subset is cut into contiguous pieces that are binned
    separately and reduced in shard order, as a cluster-partitioned run would.
    """
    idx = np.asarray(idx, dtype=np.int64)
    bins = [fs.n_bins for fs in dataset.schema]
    cats = [fs.kind == CATEGORICAL for fs in dataset.schema]
    out = HistogramSet.zeros(bins, cats)
    if shards <= 1:
        _bin_into(out, dataset, grad_buffer, idx, layout)
        return out
    for piece in np.array_split(idx, shards):
        part = HistogramSet.zeros(bins, cats)
        _bin_into(part, dataset, grad_buffer, piece, layout)
        out.counts += part.counts
        out.G += part.G
        out.H += part.H
    return out


def subtract_histograms(parent: HistogramSet, small: HistogramSet) -> HistogramSet:
    if not parent.same_shape(small):
        raise ValueError("histogram sets have different schemas")
    counts = parent.counts - small.counts
    neg = np.flatnonzero(counts < 0)
    if neg.size:
        f = int(np.searchsorted(parent.offsets, neg[0], side="right") - 1)
        raise HistogramInvariantError(
            f"negative count in field {f} bin {int(neg[0] - parent.offsets[f])}")
    return HistogramSet(counts, parent.G - small.G, parent.H - small.H, parent.offsets,
                        parent.categorical)


# ---------------------------------------------------------------- split search

@dataclass(frozen=True)
class Predicate:
    """Numeric: left iff bin <= boundary. Categorical: left iff bin == boundary.
    The missing bin goes left iff ``missing_goes_left``."""

    field_id: int
    bin_boundary: int
    missing_goes_left: bool
    categorical: bool
    missing_bin: int

    def goes_left(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes)
        left = codes == self.bin_boundary if self.categorical else codes <= self.bin_boundary
        return np.where(codes == self.missing_bin, self.missing_goes_left, left)


@dataclass(frozen=True)
class SplitCandidate:
    field_id: int
    bin_boundary: int
    missing_goes_left: bool
    gain: float
    left_stats: Stats
    right_stats: Stats
    categorical: bool = False
    missing_bin: int = 0

    @property
    def predicate(self) -> Predicate:
        return Predicate(self.field_id, self.bin_boundary, self.missing_goes_left,
                         self.categorical, self.missing_bin)


def split_gain(GL, HL, GR, HR, GP, HP, reg_lambda: float, gamma: float):
    return 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda)
                  - GP * GP / (HP + reg_lambda)) - gamma


def _field_scan(hist: Histogram, parent: Stats, lam: float, gamma: float):
    """Gains for every (boundary, missing direction) of one field, in tie order."""
    m = hist.n_bins - 1
    if m < 1:
        return None
    c, G, H = hist.counts[:m], hist.G[:m], hist.H[:m]
    if hist.categorical:
        Lc, LG, LH = c, G, H
    else:
        Lc, LG, LH = np.cumsum(c), np.cumsum(G), np.cumsum(H)
    mc, mG, mH = hist.counts[m], hist.G[m], hist.H[m]
    # column 0: missing right, column 1: missing left
    Lc = np.stack([Lc, Lc + mc], axis=1)
    LG = np.stack([LG, LG + mG], axis=1)
    LH = np.stack([LH, LH + mH], axis=1)
    Rc, RG, RH = parent.count - Lc, parent.G - LG, parent.H - LH
    gain = split_gain(LG, LH, RG, RH, parent.G, parent.H, lam, gamma)
    gain = np.where((Lc > 0) & (Rc > 0), gain, -np.inf)
    k = int(np.argmax(gain))  # first maximum = lowest boundary, missing-right first
    b, d = divmod(k, 2)
    return (float(gain[b, d]), b, bool(d),
            Stats(int(Lc[b, d]), float(LG[b, d]), float(LH[b, d])),
            Stats(int(Rc[b, d]), float(RG[b, d]), float(RH[b, d])))


def find_best_split(histograms: HistogramSet, parent_stats: Stats,
                    config: TrainConfig) -> SplitCandidate | None:
    best = None
    for hist in histograms:
        r = _field_scan(hist, parent_stats, config.reg_lambda, config.gamma)
        if r is None:
            continue
        if best is None or r[0] > best.gain:
            gain, b, mleft, ls, rs = r
            best = SplitCandidate(hist.field_id, b, mleft, gain, ls, rs, hist.categorical,
                                  hist.n_bins - 1)
    if best is None or not best.gain > 0:
        return None
    return best


def partition_records(idx: np.ndarray, predicate: Predicate, dataset: QuantizedDataset,
                      layout: str = "column_major") -> tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(idx, dtype=np.int64)
    left = predicate.goes_left(_field_codes(dataset, predicate.field_id, idx, layout))
    return idx[left], idx[~left]


# ---------------------------------------------------------------- trees

_NODE_ARRAYS = ("feature", "boundary", "missing_left", "categorical", "missing_bin",
                "left", "right", "weight", "count", "depth")


@dataclass(eq=False)
class Tree:
    """Flat node arrays in breadth-first order; ``left == -1`` marks a leaf."""

    feature: np.ndarray
    boundary: np.ndarray
    missing_left: np.ndarray
    categorical: np.ndarray
    missing_bin: np.ndarray
    left: np.ndarray
    right: np.ndarray
    weight: np.ndarray
    count: np.ndarray
    depth: np.ndarray

    @classmethod
    def from_nodes(cls, nodes: list[dict]) -> "Tree":
        def col(key, dtype, default):
            return np.array([n.get(key, default) for n in nodes], dtype=dtype)
        return cls(col("feature", np.int32, -1), col("boundary", np.int32, 0),
                   col("missing_left", bool, False), col("categorical", bool, False),
                   col("missing_bin", np.int32, 0), col("left", np.int32, -1),
                   col("right", np.int32, -1), col("weight", np.float64, 0.0),
                   col("count", np.int64, 0), col("depth", np.int32, 0))

    @classmethod
    def leaf(cls, weight: float, count: int = 0) -> "Tree":
        return cls.from_nodes([{"weight": weight, "count": count}])

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def is_leaf(self, i: int) -> bool:
        return self.left[i] < 0

    @property
    def max_depth(self) -> int:
        return int(self.depth.max()) if self.n_nodes else 0

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left < 0)

    def fields_used(self) -> list[int]:
        return sorted(set(int(f) for f in self.feature[self.left >= 0]))

    def predicate(self, i: int) -> Predicate:
        return Predicate(int(self.feature[i]), int(self.boundary[i]), bool(self.missing_left[i]),
                         bool(self.categorical[i]), int(self.missing_bin[i]))

    def mean_path_length(self) -> float:
        """Record-weighted mean leaf depth (training cover)."""
        lv = self.leaves()
        tot = self.count[lv].sum()
        if tot == 0:
            return float(self.depth[lv].mean())
        return float((self.count[lv] * self.depth[lv]).sum() / tot)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tree):
            return NotImplemented
        return all(getattr(self, k).tobytes() == getattr(other, k).tobytes()
                   and getattr(self, k).dtype == getattr(other, k).dtype for k in _NODE_ARRAYS)

    __hash__ = None


def apply_tree(tree: Tree, dataset: QuantizedDataset, idx: np.ndarray | None = None,
               layout: str = "column_major") -> tuple[np.ndarray, np.ndarray]:
    """Leaf index and path length (internal nodes visited) for each record."""
    rows = np.arange(dataset.n_records) if idx is None else np.asarray(idx, dtype=np.int64)
    node = np.zeros(rows.size, dtype=np.int64)
    path = np.zeros(rows.size, dtype=np.int64)
    for _ in range(tree.max_depth + 1):
        sel = np.flatnonzero(tree.left[node] >= 0)
        if sel.size == 0:
            break
        nd = node[sel]
        f = tree.feature[nd]
        if layout == "column_major":
            codes = dataset.columns[f, rows[sel]]
        elif layout == "row_major":
            codes = dataset.row_blocks[rows[sel], f]
        else:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {layout!r}")
        b = tree.boundary[nd]
        go = np.where(tree.categorical[nd], codes == b, codes <= b)
        go = np.where(codes == tree.missing_bin[nd], tree.missing_left[nd], go)
        node[sel] = np.where(go, tree.left[nd], tree.right[nd])
        path[sel] += 1
    return node, path


@dataclass(eq=False)
class Ensemble:
    trees: list[Tree] = field(default_factory=list)
    learning_rate: float = 0.3
    base_score: float = 0.0
    loss: str = "squared_error"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Ensemble):
            return NotImplemented
        return (self.loss == other.loss
                and np.float64(self.learning_rate).tobytes() == np.float64(other.learning_rate).tobytes()
                and np.float64(self.base_score).tobytes() == np.float64(other.base_score).tobytes()
                and len(self.trees) == len(other.trees)
                and all(a == b for a, b in zip(self.trees, other.trees)))

    __hash__ = None

    @property
    def max_depth(self) -> int:
        return max((t.max_depth for t in self.trees), default=0)


# ---------------------------------------------------------------- growth

def leaf_weight(stats: Stats, config: TrainConfig) -> float:
    return -stats.G / (stats.H + config.reg_lambda) * config.learning_rate


def _canonical_order(nodes: list[dict]) -> list[int]:
    order, q = [], deque([0])
    while q:
        i = q.popleft()
        order.append(i)
        if nodes[i].get("left", -1) >= 0:
            q.append(nodes[i]["left"])
            q.append(nodes[i]["right"])
    return order


def _layout_record(lc: dict, m: int, n_cols: int, block: int) -> dict:
    """Trace byte fields for m records read in full (row-major) or n_cols columns."""
    return dict(rm_bytes=lc["rm_blocks"] * block, rm_blocks=lc["rm_blocks"], rm_rows=lc["rm_rows"],
                rm_span=lc["rm_span"], col_bytes=m * n_cols, col_blocks=lc["col_blocks"] * n_cols,
                col_rows=lc["col_rows"] * n_cols, col_span=lc["col_span"] * n_cols)


def grow_tree(dataset: QuantizedDataset, grad_buffer: np.ndarray, config: TrainConfig,
              layout: str = "column_major", trace: WorkTrace | None = None,
              tree_id: int = 0) -> Tree:
    n, d = dataset.n_records, dataset.n_fields
    stride, block = dataset.record_stride, dataset.block_bytes
    total_bins = dataset.total_bins
    steps: list[TraceRecord] = []

    def splittable(nd) -> bool:
        s = nd["stats"]
        return nd["depth"] < config.max_depth and s.count >= 2 and s.H > 0

    def bin_step(vid, nd):
        nd["hist"] = bin_gradients(nd["idx"], dataset, grad_buffer, layout)
        if trace is not None:  # the vertex's step-1 work
            m = nd["idx"].size
            lc = layout_counts(nd["idx"], stride, block, trace.meta.row_bytes)
            steps.append(TraceRecord(tree_id, vid, nd["depth"], 1, records=m, fields=d,
                                     bin_updates=m * d, root=vid == 0,
                                     **_layout_record(lc, m, d, block)))

    root_idx = np.arange(n, dtype=np.int64)
    g, h = grad_buffer[:, 0], grad_buffer[:, 1]
    root_stats = Stats(n, float(np.cumsum(g)[-1]) if n else 0.0,
                       float(np.cumsum(h)[-1]) if n else 0.0)
    nodes: list[dict] = [{"idx": root_idx, "depth": 0, "stats": root_stats, "hist": None}]
    if splittable(nodes[0]):
        bin_step(0, nodes[0])

    pending = deque([0])
    while pending:
        vid = pending.pop() if config.growth_order == "vertex_by_vertex" else pending.popleft()
        nd = nodes[vid]
        hist = nd.pop("hist", None)
        if hist is None or not splittable(nd):
            continue
        cand = find_best_split(hist, nd["stats"], config)
        if trace is not None:
            steps.append(TraceRecord(tree_id, vid, nd["depth"], 2, bins_scanned=total_bins,
                                     root=vid == 0))
        if cand is None:
            continue
        idx = nd["idx"]
        lidx, ridx = partition_records(idx, cand.predicate, dataset, layout)
        if trace is not None:
            m = idx.size
            lc = layout_counts(idx, stride, block, trace.meta.row_bytes)
            steps.append(TraceRecord(tree_id, vid, nd["depth"], 3, records=m, fields=1,
                                     root=vid == 0, split_field=cand.field_id,
                                     **_layout_record(lc, m, 1, block)))
        nd.update(split=cand)
        kids = []
        for sub, st in ((lidx, cand.left_stats), (ridx, cand.right_stats)):
            nodes.append({"idx": sub, "depth": nd["depth"] + 1, "stats": st, "hist": None})
            kids.append(len(nodes) - 1)
        nd["left"], nd["right"] = kids
        need = [splittable(nodes[k]) for k in kids]
        if any(need):
            si = 0 if lidx.size <= ridx.size else 1
            small, large = kids[si], kids[1 - si]
            bin_step(small, nodes[small])
            if need[1 - si]:
                nodes[large]["hist"] = subtract_histograms(hist, nodes[small]["hist"])
                if trace is not None:
                    steps[-1].bins_subtracted = total_bins
            if not need[si]:
                nodes[small]["hist"] = None
        if config.growth_order == "vertex_by_vertex":
            pending.append(kids[1])
            pending.append(kids[0])
        else:
            pending.extend(kids)

    order = _canonical_order(nodes)
    new_id = {old: new for new, old in enumerate(order)}
    flat = []
    for old in order:
        nd = nodes[old]
        st = nd["stats"]
        rec = {"count": st.count, "depth": nd["depth"]}
        cand = nd.get("split")
        if cand is not None:
            rec.update(feature=cand.field_id, boundary=cand.bin_boundary,
                       missing_left=cand.missing_goes_left, categorical=cand.categorical,
                       missing_bin=cand.missing_bin, left=new_id[nd["left"]],
                       right=new_id[nd["right"]])
        else:
            rec["weight"] = leaf_weight(st, config)
        flat.append(rec)
    if trace is not None:
        for r in steps:
            r.vertex = new_id[r.vertex]
        steps.sort(key=lambda r: (r.vertex, r.step))
        trace.records.extend(steps)
    return Tree.from_nodes(flat)


def make_trace_meta(dataset: QuantizedDataset, config: TrainConfig, row_bytes: int = 1024) -> TraceMeta:
    return TraceMeta(n_records=dataset.n_records, n_fields=dataset.n_fields,
                     record_stride=dataset.record_stride, block_bytes=dataset.block_bytes,
                     row_bytes=row_bytes, bins_per_field=[fs.n_bins for fs in dataset.schema],
                     kinds=[fs.kind for fs in dataset.schema], n_trees=config.n_trees,
                     max_depth=config.max_depth)


def train(dataset: QuantizedDataset, config: TrainConfig,
          layout: str = "column_major") -> tuple[Ensemble, WorkTrace]:
    """Boost ``config.n_trees`` trees; return the ensemble and its work trace.

    ``trace.losses[0]`` is the loss of the base score alone and ``losses[k]``
    the loss after k trees.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    y = dataset.labels
    n = dataset.n_records
    base = base_score(y, config.loss)
    pred = np.full(n, base, dtype=np.float64)
    grads, loss = compute_gradients(y, pred, config.loss)
    trace = WorkTrace(make_trace_meta(dataset, config))
    trace.losses.append(loss)
    ens = Ensemble([], config.learning_rate, base, config.loss)
    all_idx = np.arange(n, dtype=np.int64)
    lc = layout_counts(all_idx, dataset.record_stride, dataset.block_bytes, trace.meta.row_bytes)
    for k in range(config.n_trees):
        tree = grow_tree(dataset, grads, config, layout, trace, k)
        ens.trees.append(tree)
        leaf, path = apply_tree(tree, dataset, layout=layout)
        pred = pred + tree.weight[leaf]
        grads, loss = compute_gradients(y, pred, config.loss)
        trace.losses.append(loss)
        used = len(tree.fields_used())
        trace.records.append(TraceRecord(
            k, 0, tree.max_depth, 5, records=n, fields=used, node_visits=int(path.sum()),
            root=True, fields_used=used, path_max=int(path.max()) if n else 0,
            **_layout_record(lc, n, used, dataset.block_bytes)))
    return ens, trace


# ---------------------------------------------------------------- prediction

def predict(ensemble: Ensemble, record: Sequence[int]) -> float:
    """Score one record given its per-field bin indices."""
    score = ensemble.base_score
    for t in ensemble.trees:
        i = 0
        while t.left[i] >= 0:
            code = int(record[t.feature[i]])
            if code == t.missing_bin[i]:
                go = bool(t.missing_left[i])
            elif t.categorical[i]:
                go = code == t.boundary[i]
            else:
                go = code <= t.boundary[i]
            i = int(t.left[i] if go else t.right[i])
        score += float(t.weight[i])
    return score


def batch_predict(ensemble: Ensemble, dataset: QuantizedDataset,
                  layout: str = "column_major") -> np.ndarray:
    out = np.full(dataset.n_records, ensemble.base_score, dtype=np.float64)
    for t in ensemble.trees:
        leaf, _ = apply_tree(t, dataset, layout=layout)
        out += t.weight[leaf]
    return out


# ---------------------------------------------------------------- model text

MODEL_HEADER = "gbtaccel-model v1"


def save_model(ensemble: Ensemble, path: str | Path) -> None:
    lines = [MODEL_HEADER, f"loss {ensemble.loss}", f"base_score {ensemble.base_score!r}",
             f"learning_rate {ensemble.learning_rate!r}", f"n_trees {len(ensemble.trees)}"]
    for k, t in enumerate(ensemble.trees):
        lines.append(f"tree {k} nodes {t.n_nodes}")
        for i in range(t.n_nodes):
            if t.left[i] >= 0:
                lines.append(
                    f"{i} split {t.feature[i]} {t.boundary[i]} {'L' if t.missing_left[i] else 'R'} "
                    f"{'cat' if t.categorical[i] else 'num'} {t.missing_bin[i]} "
                    f"{t.left[i]} {t.right[i]} {t.count[i]} {t.depth[i]}")
            else:
                lines.append(f"{i} leaf {float(t.weight[i])!r} {t.count[i]} {t.depth[i]}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> Ensemble:
    it = iter(Path(path).read_text().splitlines())
    if next(it) != MODEL_HEADER:
        raise ValueError(f"{path}: not a model file")
    loss = next(it).split()[1]
    base = float(next(it).split()[1])
    lr = float(next(it).split()[1])
    k = int(next(it).split()[1])
    trees = []
    for _ in range(k):
        n_nodes = int(next(it).split()[3])
        nodes = []
        for _ in range(n_nodes):
            p = next(it).split()
            if p[1] == "split":
                nodes.append(dict(feature=int(p[2]), boundary=int(p[3]), missing_left=p[4] == "L",
                                  categorical=p[5] == "cat", missing_bin=int(p[6]),
                                  left=int(p[7]), right=int(p[8]), count=int(p[9]),
                                  depth=int(p[10])))
            else:
                nodes.append(dict(weight=float(p[2]), count=int(p[3]), depth=int(p[4])))
        trees.append(Tree.from_nodes(nodes))
    return Ensemble(trees, lr, base, loss)
