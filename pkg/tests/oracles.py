"""Independent brute-force oracles shared by unit and acceptance tests.

These avoid the engine's vectorized paths: everything is plain Python loops
over records.
"""

from __future__ import annotations

import numpy as np

from gbtaccel.data import CATEGORICAL, FieldSchema, make_dataset


def random_split_instance(rng: np.random.Generator, dyadic: bool = True):
    """Small random dataset with gradients; dyadic gradients make all sums exact."""
    n = int(rng.integers(2, 65))
    d = int(rng.integers(1, 5))
    schema, cols = [], []
    for f in range(d):
        nb = int(rng.integers(2, 9))
        cat = bool(rng.random() < 0.3)
        fs = (FieldSchema(f, CATEGORICAL, n_categories=nb - 1) if cat
              else FieldSchema(f, "numeric", max_bins=nb))
        schema.append(fs)
        # skew codes so some bins stay empty and the missing bin shows up often
        cols.append(rng.integers(0, nb, size=n))
    if dyadic:
        g = rng.integers(-32, 33, size=n) / 8.0
        h = rng.integers(1, 17, size=n) / 16.0
    else:
        g = rng.normal(size=n)
        h = rng.random(n) + 0.01
    ds = make_dataset(schema, np.array(cols), np.zeros(n))
    return ds, np.stack([g, h], axis=1)


def gain(GL, HL, GR, HR, lam, gamma):
    GP, HP = GL + GR, HL + HR
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - GP * GP / (HP + lam)) - gamma


def exhaustive_split(ds, grads, lam=1.0, gamma=0.0):
    """Best (field, boundary, missing_left, gain) by enumerating every predicate
    and summing gradients record by record. Strict > keeps the first of equal
    gains in (field, boundary, missing-right-first) order."""
    n = ds.n_records
    GP = sum(float(grads[i, 0]) for i in range(n))
    HP = sum(float(grads[i, 1]) for i in range(n))
    best = None
    for f, fs in enumerate(ds.schema):
        miss = fs.n_bins - 1
        cat = fs.kind == CATEGORICAL
        for b in range(miss):
            for mleft in (False, True):
                GL = HL = 0.0
                cl = 0
                for i in range(n):
                    c = int(ds.columns[f, i])
                    go = mleft if c == miss else (c == b if cat else c <= b)
                    if go:
                        GL += float(grads[i, 0])
                        HL += float(grads[i, 1])
                        cl += 1
                if cl == 0 or cl == n:
                    continue
                gn = 0.5 * (GL * GL / (HL + lam) + (GP - GL) ** 2 / (HP - HL + lam)
                            - GP * GP / (HP + lam)) - gamma
                if best is None or gn > best[3]:
                    best = (f, b, mleft, gn)
    if best is None or not best[3] > 0:
        return None
    return best


def direct_histogram(ds, grads, idx):
    """Per-field list of (count, G, H) per bin by direct summation."""
    out = []
    for f, fs in enumerate(ds.schema):
        c = [0] * fs.n_bins
        G = [0.0] * fs.n_bins
        H = [0.0] * fs.n_bins
        for i in idx:
            b = int(ds.columns[f, i])
            c[b] += 1
            G[b] += float(grads[i, 0])
            H[b] += float(grads[i, 1])
        out.append((c, G, H))
    return out


def loss_scalar(y, p, loss):
    """Per-record loss in extended precision, so second differences resolve."""
    y, p = np.longdouble(y), np.longdouble(p)
    if loss == "squared_error":
        return np.longdouble(0.5) * (p - y) ** 2
    return np.log1p(np.exp(-abs(p))) + max(p, np.longdouble(0)) - y * p


def finite_difference(y, p, loss, eps=1e-4):
    """Central differences of the per-record loss: first and second derivative."""
    g = np.empty_like(p)
    h = np.empty_like(p)
    e = np.longdouble(eps)
    for i in range(p.size):
        lp = loss_scalar(y[i], np.longdouble(p[i]) + e, loss)
        l0 = loss_scalar(y[i], p[i], loss)
        lm = loss_scalar(y[i], np.longdouble(p[i]) - e, loss)
        g[i] = (lp - lm) / (2 * e)
        h[i] = (lp - 2 * l0 + lm) / (e * e)
    return g, h


def rel_err(a, b, floor=1e-12):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def hist_close(a, b, parent, rtol=1e-9):
    """Bin sums agree to ``rtol`` relative to the parent's bin magnitude; bins
    derived by subtraction can cancel to near zero, where a pure relative test
    would be meaningless."""
    a, b, parent = (np.asarray(v, float) for v in (a, b, parent))
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.abs(parent))
    return bool(np.all(np.abs(a - b) <= rtol * np.maximum(scale, 1e-300)))
