"""Symmetric relational data: storage, loaders, writers and fold partitions.

A sociomatrix is stored as its strict upper triangle in row-major order, so
the value for ``(i, j)`` and ``(j, i)`` is the same array slot and the
diagonal has no slot at all.
"""
from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .stats import make_rng

__all__ = [
    "DataError",
    "Sociomatrix",
    "DyadCovariates",
    "FoldAssignment",
    "dyad_index",
    "load_edge_list",
    "write_edge_list",
    "load_dense_csv",
    "write_dense_csv",
    "load_covariates",
    "tokenize",
    "strip_verse_references",
    "tokenize_adjacency_counts",
    "genesis_text",
    "largest_connected_component",
    "assign_folds",
    "mask_fold",
]

PUNCTUATION = ".,;:?!"
_VERSE_RE = re.compile(r"\b\d+:\d+\b")
_TOKEN_RE = re.compile(r"[A-Za-z]+|[" + re.escape(PUNCTUATION) + "]")


class DataError(ValueError):
    """Raised for malformed or inconsistent relational data."""


def dyad_index(n, i, j):
    """Flat upper-triangle index of the unordered pair ``{i, j}``."""
    if i == j:
        raise IndexError(f"diagonal entry ({i}, {i}) is undefined")
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"({i}, {j}) out of range for n={n}")
    if i > j:
        i, j = j, i
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Sociomatrix:
    """Symmetric ``n x n`` ordinal relational data with undefined diagonal.

    ``values`` and ``observed`` are parallel arrays of length ``n(n-1)/2``
    over the pairs ``i < j`` in row-major order.  Values of unobserved
    dyads carry no information and are stored as 0.
    """

    labels: tuple
    values: np.ndarray
    observed: np.ndarray
    value_levels: np.ndarray = field(init=False)

    def __post_init__(self):
        n = len(self.labels)
        if n < 2:
            raise DataError("a sociomatrix needs at least two nodes")
        if len(set(self.labels)) != n:
            raise DataError("node labels must be unique")
        m = n * (n - 1) // 2
        values = np.asarray(self.values)
        observed = np.asarray(self.observed, dtype=bool)
        if values.shape != (m,) or observed.shape != (m,):
            raise DataError(f"expected {m} upper-triangle entries")
        if values.size and not np.issubdtype(values.dtype, np.integer):
            if not np.all(values == np.round(values)):
                raise DataError("relational values must be integers")
        values = np.where(observed, values, 0).astype(np.int64)
        if np.any(values < 0):
            raise DataError("relational values must be non-negative")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "values", _frozen(values, np.int64))
        object.__setattr__(self, "observed", _frozen(observed, bool))
        object.__setattr__(
            self, "value_levels", _frozen(np.unique(values[observed]), np.int64)
        )

    @property
    def n(self):
        return len(self.labels)

    @property
    def n_dyads(self):
        return self.values.size

    @property
    def n_observed(self):
        return int(self.observed.sum())

    def pairs(self):
        """Row and column indices ``(i, j)``, ``i < j``, in storage order."""
        return np.triu_indices(self.n, 1)

    def index(self, i, j):
        return dyad_index(self.n, i, j)

    def get(self, i, j):
        """Value of dyad ``{i, j}``, or ``None`` if it is unobserved."""
        k = self.index(i, j)
        return int(self.values[k]) if self.observed[k] else None

    def __getitem__(self, ij):
        i, j = ij
        return self.get(i, j)

    def is_observed(self, i, j):
        return bool(self.observed[self.index(i, j)])

    def dense(self, fill=np.nan):
        """Full float matrix; diagonal and unobserved entries are ``fill``."""
        out = np.full((self.n, self.n), fill, dtype=float)
        iu, ju = self.pairs()
        v = np.where(self.observed, self.values.astype(float), fill)
        out[iu, ju] = v
        out[ju, iu] = v
        return out

    def with_observed(self, observed):
        return Sociomatrix(self.labels, self.values, observed)

    def subset(self, nodes):
        """Sociomatrix restricted to ``nodes`` (kept in the given order)."""
        nodes = np.asarray(nodes, dtype=int)
        iu, ju = np.triu_indices(len(nodes), 1)
        a, b = nodes[iu], nodes[ju]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        n = self.n
        k = lo * n - lo * (lo + 1) // 2 + (hi - lo - 1)
        return Sociomatrix(
            tuple(self.labels[t] for t in nodes), self.values[k], self.observed[k]
        )

    @classmethod
    def from_dense(cls, matrix, labels=None):
        """Build from a symmetric array; NaN off-diagonal entries are unobserved."""
        a = np.asarray(matrix, dtype=float)
        n = a.shape[0]
        if a.shape != (n, n):
            raise DataError("matrix must be square")
        iu, ju = np.triu_indices(n, 1)
        up, lo = a[iu, ju], a[ju, iu]
        both_nan = np.isnan(up) & np.isnan(lo)
        if np.any(~both_nan & ~np.isclose(up, lo, equal_nan=False)):
            raise DataError("matrix is not symmetric")
        observed = ~np.isnan(up)
        values = np.where(observed, up, 0)
        if labels is None:
            labels = tuple(str(i) for i in range(n))
        return cls(tuple(labels), values, observed)


@dataclass(frozen=True)
class DyadCovariates:
    """Dyad-level covariate vectors, one row per upper-triangle pair."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise DataError("covariates must be a (n_dyads, p) array")
        object.__setattr__(self, "x", _frozen(x, float))

    @property
    def p(self):
        return self.x.shape[1]

    @classmethod
    def empty(cls, n_dyads):
        return cls(np.zeros((n_dyads, 0)))

    def at(self, n, i, j):
        return self.x[dyad_index(n, i, j)]


@dataclass(frozen=True)
class FoldAssignment:
    """Fold index in ``1..F`` for every dyad; 0 marks dyads left out."""

    fold: np.ndarray
    F: int
    seed: int

    def members(self, s):
        return np.flatnonzero(self.fold == s)

    def sizes(self):
        return np.array([np.sum(self.fold == s) for s in range(1, self.F + 1)])


def _parse_value(text, where):
    if text.upper() == "NA":
        return None
    try:
        return int(text)
    except ValueError:
        raise DataError(f"{where}: non-integer value {text!r}") from None


def load_edge_list(path, default=0):
    """Read a tab-separated edge list ``label_i label_j [value]``.

    Missing values default to 1, the literal ``NA`` marks an unobserved dyad
    and dyads that are never listed get ``default`` as an observed value.
    """
    labels = {}
    entries = {}
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise DataError(f"{path}:{lineno}: expected 2 or 3 fields")
            a, b = parts[0], parts[1]
            if a == b:
                raise DataError(f"{path}:{lineno}: self-loop on {a!r}")
            value = _parse_value(parts[2], f"{path}:{lineno}") if len(parts) == 3 else 1
            for lab in (a, b):
                labels.setdefault(lab, len(labels))
            key = frozenset((a, b))
            if key in entries and entries[key] != value:
                raise DataError(
                    f"{path}:{lineno}: conflicting values for dyad {a!r}-{b!r}"
                )
            entries[key] = value
    if len(labels) < 2:
        raise DataError(f"{path}: fewer than two nodes")
    n = len(labels)
    m = n * (n - 1) // 2
    values = np.full(m, default, dtype=np.int64)
    observed = np.ones(m, dtype=bool)
    for key, value in entries.items():
        a, b = tuple(key)
        k = dyad_index(n, labels[a], labels[b])
        if value is None:
            observed[k] = False
            values[k] = 0
        else:
            values[k] = value
    return Sociomatrix(tuple(labels), values, observed)


def write_edge_list(Y, path):
    """Write every dyad in canonical ``i < j`` order; unobserved as ``NA``."""
    iu, ju = Y.pairs()
    with open(path, "w", newline="") as fh:
        for i, j, v, o in zip(iu, ju, Y.values, Y.observed):
            value = str(int(v)) if o else "NA"
            fh.write(f"{Y.labels[i]}\t{Y.labels[j]}\t{value}\n")


def load_dense_csv(path):
    """Read an ``n x n`` CSV with a label header row and label first column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    labels = rows[0][1:]
    n = len(labels)
    body = rows[1:]
    if len(body) != n or any(len(r) != n + 1 for r in body):
        raise DataError(f"{path}: expected a square {n}x{n} body")
    mat = np.full((n, n), np.nan)
    for i, row in enumerate(body):
        if row[0] != labels[i]:
            raise DataError(f"{path}: row {i} label {row[0]!r} != {labels[i]!r}")
        for j, cell in enumerate(row[1:]):
            if i == j:
                continue
            v = _parse_value(cell.strip(), f"{path}: cell ({i},{j})")
            if v is not None:
                mat[i, j] = v
    return Sociomatrix.from_dense(mat, labels)


def write_dense_csv(Y, path):
    d = Y.dense()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(Y.labels))
        for i, lab in enumerate(Y.labels):
            w.writerow([lab] + ["NA" if np.isnan(v) else str(int(v)) for v in d[i]])


def load_covariates(path, Y):
    """Read ``label_i label_j x_1 .. x_p`` lines; unlisted dyads get zeros."""
    index = {lab: k for k, lab in enumerate(Y.labels)}
    rows = {}
    p = None
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.rstrip("\r\n").split("\t")
            if len(parts) < 3:
                continue
            a, b, xs = parts[0], parts[1], parts[2:]
            if p is None:
                p = len(xs)
            elif len(xs) != p:
                raise DataError(f"{path}:{lineno}: expected {p} covariates")
            try:
                i, j = index[a], index[b]
            except KeyError as e:
                raise DataError(f"{path}:{lineno}: unknown node {e.args[0]!r}") from None
            rows[dyad_index(Y.n, i, j)] = [float(v) for v in xs]
    x = np.zeros((Y.n_dyads, p or 0))
    for k, v in rows.items():
        x[k] = v
    return DyadCovariates(x)


def strip_verse_references(text):
    """Remove ``chapter:verse`` markers such as ``1:31`` (their colon would tokenize)."""
    return _VERSE_RE.sub(" ", text)


def tokenize(text):
    """Case-folded alphabetic runs and the punctuation marks ``.,;:?!``."""
    return [m.group(0).lower() for m in _TOKEN_RE.finditer(text)]


def tokenize_adjacency_counts(text):
    """Word-neighbour counts: ``y[a, b]`` = times tokens a and b are adjacent.

    Nodes are ordered by first appearance.  Adjacent repeats of one token
    are dropped since the diagonal is undefined.
    """
    tokens = tokenize(text)
    if len(tokens) < 2:
        raise DataError("need at least two tokens")
    vocab = {}
    for t in tokens:
        vocab.setdefault(t, len(vocab))
    if len(vocab) < 2:
        raise DataError("need at least two distinct tokens")
    n = len(vocab)
    counts = Counter()
    ids = [vocab[t] for t in tokens]
    for a, b in zip(ids, ids[1:]):
        if a != b:
            counts[dyad_index(n, a, b)] += 1
    values = np.zeros(n * (n - 1) // 2, dtype=np.int64)
    for k, c in counts.items():
        values[k] = c
    return Sociomatrix(tuple(vocab), values, np.ones_like(values, dtype=bool))


def genesis_text():
    """King James text of Genesis chapter 1 (bundled, public domain)."""
    return (
        resources.files("eigenmodel")
        .joinpath("resources/genesis1_kjv.txt")
        .read_text(encoding="utf-8")
    )


def largest_connected_component(Y, threshold=0):
    """Restrict ``Y`` to its largest component of the graph ``y > threshold``.

    Ties in size go to the component containing the smallest label.
    """
    if Y.n_observed == 0:
        raise DataError("no observed entries")
    iu, ju = Y.pairs()
    edge = Y.observed & (Y.values > threshold)
    g = coo_matrix(
        (np.ones(edge.sum()), (iu[edge], ju[edge])), shape=(Y.n, Y.n)
    )
    _, comp = connected_components(g, directed=False)
    best_key, best = None, None
    for c in np.unique(comp):
        nodes = np.flatnonzero(comp == c)
        key = (-nodes.size, min(Y.labels[t] for t in nodes))
        if best_key is None or key < best_key:
            best_key, best = key, nodes
    return Y.subset(best)


def assign_folds(Y, F=5, seed=0):
    """Uniformly random partition of the observed dyads into ``F`` folds."""
    if F < 2:
        raise DataError("need at least two folds")
    obs = np.flatnonzero(Y.observed)
    if obs.size < F:
        raise DataError(f"{F} folds requested but only {obs.size} observed dyads")
    rng = make_rng(seed, "folds")
    order = rng.permutation(obs)
    fold = np.zeros(Y.n_dyads, dtype=np.int64)
    fold[order] = np.arange(order.size) % F + 1
    return FoldAssignment(_frozen(fold, np.int64), F, seed)


def mask_fold(Y, folds, s):
    """Copy of ``Y`` with the dyads of fold ``s`` marked unobserved."""
    if not 1 <= s <= folds.F:
        raise DataError(f"fold {s} outside 1..{folds.F}")
    return Y.with_observed(Y.observed & (folds.fold != s))
