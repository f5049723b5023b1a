"""Graph storage, file ingestion, synthetic generation, and data splits.

File formats (byte-level examples live in the README):

* edge list: optional header line ``N <count>``, then one ``src dst`` pair
  per line; lines starting with ``#`` are comments, blank lines are skipped.
* features: headerless CSV of floats, one row per node.
* labels: CSV rows ``node_id,label``; nodes absent from the file count as
  unlabeled.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .util import DataError

UNLABELED = -1


def _as_pair_array(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("edge pairs must have shape (k, 2)")
    return arr


@dataclass(frozen=True)
class SparseGraph:
    """Undirected graph in CSR layout; self-loops are never stored.

    Every edge appears in both directions, so the structure is symmetric and
    ``col_indices`` is sorted within each row.
    """

    node_count: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    directed: bool = False

    @classmethod
    def from_pairs(cls, node_count: int, pairs) -> "SparseGraph":
        """Build from arbitrary (i, j) pairs; dedups, symmetrizes, drops self-loops."""
        arr = _as_pair_array(pairs)
        if arr.size:
            if arr.min() < 0 or arr.max() >= node_count:
                raise ValueError("node id out of range")
            lo = np.minimum(arr[:, 0], arr[:, 1])
            hi = np.maximum(arr[:, 0], arr[:, 1])
            keep = lo != hi
            und = np.unique(np.stack([lo[keep], hi[keep]], axis=1), axis=0)
        else:
            und = arr
        return cls._from_unique_undirected(node_count, und)

    @classmethod
    def from_canonical_pairs(cls, node_count: int, pairs) -> "SparseGraph":
        """Fast path for pairs that are already unique with i < j."""
        return cls._from_unique_undirected(node_count, _as_pair_array(pairs))

    @classmethod
    def _from_unique_undirected(cls, n: int, und: np.ndarray) -> "SparseGraph":
        src = np.concatenate([und[:, 0], und[:, 1]])
        dst = np.concatenate([und[:, 1], und[:, 0]])
        order = np.lexsort((dst, src))
        col = dst[order].astype(np.int64)
        counts = np.bincount(src, minlength=n) if src.size else np.zeros(n, np.int64)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(n, offsets, col)

    @property
    def edge_count(self) -> int:
        """Number of undirected edges."""
        return int(self.col_indices.size) // 2

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def undirected_edges(self) -> np.ndarray:
        """Canonical (i, j) pairs with i < j, sorted lexicographically."""
        rows = np.repeat(np.arange(self.node_count), self.degrees())
        mask = rows < self.col_indices
        return np.stack([rows[mask], self.col_indices[mask]], axis=1)

    def to_scipy(self, weights: np.ndarray | None = None) -> sp.csr_matrix:
        data = np.ones(self.col_indices.size) if weights is None else weights
        return sp.csr_matrix(
            (data, self.col_indices, self.row_offsets),
            shape=(self.node_count, self.node_count),
        )


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense float64 node features, one row per node."""

    rows: int
    cols: int
    data: np.ndarray

    @classmethod
    def from_array(cls, arr) -> "FeatureMatrix":
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("features must be two-dimensional")
        if not np.isfinite(a).all():
            raise ValueError("features must be finite")
        return cls(a.shape[0], a.shape[1], a)


def identity_features(n: int) -> FeatureMatrix:
    """One-hot feature rows, the default for generated benchmark graphs."""
    return FeatureMatrix.from_array(np.eye(n))


@dataclass(frozen=True)
class NodeLabels:
    """Per-node integer labels with -1 marking unlabeled nodes."""

    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", lab)
        known = lab[lab != UNLABELED]
        if known.size and (known.min() < 0 or known.max() >= self.class_count):
            raise ValueError("label outside [0, class_count)")

    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels != UNLABELED)


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetrically normalized adjacency with self-loops, CSR layout.

    Entry (i, j) is 1 / sqrt((deg_i + 1) (deg_j + 1)); the diagonal carries
    the self-loop weights.
    """

    node_count: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        matrix = sp.csr_matrix(
            (self.weights, self.col_indices, self.row_offsets),
            shape=(self.node_count, self.node_count),
        )
        object.__setattr__(self, "_matrix", matrix)

    def dot(self, dense: np.ndarray) -> np.ndarray:
        return self._matrix @ dense

    def to_dense(self) -> np.ndarray:
        return self._matrix.toarray()


def normalize_adjacency(g: SparseGraph) -> NormalizedAdjacency:
    """Self-loop augmented symmetric normalization of the adjacency."""
    inv_sqrt = 1.0 / np.sqrt(g.degrees() + 1.0)
    rows = np.repeat(np.arange(g.node_count), g.degrees())
    cols = g.col_indices
    diag = np.arange(g.node_count)
    coo_rows = np.concatenate([rows, diag])
    coo_cols = np.concatenate([cols, diag])
    coo_vals = np.concatenate([inv_sqrt[rows] * inv_sqrt[cols], inv_sqrt * inv_sqrt])
    matrix = sp.coo_matrix(
        (coo_vals, (coo_rows, coo_cols)), shape=(g.node_count, g.node_count)
    ).tocsr()
    matrix.sort_indices()
    return NormalizedAdjacency(
        g.node_count,
        matrix.indptr.astype(np.int64),
        matrix.indices.astype(np.int64),
        matrix.data,
    )


def load_edge_list(path: str) -> SparseGraph:
    """Read an undirected edge list file into a SparseGraph."""
    declared = None
    pairs: list[tuple[int, int]] = []
    self_loops = 0
    payload_seen = False
    max_id = -1
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for ln, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if not payload_seen and declared is None and tokens[0] == "N":
            if len(tokens) != 2:
                raise DataError(f"{path}: line {ln}: malformed header line")
            try:
                declared = int(tokens[1])
            except ValueError:
                raise DataError(f"{path}: line {ln}: non-integer node count") from None
            if declared < 0:
                raise DataError(f"{path}: line {ln}: negative node count")
            continue
        payload_seen = True
        if len(tokens) != 2:
            raise DataError(
                f"{path}: line {ln}: expected two node ids, got {len(tokens)} fields"
            )
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise DataError(f"{path}: line {ln}: non-integer node id") from None
        if i < 0 or j < 0:
            raise DataError(f"{path}: line {ln}: negative node id")
        if declared is not None and (i >= declared or j >= declared):
            raise DataError(
                f"{path}: line {ln}: node id {max(i, j)} outside declared N={declared}"
            )
        if i == j:
            self_loops += 1
            continue
        pairs.append((i, j))
        max_id = max(max_id, i, j)
    if self_loops:
        warnings.warn(f"{path}: dropped {self_loops} self-loop line(s)")
    n = declared if declared is not None else max_id + 1
    return SparseGraph.from_pairs(max(n, 0), pairs)


def write_edge_list(g: SparseGraph, path: str) -> None:
    """Emit the canonical edge list, one i < j pair per line, with a header."""
    lines = [f"N {g.node_count}"]
    lines.extend(f"{i} {j}" for i, j in g.undirected_edges())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _scan_features(path: str) -> None:
    """Locate the offending row of a features file that numpy rejected."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    width = None
    for row, raw in enumerate(lines, start=1):
        cells = raw.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise DataError(
                f"{path}: row {row} has {len(cells)} columns, expected {width}"
            )
        for cell in cells:
            try:
                float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {row}: non-numeric cell {cell.strip()!r}"
                ) from None


def load_features(path: str, n: int) -> FeatureMatrix:
    """Read a headerless CSV of floats with exactly one row per node."""
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2, comments=None)
    except ValueError:
        _scan_features(path)
        raise DataError(f"{path}: could not parse features file") from None
    if arr.shape[0] != n:
        raise DataError(f"{path}: expected {n} rows, found {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise DataError(f"{path}: non-finite feature value")
    return FeatureMatrix.from_array(arr)


def write_features_csv(x: FeatureMatrix, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in x.data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_labels(path: str, n: int) -> NodeLabels:
    """Read ``node_id,label`` rows; nodes not listed stay unlabeled."""
    labels = np.full(n, UNLABELED, dtype=np.int64)
    seen: set[int] = set()
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    for ln, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataError(f"{path}: line {ln}: expected 'node_id,label'")
        try:
            node, label = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataError(f"{path}: line {ln}: non-integer field") from None
        if not 0 <= node < n:
            raise DataError(f"{path}: line {ln}: node id {node} outside [0, {n})")
        if label < 0:
            raise DataError(f"{path}: line {ln}: negative label")
        if node in seen:
            raise DataError(f"{path}: line {ln}: duplicate node id {node}")
        seen.add(node)
        labels[node] = label
    class_count = int(labels.max()) + 1 if seen else 0
    return NodeLabels(labels, class_count)


def write_labels(labels: NodeLabels, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for node in labels.labeled_indices():
            fh.write(f"{node},{labels.labels[node]}\n")


def generate_sbm(block_sizes, p_in: float, p_out: float, seed: int):
    """Sample a stochastic block model graph plus its block labels.

    Draw order is fixed (intra blocks in index order, then inter pairs), so
    equal seeds give identical graphs. Memory is O(sum of block products),
    which is fine at benchmark scale.
    """
    sizes = [int(s) for s in block_sizes]
    if not sizes or any(s <= 0 for s in sizes):
        raise ValueError("block sizes must be positive")
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    n = int(offsets[-1])
    chunks = []
    for a, size in enumerate(sizes):
        iu, ju = np.triu_indices(size, k=1)
        mask = rng.random(iu.size) < p_in
        if mask.any():
            chunks.append(
                np.stack([iu[mask] + offsets[a], ju[mask] + offsets[a]], axis=1)
            )
    for a in range(len(sizes)):
        for b in range(a + 1, len(sizes)):
            na, nb = sizes[a], sizes[b]
            mask = rng.random(na * nb) < p_out
            if mask.any():
                idx = np.flatnonzero(mask)
                i = idx // nb + offsets[a]
                j = idx % nb + offsets[b]
                chunks.append(np.stack([i, j], axis=1))
    pairs = np.concatenate(chunks) if chunks else np.zeros((0, 2), np.int64)
    graph = SparseGraph.from_canonical_pairs(n, pairs)
    labels = NodeLabels(np.repeat(np.arange(len(sizes)), sizes), len(sizes))
    return graph, labels


def _validate_ratios(ratios) -> tuple[float, float, float]:
    r = tuple(float(v) for v in ratios)
    if len(r) != 3:
        raise ValueError("ratios must have three entries")
    if any(v < 0 for v in r):
        raise ValueError("ratios must be non-negative")
    if abs(sum(r) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    return r


@dataclass(frozen=True)
class EdgeSplit:
    """Edge partition plus fixed negative pairs for scoring.

    All pair arrays store i < j rows. Negatives are disjoint from the full
    edge set and from each other.
    """

    train_pos: np.ndarray
    val_pos: np.ndarray
    test_pos: np.ndarray
    val_neg: np.ndarray
    test_neg: np.ndarray
    split_seed: int


def pair_keys(pairs: np.ndarray, n: int) -> np.ndarray:
    """Encode i < j pairs as single integers for set membership tests."""
    arr = _as_pair_array(pairs)
    return arr[:, 0] * np.int64(n) + arr[:, 1]


def sample_non_pairs(n: int, count: int, rng, forbidden: set) -> np.ndarray:
    """Draw distinct i < j pairs outside the forbidden key set."""
    out: list[tuple[int, int]] = []
    taken: set[int] = set()
    while len(out) < count:
        need = count - len(out)
        batch = max(64, 2 * need)
        a = rng.integers(0, n, size=batch)
        b = rng.integers(0, n, size=batch)
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        for i, j in zip(lo.tolist(), hi.tolist()):
            if i == j:
                continue
            key = i * n + j
            if key in forbidden or key in taken:
                continue
            taken.add(key)
            out.append((i, j))
            if len(out) == count:
                break
    return np.asarray(out, dtype=np.int64).reshape(count, 2)


def _sort_pairs(pairs: np.ndarray) -> np.ndarray:
    if pairs.size == 0:
        return pairs.reshape(0, 2)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def split_edges(g: SparseGraph, ratios, seed: int) -> EdgeSplit:
    """Random edge partition with per-part negative samples of equal size."""
    r = _validate_ratios(ratios)
    und = g.undirected_edges()
    e = len(und)
    n1 = int(e * r[0] + 1e-9)
    n2 = int(e * r[1] + 1e-9)
    counts = {"train": n1, "val": n2, "test": e - n1 - n2}
    for (name, share), ratio in zip(counts.items(), r):
        if ratio > 0 and share == 0:
            raise DataError(f"graph too small to fill the {name} edge split")
        if ratio == 0:
            warnings.warn(f"empty {name} edge split requested")
    available = g.node_count * (g.node_count - 1) // 2 - e
    needed = counts["val"] + counts["test"]
    if needed > available:
        raise DataError("not enough non-edges to sample negatives")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(e)
    train = _sort_pairs(und[perm[:n1]])
    val = _sort_pairs(und[perm[n1 : n1 + n2]])
    test = _sort_pairs(und[perm[n1 + n2 :]])
    forbidden = set(pair_keys(und, g.node_count).tolist()) if e else set()
    val_neg = sample_non_pairs(g.node_count, counts["val"], rng, forbidden)
    forbidden |= set(pair_keys(val_neg, g.node_count).tolist()) if counts["val"] else set()
    test_neg = sample_non_pairs(g.node_count, counts["test"], rng, forbidden)
    return EdgeSplit(train, val, test, _sort_pairs(val_neg), _sort_pairs(test_neg), seed)


@dataclass(frozen=True)
class NodeSplit:
    """Disjoint node index sets for training, validation, and testing."""

    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray


def _largest_remainder(shares: np.ndarray, caps: np.ndarray, total: int, minimum: int) -> np.ndarray:
    """Integer allocation by floor plus largest remainder, honoring caps.

    Ties go to the lower class index so the result is deterministic.
    """
    if total > int(caps.sum()):
        raise ValueError("allocation target exceeds capacity")
    base = np.minimum(np.floor(shares + 1e-9).astype(np.int64), caps)
    base = np.maximum(base, minimum)
    frac = shares - np.floor(shares + 1e-9)
    while base.sum() > total:
        order = sorted(
            range(len(base)), key=lambda c: (-base[c], frac[c], c)
        )
        for c in order:
            if base[c] > minimum:
                base[c] -= 1
                break
        else:
            raise ValueError("cannot satisfy allocation minimums")
    while base.sum() < total:
        order = sorted(range(len(base)), key=lambda c: (-frac[c], c))
        for c in order:
            if base[c] < caps[c]:
                base[c] += 1
                break
        else:  # pragma: no cover - guarded by the capacity check above
            raise ValueError("allocation stalled")
    return base


def split_nodes(labels: NodeLabels, ratios, seed: int) -> NodeSplit:
    """Stratified node split; global part sizes are exact, classes near-even."""
    r = _validate_ratios(ratios)
    if r[0] <= 0:
        raise DataError("training split must be non-empty")
    if labels.class_count == 0:
        raise DataError("no labeled nodes to split")
    by_class = [
        np.flatnonzero(labels.labels == c) for c in range(labels.class_count)
    ]
    parts = sum(1 for v in r if v > 0)
    for c, ids in enumerate(by_class):
        if len(ids) < parts:
            raise DataError(
                f"class {c} has {len(ids)} nodes, fewer than the {parts} split parts"
            )
    counts = np.array([len(ids) for ids in by_class], dtype=np.int64)
    total = int(counts.sum())
    t1 = int(total * r[0] + 1e-9)
    t2 = int(total * r[1] + 1e-9)
    if t1 < labels.class_count:
        raise DataError("train ratio too small to cover every class")
    train_alloc = _largest_remainder(counts * r[0], counts, t1, minimum=1)
    val_alloc = _largest_remainder(counts * r[1], counts - train_alloc, t2, minimum=0)
    for name, ratio in (("val", r[1]), ("test", r[2])):
        if ratio == 0:
            warnings.warn(f"empty {name} node split requested")
    rng = np.random.default_rng(seed)
    train_parts, val_parts, test_parts = [], [], []
    for c, ids in enumerate(by_class):
        perm = rng.permutation(ids)
        a, b = int(train_alloc[c]), int(val_alloc[c])
        train_parts.append(perm[:a])
        val_parts.append(perm[a : a + b])
        test_parts.append(perm[a + b :])
    return NodeSplit(
        np.sort(np.concatenate(train_parts)),
        np.sort(np.concatenate(val_parts)) if total else np.zeros(0, np.int64),
        np.sort(np.concatenate(test_parts)),
    )
