"""In-memory graph representation: features, labels, splits, adjacency."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NO_LABEL = -1
ORIGIN_ORIGINAL = "original"
ORIGIN_CONCEPT = "concept"


class GraphError(ValueError):
    """Base class for graph construction and I/O failures."""


class GraphParseError(GraphError):
    """A graph file could not be parsed; message names the offending line."""


class GraphSchemaError(GraphError):
    """Parsed content violates the graph schema (dims, ranges, splits)."""


def _as_index_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    return arr.reshape(-1)


@dataclass(eq=False)
class Splits:
    """Disjoint train/val/test node-index sets."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __init__(self, train=(), val=(), test=()):
        self.train = _as_index_array(train)
        self.val = _as_index_array(val)
        self.test = _as_index_array(test)

    def as_dict(self) -> dict[str, list[int]]:
        return {
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "test": self.test.tolist(),
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, Splits):
            return NotImplemented
        return (
            np.array_equal(self.train, other.train)
            and np.array_equal(self.val, other.val)
            and np.array_equal(self.test, other.test)
        )


def dedupe_edges(edges: np.ndarray) -> np.ndarray:
    """Drop exact duplicate (src, dst) pairs, keeping first occurrence."""
    if edges.size == 0:
        return edges.reshape(0, 2)
    _, first = np.unique(edges, axis=0, return_index=True)
    return edges[np.sort(first)]


@dataclass(eq=False)
class Graph:
    """A node-attributed graph with directed edges and evaluation splits.

    Nodes are dense ids 0..N-1. `labels` uses -1 for unlabeled nodes.
    `origin` tags each node as "original" or "concept"; concept nodes are
    unlabeled and never belong to a split. Edges are stored directed and
    deduplicated; symmetrization happens on demand (see
    :func:`symmetrized_edges` / :func:`normalized_adjacency`).
    """

    features: np.ndarray
    labels: np.ndarray
    edges: np.ndarray
    splits: Splits
    origin: np.ndarray

    def __init__(self, features, labels=None, edges=None, splits=None, origin=None):
        self.features = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
        n = self.features.shape[0] if self.features.ndim == 2 else -1
        if labels is None:
            labels = np.full(max(n, 0), NO_LABEL, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if edges is None:
            edges = np.zeros((0, 2), dtype=np.int64)
        self.edges = dedupe_edges(np.asarray(edges, dtype=np.int64).reshape(-1, 2))
        self.splits = splits if splits is not None else Splits()
        if origin is None:
            origin = np.full(max(n, 0), ORIGIN_ORIGINAL, dtype="<U8")
        self.origin = np.asarray(origin, dtype="<U8").reshape(-1)
        self.validate()
        for arr in (self.features, self.labels, self.edges, self.origin,
                    self.splits.train, self.splits.val, self.splits.test):
            arr.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        labeled = self.labels[self.labels != NO_LABEL]
        return int(labeled.max()) + 1 if labeled.size else 0

    def original_ids(self) -> np.ndarray:
        return np.flatnonzero(self.origin == ORIGIN_ORIGINAL)

    def concept_ids(self) -> np.ndarray:
        return np.flatnonzero(self.origin == ORIGIN_CONCEPT)

    def validate(self) -> None:
        n = self.num_nodes
        if self.features.ndim != 2:
            raise GraphSchemaError("features must be a 2-d matrix")
        if not np.all(np.isfinite(self.features)):
            raise GraphSchemaError("features contain non-finite values")
        if self.labels.shape != (n,):
            raise GraphSchemaError(
                f"labels length {self.labels.shape[0]} != num_nodes {n}")
        if self.labels.size and self.labels.min() < NO_LABEL:
            raise GraphSchemaError(
                f"label below {NO_LABEL} (the unlabeled marker): "
                f"{int(self.labels.min())}")
        if self.origin.shape != (n,):
            raise GraphSchemaError(
                f"origin length {self.origin.shape[0]} != num_nodes {n}")
        bad_origin = set(np.unique(self.origin)) - {ORIGIN_ORIGINAL, ORIGIN_CONCEPT}
        if bad_origin:
            raise GraphSchemaError(f"unknown origin tags: {sorted(bad_origin)}")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            offender = self.edges[(self.edges < 0).any(axis=1)
                                  | (self.edges >= n).any(axis=1)][0]
            raise GraphSchemaError(
                f"edge endpoint out of range: ({offender[0]}, {offender[1]}) "
                f"with num_nodes={n}")
        members = {}
        for name in ("train", "val", "test"):
            idx = getattr(self.splits, name)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise GraphSchemaError(f"{name} split index out of range")
            if idx.size != np.unique(idx).size:
                raise GraphSchemaError(f"{name} split contains duplicates")
            for i in idx:
                if i in members:
                    raise GraphSchemaError(
                        f"node {i} in both {members[i]} and {name} splits")
                members[int(i)] = name
            if np.any(self.labels[idx] == NO_LABEL):
                raise GraphSchemaError(f"{name} split contains unlabeled nodes")
        concept = self.origin == ORIGIN_CONCEPT
        if np.any(self.labels[concept] != NO_LABEL):
            raise GraphSchemaError("concept nodes must be unlabeled")
        if any(concept[i] for i in members):
            raise GraphSchemaError("concept nodes cannot belong to a split")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.origin, other.origin)
            and self.splits == other.splits
        )


@dataclass(eq=False)
class SparseAdjacency:
    """COO storage of a square N x N matrix with unique (row, col) cells."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    n: int

    def __init__(self, rows, cols, vals, n: int):
        self.rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        self.cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        self.vals = np.asarray(vals, dtype=np.float64).reshape(-1)
        self.n = int(n)
        if not (self.rows.shape == self.cols.shape == self.vals.shape):
            raise GraphSchemaError("rows/cols/vals length mismatch")
        if self.rows.size:
            if self.rows.min() < 0 or self.rows.max() >= self.n:
                raise GraphSchemaError("row index out of range")
            if self.cols.min() < 0 or self.cols.max() >= self.n:
                raise GraphSchemaError("col index out of range")
            cells = np.stack([self.rows, self.cols], axis=1)
            if np.unique(cells, axis=0).shape[0] != cells.shape[0]:
                raise GraphSchemaError("duplicate (row, col) cell")
        if not np.all(np.isfinite(self.vals)):
            raise GraphSchemaError("non-finite adjacency value")
        for arr in (self.rows, self.cols, self.vals):
            arr.setflags(write=False)
        self._csr = None
        self._csr_t = None

    @property
    def nnz(self) -> int:
        return self.vals.size

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n), dtype=np.float64)
        dense[self.rows, self.cols] = self.vals
        return dense

    def csr(self):
        if self._csr is None:
            from scipy.sparse import csr_matrix

            self._csr = csr_matrix(
                (self.vals, (self.rows, self.cols)), shape=(self.n, self.n))
        return self._csr

    def csr_t(self):
        if self._csr_t is None:
            self._csr_t = self.csr().T.tocsr()
        return self._csr_t


def symmetrized_edges(edges: np.ndarray, num_nodes: int,
                      self_loops: bool = False) -> np.ndarray:
    """Union of edges with their reverses (plus optional self-loops), unique,
    sorted lexicographically."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    parts = [edges, edges[:, ::-1]]
    if self_loops:
        loops = np.arange(num_nodes, dtype=np.int64)
        parts.append(np.stack([loops, loops], axis=1))
    merged = np.concatenate(parts, axis=0)
    if merged.size == 0:
        return merged.reshape(0, 2)
    return np.unique(merged, axis=0)


def normalized_adjacency(graph: Graph) -> SparseAdjacency:
    """Symmetrically normalized adjacency with self-loops.

    Symmetrizes the directed edge set, adds a self-loop to every node
    (isolated nodes keep weight 1), and scales each cell (i, j) by
    1/sqrt(d_i * d_j) where d is the degree after self-loop insertion.
    """
    sym = symmetrized_edges(graph.edges, graph.num_nodes, self_loops=True)
    deg = np.bincount(sym[:, 0], minlength=graph.num_nodes).astype(np.float64)
    # d_i * d_j commutes in IEEE arithmetic, so (i, j) and (j, i) come out
    # bitwise equal.
    vals = 1.0 / np.sqrt(deg[sym[:, 0]] * deg[sym[:, 1]])
    return SparseAdjacency(sym[:, 0], sym[:, 1], vals, graph.num_nodes)


def _parse_splits(obj: dict) -> Splits:
    obj = obj or {}
    return Splits(train=obj.get("train", ()), val=obj.get("val", ()),
                  test=obj.get("test", ()))


def _random_features(num_nodes: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, num_nodes, dim])
    return rng.normal(0.0, 1.0 / np.sqrt(dim), size=(num_nodes, dim))


def graph_from_dict(doc: dict, feature_init_seed: int = 0) -> Graph:
    """Build a Graph from the single-document JSON schema."""
    try:
        n = int(doc["num_nodes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphSchemaError(f"missing or invalid num_nodes: {exc}") from exc
    features = doc.get("features")
    if features is None:
        dim = doc.get("feature_dim")
        if dim is None:
            raise GraphSchemaError(
                "features omitted and no feature_dim given for random init")
        features = _random_features(n, int(dim), feature_init_seed)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != n:
        raise GraphSchemaError(
            f"features shape {features.shape} inconsistent with num_nodes={n}")
    labels_raw = doc.get("labels")
    if labels_raw is None:
        labels = np.full(n, NO_LABEL, dtype=np.int64)
    else:
        if len(labels_raw) != n:
            raise GraphSchemaError(
                f"labels length {len(labels_raw)} != num_nodes {n}")
        labels = np.array(
            [NO_LABEL if v is None else int(v) for v in labels_raw],
            dtype=np.int64)
    origin = doc.get("origin")
    return Graph(features=features, labels=labels, edges=doc.get("edges"),
                 splits=_parse_splits(doc.get("splits")), origin=origin)


def graph_to_dict(graph: Graph) -> dict:
    labels = [None if v == NO_LABEL else int(v) for v in graph.labels]
    doc = {
        "num_nodes": graph.num_nodes,
        "features": graph.features.tolist(),
        "labels": labels,
        "edges": graph.edges.tolist(),
        "splits": graph.splits.as_dict(),
    }
    if np.any(graph.origin == ORIGIN_CONCEPT):
        doc["origin"] = graph.origin.tolist()
    return doc


def _load_edge_list_dir(path: Path) -> Graph:
    edges_file = path / "edges.txt"
    features_file = path / "features.csv"
    labels_file = path / "labels.csv"
    for f in (edges_file, features_file):
        if not f.exists():
            raise GraphParseError(f"missing required file: {f}")

    rows: dict[int, np.ndarray] = {}
    dim = None
    for lineno, line in enumerate(features_file.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            idx = int(parts[0])
            vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise GraphParseError(
                f"{features_file}:{lineno}: bad feature row: {exc}") from exc
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise GraphSchemaError(
                f"{features_file}:{lineno}: feature dim {vec.size} != {dim}")
        rows[idx] = vec
    if not rows:
        raise GraphParseError(f"{features_file}: no feature rows")
    n = max(rows) + 1
    if sorted(rows) != list(range(n)):
        raise GraphSchemaError(
            f"{features_file}: node indices are not dense 0..{n - 1}")
    features = np.stack([rows[i] for i in range(n)])

    labels = np.full(n, NO_LABEL, dtype=np.int64)
    if labels_file.exists():
        for lineno, line in enumerate(labels_file.read_text().splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split(",")
            try:
                labels[int(parts[0])] = int(parts[1])
            except (ValueError, IndexError) as exc:
                raise GraphParseError(
                    f"{labels_file}:{lineno}: bad label row: {exc}") from exc

    edge_rows = []
    for lineno, line in enumerate(edges_file.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphParseError(
                f"{edges_file}:{lineno}: expected 'src dst', got {line!r}")
        try:
            edge_rows.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise GraphParseError(
                f"{edges_file}:{lineno}: bad edge: {exc}") from exc

    splits = Splits()
    splits_file = path / "splits.json"
    if splits_file.exists():
        splits = _parse_splits(json.loads(splits_file.read_text()))
    return Graph(features=features, labels=labels, edges=np.array(edge_rows or np.zeros((0, 2))),
                 splits=splits)


def load_graph(path: str | Path, format: str = "json") -> Graph:
    """Load a validated Graph from disk.

    ``format="json"`` reads the single-document schema; ``format="edge-list"``
    reads a directory holding ``edges.txt``, ``features.csv``, optional
    ``labels.csv`` and ``splits.json``.
    """
    path = Path(path)
    if format == "json":
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise GraphParseError(
                f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
        return graph_from_dict(doc)
    if format == "edge-list":
        return _load_edge_list_dir(path)
    raise GraphError(f"unknown graph format: {format!r}")


def save_graph(graph: Graph, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(graph_to_dict(graph)))
