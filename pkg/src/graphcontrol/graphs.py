"""Graph data model, native dataset format, and split construction.

A dataset directory holds plain text files:

    edges.tsv      one edge per line, ``u<TAB>v``, 0-based node ids
    features.csv   optional, N rows of d comma-separated decimals
    labels.csv     optional, N rows, one integer class id per row
    meta.json      {"num_nodes": N, "num_classes": C, "name": "..."}

Graphs are undirected: edge lists are symmetrized and deduplicated on
load. Self-loops are kept only when they appear explicitly in the input
(or are inserted by an operation such as feature-adjacency construction).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, StructureOnlyError


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph in CSR form.

    ``indptr``/``indices`` store every edge in both directions;
    ``degrees[i]`` is the number of stored neighbors of ``i`` (a
    self-loop counts once).
    """

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    attributes: np.ndarray | None = None
    labels: np.ndarray | None = None
    degrees: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "degrees", _frozen(np.diff(self.indptr).astype(np.int64)))
        _frozen(self.indptr)
        _frozen(self.indices)
        if self.attributes is not None:
            _frozen(self.attributes)
        if self.labels is not None:
            _frozen(self.labels)

    @property
    def num_stored_edges(self) -> int:
        return int(self.indices.shape[0])

    @property
    def has_attributes(self) -> bool:
        return self.attributes is not None

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u] : self.indptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        row = self.neighbors(u)
        i = np.searchsorted(row, v)
        return bool(i < row.shape[0] and row[i] == v)

    def structure_only(self) -> "StructureView":
        """View of this graph whose attribute access is a hard error."""
        return StructureView(self)


class StructureView:
    """Structural view of a :class:`Graph`; reading attributes raises.

    Used by pre-training to enforce that node attributes are never
    consumed, even on attributed datasets.
    """

    def __init__(self, graph: Graph):
        self._graph = graph

    @property
    def num_nodes(self) -> int:
        return self._graph.num_nodes

    @property
    def indptr(self) -> np.ndarray:
        return self._graph.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._graph.indices

    @property
    def degrees(self) -> np.ndarray:
        return self._graph.degrees

    @property
    def labels(self):
        return self._graph.labels

    @property
    def has_attributes(self) -> bool:
        return False

    @property
    def attributes(self):
        raise StructureOnlyError("node attributes are not readable through a structure-only view")

    def neighbors(self, u: int) -> np.ndarray:
        return self._graph.neighbors(u)

    def has_edge(self, u: int, v: int) -> bool:
        return self._graph.has_edge(u, v)


def build_graph(
    num_nodes: int,
    edges: np.ndarray,
    attributes: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    num_classes: int | None = None,
) -> Graph:
    """Build an undirected Graph from an edge array of shape (E, 2).

    Edges are symmetrized and deduplicated; self-loops in ``edges`` are
    kept (stored once). Raises DataError on out-of-range ids or shape
    mismatches.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if num_nodes < 1:
        raise DataError("graph must have at least one node")
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise DataError(f"edge endpoint out of range for {num_nodes} nodes")

    if edges.size:
        sym = np.concatenate([edges, edges[:, ::-1]], axis=0)
        keys = sym[:, 0] * num_nodes + sym[:, 1]
        keys = np.unique(keys)
        src = keys // num_nodes
        dst = keys % num_nodes
    else:
        src = np.empty(0, dtype=np.int64)
        dst = np.empty(0, dtype=np.int64)

    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    # keys are sorted by (src, dst), so dst is already grouped and sorted
    indices = dst

    if attributes is not None:
        attributes = np.ascontiguousarray(attributes, dtype=np.float64)
        if attributes.ndim != 2 or attributes.shape[0] != num_nodes:
            raise DataError(
                f"attribute matrix has {attributes.shape[0]} rows, expected {num_nodes}"
            )
        if not np.isfinite(attributes).all():
            raise DataError("attribute matrix contains non-finite values")
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (num_nodes,):
            raise DataError(f"label vector has length {labels.shape[0]}, expected {num_nodes}")
        if labels.size and labels.min() < 0:
            raise DataError("label out of range: negative class id")
        if num_classes is not None and labels.size and labels.max() >= num_classes:
            raise DataError(
                f"label out of range: found {int(labels.max())} with {num_classes} classes"
            )
    return Graph(num_nodes=num_nodes, indptr=indptr, indices=indices,
                 attributes=attributes, labels=labels)


@dataclass(frozen=True)
class DatasetBundle:
    graph: Graph
    name: str
    is_attributed: bool
    num_classes: int

    def __post_init__(self):
        if self.is_attributed != self.graph.has_attributes:
            raise DataError("is_attributed flag inconsistent with graph attributes")


@dataclass(frozen=True)
class DataSplit:
    train_ids: np.ndarray
    test_ids: np.ndarray
    seed: int

    def __post_init__(self):
        _frozen(np.asarray(self.train_ids))
        _frozen(np.asarray(self.test_ids))
        if np.intersect1d(self.train_ids, self.test_ids).size:
            raise DataError("train and test sets overlap")
        if np.unique(self.train_ids).size != self.train_ids.size:
            raise DataError("duplicate ids in train set")
        if np.unique(self.test_ids).size != self.test_ids.size:
            raise DataError("duplicate ids in test set")


# ---------------------------------------------------------------------------
# native format I/O


def _parse_edges(path: Path, num_nodes: int) -> np.ndarray:
    edges = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path.name}:{lineno}: expected 'u<TAB>v', got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"{path.name}:{lineno}: non-integer node id in {line!r}") from None
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise DataError(f"{path.name}:{lineno}: node id out of range [0, {num_nodes})")
            edges.append((u, v))
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def _parse_features(path: Path, num_nodes: int) -> np.ndarray:
    try:
        mat = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        # slow path: locate the offending line for the error message
        with path.open("r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                for tok in line.strip().split(","):
                    try:
                        float(tok)
                    except ValueError:
                        raise DataError(
                            f"{path.name}:{lineno}: malformed decimal value {tok!r}"
                        ) from None
        raise DataError(f"{path.name}: malformed feature matrix") from None
    if mat.shape[0] != num_nodes:
        raise DataError(
            f"{path.name}: {mat.shape[0]} attribute rows, expected {num_nodes} (row count mismatch)"
        )
    if not np.isfinite(mat).all():
        bad = int(np.where(~np.isfinite(mat).all(axis=1))[0][0]) + 1
        raise DataError(f"{path.name}:{bad}: non-finite attribute value")
    return mat


def _parse_labels(path: Path, num_nodes: int, num_classes: int) -> np.ndarray:
    labels = np.empty(num_nodes, dtype=np.int64)
    n = 0
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                y = int(line)
            except ValueError:
                raise DataError(f"{path.name}:{lineno}: non-integer label {line!r}") from None
            if not (0 <= y < num_classes):
                raise DataError(
                    f"{path.name}:{lineno}: label out of range: {y} with {num_classes} classes"
                )
            if n >= num_nodes:
                raise DataError(f"{path.name}:{lineno}: more label rows than nodes")
            labels[n] = y
            n += 1
    if n != num_nodes:
        raise DataError(f"{path.name}: {n} label rows, expected {num_nodes}")
    return labels


def load_dataset(root_path: str | Path, name: str) -> DatasetBundle:
    """Load a dataset directory ``root_path/name`` in the native format."""
    root = Path(root_path) / name
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise DataError(f"missing file: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        num_nodes = int(meta["num_nodes"])
        num_classes = int(meta["num_classes"])
        ds_name = str(meta.get("name", name))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"{meta_path.name}: malformed metadata ({e})") from None

    edges_path = root / "edges.tsv"
    if not edges_path.is_file():
        raise DataError(f"missing file: {edges_path}")
    edges = _parse_edges(edges_path, num_nodes)

    feat_path = root / "features.csv"
    attributes = _parse_features(feat_path, num_nodes) if feat_path.is_file() else None

    labels_path = root / "labels.csv"
    labels = _parse_labels(labels_path, num_nodes, num_classes) if labels_path.is_file() else None

    graph = build_graph(num_nodes, edges, attributes=attributes, labels=labels,
                        num_classes=num_classes)
    return DatasetBundle(graph=graph, name=ds_name, is_attributed=graph.has_attributes,
                         num_classes=num_classes)


def save_dataset(bundle: DatasetBundle, root_path: str | Path) -> Path:
    """Write a DatasetBundle in the native format; returns the dataset dir."""
    root = Path(root_path) / bundle.name
    root.mkdir(parents=True, exist_ok=True)
    g = bundle.graph

    with (root / "edges.tsv").open("w", encoding="utf-8") as f:
        for u in range(g.num_nodes):
            for v in g.neighbors(u):
                if v >= u:  # each undirected edge written once
                    f.write(f"{u}\t{v}\n")

    if g.attributes is not None:
        with (root / "features.csv").open("w", encoding="utf-8") as f:
            for row in g.attributes:
                f.write(",".join(repr(float(x)) for x in row))
                f.write("\n")

    if g.labels is not None:
        with (root / "labels.csv").open("w", encoding="utf-8") as f:
            for y in g.labels:
                f.write(f"{int(y)}\n")

    meta = {"num_nodes": g.num_nodes, "num_classes": bundle.num_classes, "name": bundle.name}
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return root


# ---------------------------------------------------------------------------
# splits


def make_split(graph: Graph, train_fraction: float, seed: int) -> DataSplit:
    """Uniform train/test split over all nodes; |train| = round(f * N)."""
    if graph.labels is None:
        raise DataError("make_split requires labels")
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = graph.num_nodes
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise DataError(f"train_fraction {train_fraction} yields an empty train or test set")
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(n)
    train = np.sort(perm[:n_train])
    test = np.sort(perm[n_train:])
    return DataSplit(train_ids=train, test_ids=test, seed=seed)


def make_fewshot_split(graph: Graph, shots: int, seed: int) -> DataSplit:
    """Few-shot split: 1:9 candidate/test partition, then ``shots`` training
    nodes drawn per class from the candidate pool (sub-seed = seed ^ 1).

    Candidate nodes not drawn for training are left unused.
    """
    if graph.labels is None:
        raise DataError("make_fewshot_split requires labels")
    if shots < 1:
        raise DataError("shots must be >= 1")
    base = make_split(graph, train_fraction=0.1, seed=seed)
    candidates, test = base.train_ids, base.test_ids

    rng = np.random.Generator(np.random.PCG64(seed ^ 1))
    labels = graph.labels
    train_parts = []
    for c in np.unique(labels):
        pool = candidates[labels[candidates] == c]
        if pool.size < shots:
            raise DataError(
                f"class {int(c)} has only {pool.size} candidate nodes, needs {shots}"
            )
        pick = rng.choice(pool, size=shots, replace=False)
        train_parts.append(pick)
    train = np.sort(np.concatenate(train_parts))
    return DataSplit(train_ids=train, test_ids=test, seed=seed)
