"""Undirected weighted graphs and node categories.

Internally a graph is a CSR array over edge *endpoints*: every edge {u,v}
contributes one slot to u's row and one to v's row, so a self-loop {v,v}
occupies two slots of row v. Row length is therefore deg(v) and the row's
weight sum is w(v), with self-loops counted twice.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

OTHER_LABEL = "__other__"
MERGED_IRRELEVANT_LABEL = "__irrelevant__"


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Topology:
    """Edge structure shared by every reweighting of a graph."""

    edges: np.ndarray
    node_ids: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    slot_edge: np.ndarray

    @functools.cached_property
    def degrees(self) -> np.ndarray:
        d = np.diff(self.indptr)
        d.setflags(write=False)
        return d

    @functools.cached_property
    def slot_rows(self) -> np.ndarray:
        r = np.repeat(np.arange(len(self.node_ids)), self.degrees)
        r.setflags(write=False)
        return r


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Immutable undirected graph with nonnegative edge weights.

    Nodes are dense ids ``0..N-1``; ``node_ids`` maps them back to the ids
    used on input. ``edges`` holds each undirected edge once as ``(u, v)``
    with ``u <= v``.
    """

    topology: Topology
    edge_weights: np.ndarray

    def __post_init__(self):
        sw = self.edge_weights[self.topology.slot_edge]
        nw = np.bincount(self.topology.slot_rows, weights=sw, minlength=self.node_count)
        for a in (sw, nw):
            a.setflags(write=False)
        object.__setattr__(self, "slot_weights", sw)
        object.__setattr__(self, "node_weights", nw)

    edges = property(lambda self: self.topology.edges)
    node_ids = property(lambda self: self.topology.node_ids)
    indptr = property(lambda self: self.topology.indptr)
    indices = property(lambda self: self.topology.indices)
    slot_edge = property(lambda self: self.topology.slot_edge)
    degrees = property(lambda self: self.topology.degrees)

    @property
    def node_count(self) -> int:
        return len(self.topology.node_ids)

    @property
    def edge_count(self) -> int:
        return len(self.topology.edges)

    def degree(self, u: int) -> int:
        _check_node(self, u)
        return int(self.degrees[u])

    def neighbors(self, u: int) -> np.ndarray:
        """Neighbor endpoints of ``u``; a self-loop shows up twice."""
        _check_node(self, u)
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def adjacency(self, u: int) -> list[tuple[int, float]]:
        """``(neighbor, weight)`` pairs of ``u`` with a self-loop listed once."""
        _check_node(self, u)
        out = []
        seen_loop = False
        for s in range(self.indptr[u], self.indptr[u + 1]):
            v = int(self.indices[s])
            if v == u:
                if seen_loop:
                    seen_loop = False
                    continue
                seen_loop = True
            out.append((v, float(self.edge_weights[self.slot_edge[s]])))
        return out

    def weight(self, u: int, v: int) -> float:
        _check_node(self, u)
        _check_node(self, v)
        row = slice(self.indptr[u], self.indptr[u + 1])
        hit = np.flatnonzero(self.indices[row] == v)
        if len(hit) == 0:
            raise GraphError(f"no edge {{{u},{v}}}")
        return float(self.edge_weights[self.slot_edge[row][hit[0]]])

    def has_self_loop(self, u: int) -> bool:
        return bool(np.any(self.neighbors(u) == u))

    def with_edge_weights(self, edge_weights: Sequence[float]) -> "WeightedGraph":
        """Same topology, new weights (one per row of ``edges``)."""
        ew = np.array(edge_weights, dtype=float)
        if ew.shape != self.edge_weights.shape:
            raise GraphError("need exactly one weight per edge")
        if np.any(~np.isfinite(ew)) or np.any(ew < 0):
            raise GraphError("edge weights must be finite and nonnegative")
        ew.setflags(write=False)
        return WeightedGraph(self.topology, ew)


def _check_node(g: WeightedGraph, u) -> None:
    if not (0 <= int(u) < g.node_count) or int(u) != u:
        raise GraphError(f"unknown node {u}")


def build_graph(edges: Iterable[Sequence], nodes: Iterable[int] | None = None) -> WeightedGraph:
    """Build a graph from ``(u, v)`` or ``(u, v, weight)`` tuples.

    Input ids are nonnegative integers and are remapped to ``0..N-1`` in
    sorted order. ``nodes`` adds ids that may have no incident edge.
    Duplicate undirected edges and negative weights are rejected.
    """
    rows = [tuple(e) for e in edges]
    ends = np.array([(int(r[0]), int(r[1])) for r in rows], dtype=np.int64).reshape(-1, 2)
    weights = np.array([float(r[2]) if len(r) > 2 else 1.0 for r in rows], dtype=float)
    extra = np.fromiter((int(x) for x in nodes), dtype=np.int64) if nodes is not None else None
    return from_arrays(ends, weights, extra_nodes=extra)


def from_arrays(ends: np.ndarray, weights: np.ndarray | None = None,
                extra_nodes: np.ndarray | None = None,
                num_nodes: int | None = None) -> WeightedGraph:
    """Vectorized builder; ``num_nodes`` skips remapping (ids already dense)."""
    ends = np.asarray(ends, dtype=np.int64).reshape(-1, 2)
    m = len(ends)
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=float)
    if len(w) != m:
        raise GraphError("weights length does not match edge count")
    if np.any(ends < 0):
        raise GraphError("node ids must be nonnegative integers")
    if np.any(~np.isfinite(w)):
        raise GraphError("edge weights must be finite")
    if np.any(w < 0):
        raise GraphError("negative edge weight")

    if num_nodes is not None:
        if m and ends.max() >= num_nodes:
            raise GraphError("edge endpoint outside 0..num_nodes-1")
        node_ids = np.arange(num_nodes, dtype=np.int64)
        dense = ends
    else:
        pool = [ends.ravel()]
        if extra_nodes is not None:
            if np.any(np.asarray(extra_nodes) < 0):
                raise GraphError("node ids must be nonnegative integers")
            pool.append(np.asarray(extra_nodes, dtype=np.int64))
        node_ids = np.unique(np.concatenate(pool))
        dense = np.searchsorted(node_ids, ends)
    n = len(node_ids)
    if n == 0:
        raise GraphError("graph has no nodes")

    lo = np.minimum(dense[:, 0], dense[:, 1])
    hi = np.maximum(dense[:, 0], dense[:, 1])
    key = lo * n + hi
    if len(np.unique(key)) != m:
        dup = key[np.argsort(key, kind="stable")]
        k = dup[np.flatnonzero(dup[1:] == dup[:-1])[0]]
        raise GraphError(f"duplicate edge {{{node_ids[k // n]},{node_ids[k % n]}}}")
    canon = np.stack([lo, hi], axis=1)

    src = np.concatenate([lo, hi])
    dst = np.concatenate([hi, lo])
    eid = np.concatenate([np.arange(m), np.arange(m)])
    order = np.lexsort((dst, src))
    src, dst, eid = src[order], dst[order], eid[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])

    w = w.copy()
    dst = dst.astype(np.int64)
    eid = eid.astype(np.int64)
    for a in (canon, w, node_ids, indptr, dst, eid):
        a.setflags(write=False)
    return WeightedGraph(Topology(canon, node_ids, indptr, dst, eid), w)


def node_weight(g: WeightedGraph, u: int) -> float:
    """w(u): total incident weight, a self-loop counted twice."""
    _check_node(g, u)
    return float(g.node_weights[u])


@dataclass(frozen=True, eq=False)
class CategoryPartition:
    """Assignment of every node to exactly one category.

    ``irrelevant`` optionally names the single category treated as the
    irrelevant remainder of the population.
    """

    category_of: np.ndarray
    labels: tuple[str, ...]
    irrelevant: int | None = None

    def __post_init__(self):
        c = np.asarray(self.category_of, dtype=np.int64)
        if c.ndim != 1:
            raise GraphError("category_of must be one-dimensional")
        if len(c) and (c.min() < 0 or c.max() >= len(self.labels)):
            raise GraphError("category id out of range")
        if len(set(self.labels)) != len(self.labels):
            raise GraphError("category labels must be unique")
        if self.irrelevant is not None and not 0 <= self.irrelevant < len(self.labels):
            raise GraphError("irrelevant category id out of range")
        c.setflags(write=False)
        object.__setattr__(self, "category_of", c)

    @classmethod
    def from_labels(cls, node_labels: Sequence, irrelevant=None) -> "CategoryPartition":
        """Build from one label per node.

        ``irrelevant`` is a label or a collection of labels; several labels
        are merged into a single irrelevant category.
        """
        node_labels = [str(x) for x in node_labels]
        if irrelevant is None:
            bad: set[str] = set()
        elif isinstance(irrelevant, str):
            bad = {irrelevant}
        else:
            bad = {str(x) for x in irrelevant}
        present_bad = sorted(bad & set(node_labels))
        merged = None
        if len(present_bad) == 1:
            merged = present_bad[0]
        elif len(present_bad) > 1:
            merged = MERGED_IRRELEVANT_LABEL
            node_labels = [merged if x in bad else x for x in node_labels]
        labels = tuple(dict.fromkeys(node_labels))
        index = {lab: i for i, lab in enumerate(labels)}
        cat = np.array([index[x] for x in node_labels], dtype=np.int64)
        return cls(cat, labels, index[merged] if merged is not None else None)

    @property
    def num_categories(self) -> int:
        return len(self.labels)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.category_of, minlength=self.num_categories)

    @property
    def relevant(self) -> np.ndarray:
        mask = np.ones(self.num_categories, dtype=bool)
        if self.irrelevant is not None:
            mask[self.irrelevant] = False
        return mask

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise GraphError(f"unknown category {label!r}") from None

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.category_of == c)


@dataclass(frozen=True)
class NodeSetStats:
    size: int
    volume: float
    weight: float
    size_fraction: float
    volume_fraction: float


def set_stats(g: WeightedGraph, p: CategoryPartition, c: int) -> NodeSetStats:
    if not 0 <= c < p.num_categories:
        raise GraphError(f"unknown category {c}")
    _check_partition(g, p)
    mask = p.category_of == c
    deg = g.degrees
    vol_total = deg.sum()
    size = int(mask.sum())
    vol = float(deg[mask].sum())
    return NodeSetStats(
        size=size,
        volume=vol,
        weight=float(g.node_weights[mask].sum()),
        size_fraction=size / g.node_count,
        volume_fraction=vol / vol_total if vol_total > 0 else 0.0,
    )


def category_sizes(p: CategoryPartition) -> np.ndarray:
    return p.sizes


def category_volumes(g: WeightedGraph, p: CategoryPartition) -> np.ndarray:
    _check_partition(g, p)
    return np.bincount(p.category_of, weights=g.degrees, minlength=p.num_categories)


def category_weights(g: WeightedGraph, p: CategoryPartition) -> np.ndarray:
    _check_partition(g, p)
    return np.bincount(p.category_of, weights=g.node_weights, minlength=p.num_categories)


def category_edge_sets(g: WeightedGraph, p: CategoryPartition) -> dict[tuple[int, int], int]:
    """Edge counts between category pairs, keyed ``(ci, cj)`` with ``ci <= cj``.

    Pairs with no edges are absent, so the keys are the edges of the
    category graph (plus its loops).
    """
    _check_partition(g, p)
    if g.edge_count == 0:
        return {}
    a = p.category_of[g.edges[:, 0]]
    b = p.category_of[g.edges[:, 1]]
    k = p.num_categories
    keys, counts = np.unique(np.minimum(a, b) * k + np.maximum(a, b), return_counts=True)
    return {(int(x // k), int(x % k)): int(c) for x, c in zip(keys, counts)}


def neighbor_category_counts(g: WeightedGraph, p: CategoryPartition) -> np.ndarray:
    """``(N, K)`` matrix: row v counts the categories of v's neighbor endpoints."""
    _check_partition(g, p)
    return _neighbor_counts(g.topology, p)


@functools.lru_cache(maxsize=16)
def _neighbor_counts(t: Topology, p: CategoryPartition) -> np.ndarray:
    k = p.num_categories
    n = len(t.node_ids)
    flat = t.slot_rows * k + p.category_of[t.indices]
    out = np.bincount(flat, minlength=n * k).reshape(n, k)
    out = out.astype(np.int64)
    out.setflags(write=False)
    return out


def _check_partition(g: WeightedGraph, p: CategoryPartition) -> None:
    if len(p.category_of) != g.node_count:
        raise GraphError("partition does not cover the graph's nodes")


def is_connected(g: WeightedGraph, positive_only: bool = False) -> bool:
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    data = np.array(g.slot_weights) if positive_only else np.ones(len(g.indices))
    mat = csr_matrix((data, g.indices.copy(), g.indptr.copy()), shape=(g.node_count,) * 2)
    if positive_only:
        mat.eliminate_zeros()
    ncomp, _ = connected_components(mat, directed=False)
    return ncomp == 1


# -- text formats ---------------------------------------------------------

def _data_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def read_edge_list(path: str | Path) -> WeightedGraph:
    """Read ``u v`` or ``u v w`` lines; ``#`` starts a comment."""
    edges = []
    for lineno, parts in _data_lines(path):
        if len(parts) not in (2, 3):
            raise GraphError(f"{path}:{lineno}: expected 'u v [w]'")
        try:
            edges.append((int(parts[0]), int(parts[1]), *(float(x) for x in parts[2:])))
        except ValueError:
            raise GraphError(f"{path}:{lineno}: malformed edge") from None
    return build_graph(edges)


def write_edge_list(g: WeightedGraph, path: str | Path, weights: bool | None = None) -> None:
    if weights is None:
        weights = bool(np.any(g.edge_weights != 1.0))
    ids = g.node_ids
    with open(path, "w") as fh:
        fh.write(f"# nodes={g.node_count} edges={g.edge_count}\n")
        for (u, v), w in zip(g.edges, g.edge_weights):
            if weights:
                fh.write(f"{ids[u]} {ids[v]} {float(w)!r}\n")
            else:
                fh.write(f"{ids[u]} {ids[v]}\n")


def read_categories(path: str | Path, g: WeightedGraph, irrelevant=None) -> CategoryPartition:
    """Read ``node label`` lines; unlisted nodes get ``__other__``.

    When ``irrelevant`` is given, ``__other__`` is folded into it.
    """
    by_id = {}
    for lineno, parts in _data_lines(path):
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected 'node label'")
        by_id[int(parts[0])] = parts[1]
    labels = [by_id.get(int(i), OTHER_LABEL) for i in g.node_ids]
    if irrelevant is not None:
        bad = {irrelevant} if isinstance(irrelevant, str) else set(irrelevant)
        if OTHER_LABEL in labels:
            bad.add(OTHER_LABEL)
        irrelevant = bad
    return CategoryPartition.from_labels(labels, irrelevant=irrelevant)


def write_categories(g: WeightedGraph, p: CategoryPartition, path: str | Path) -> None:
    with open(path, "w") as fh:
        if p.irrelevant is not None:
            fh.write(f"# irrelevant={p.labels[p.irrelevant]}\n")
        for i, c in zip(g.node_ids, p.category_of):
            fh.write(f"{i} {p.labels[c]}\n")
