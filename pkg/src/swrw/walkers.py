"""Node samplers: independence sampling (UIS, WIS) and crawls (RW, MHRW, WRW).

Every sampler returns a :class:`WalkSample` that records, per visit, what a
crawler would actually see at that node: its degree, its category, the
(unnormalized) sampling weight used for re-weighting, and the categories of
its neighbors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .graph import (CategoryPartition, GraphError, WeightedGraph, is_connected,
                    neighbor_category_counts)

SAMPLERS = ("uis", "wis", "rw", "mhrw", "wrw", "swrw")


class WalkStuckError(RuntimeError):
    """The walker reached a node it cannot leave."""

    def __init__(self, node: int, step: int):
        super().__init__(f"walk stuck at node {node} (step {step})")
        self.node = node
        self.step = step


class ConvergenceError(RuntimeError):
    pass


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic 63-bit child seed for ``(master, *keys)``."""
    ss = np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in keys))
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return int((int(hi) << 31) ^ int(lo)) & ((1 << 63) - 1)


@dataclass(frozen=True, eq=False)
class WalkSample:
    """Ordered visits of one sampling run (after burn-in)."""

    nodes: np.ndarray
    degrees: np.ndarray
    categories: np.ndarray
    node_weights: np.ndarray
    neighbor_counts: np.ndarray | None
    labels: tuple[str, ...]
    sampler: str
    seed: int | None = None
    burn_in: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def num_categories(self) -> int:
        return len(self.labels)

    def prefix(self, n: int) -> "WalkSample":
        nc = None if self.neighbor_counts is None else self.neighbor_counts[:n]
        return WalkSample(self.nodes[:n], self.degrees[:n], self.categories[:n],
                          self.node_weights[:n], nc, self.labels, self.sampler,
                          self.seed, self.burn_in, dict(self.meta))

    def to_csv(self, path: str | Path, node_ids: np.ndarray | None = None) -> None:
        ids = self.nodes if node_ids is None else np.asarray(node_ids)[self.nodes]
        with open(path, "w", newline="") as fh:
            fh.write(f"# sampler={self.sampler} seed={self.seed} burn_in={self.burn_in}\n")
            fh.write(f"# categories={','.join(self.labels)}\n")
            w = csv.writer(fh)
            header = ["step", "node", "degree", "category", "node_weight"]
            if self.neighbor_counts is not None:
                header.append("neighbor_categories")
            w.writerow(header)
            for i in range(len(self)):
                row = [i, int(ids[i]), int(self.degrees[i]), self.labels[self.categories[i]],
                       repr(float(self.node_weights[i]))]
                if self.neighbor_counts is not None:
                    row.append(";".join(f"{self.labels[c]}:{k}"
                                        for c, k in enumerate(self.neighbor_counts[i]) if k))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path, node_ids: np.ndarray | None = None) -> "WalkSample":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"trace file not found: {path}")
        info = {}
        labels: list[str] = []
        with open(path, newline="") as fh:
            lines = []
            for line in fh:
                if line.startswith("#"):
                    for tok in line[1:].split():
                        k, _, v = tok.partition("=")
                        info[k] = v
                else:
                    lines.append(line)
        if "categories" in info and info["categories"]:
            labels = info["categories"].split(",")
        rows = list(csv.DictReader(lines))
        for r in rows:
            if r["category"] not in labels:
                labels.append(r["category"])
        index = {lab: i for i, lab in enumerate(labels)}
        nodes = np.array([int(r["node"]) for r in rows], dtype=np.int64)
        if node_ids is not None:
            nodes = np.searchsorted(np.asarray(node_ids), nodes)
        has_nbr = bool(rows) and "neighbor_categories" in rows[0]
        nbr = None
        if has_nbr:
            nbr = np.zeros((len(rows), len(labels)), dtype=np.int64)
            for i, r in enumerate(rows):
                for part in filter(None, r["neighbor_categories"].split(";")):
                    lab, _, k = part.rpartition(":")
                    nbr[i, index[lab]] = int(k)
        seed = info.get("seed")
        return cls(
            nodes=nodes,
            degrees=np.array([int(r["degree"]) for r in rows], dtype=np.int64),
            categories=np.array([index[r["category"]] for r in rows], dtype=np.int64),
            node_weights=np.array([float(r["node_weight"]) for r in rows]),
            neighbor_counts=nbr,
            labels=tuple(labels),
            sampler=info.get("sampler", "unknown"),
            seed=None if seed in (None, "None") else int(seed),
            burn_in=int(info.get("burn_in", 0)),
        )


@dataclass(frozen=True)
class StationaryDistribution:
    probabilities: np.ndarray
    iterations: int = 0
    residual: float = 0.0

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probabilities, dtype=dtype)


def _trivial_partition(g: WeightedGraph) -> CategoryPartition:
    return CategoryPartition(np.zeros(g.node_count, dtype=np.int64), ("all",))


def _assemble(g, partition, nodes, weights, sampler, seed, burn_in, meta=None) -> WalkSample:
    p = partition if partition is not None else _trivial_partition(g)
    counts = neighbor_category_counts(g, p)
    return WalkSample(
        nodes=nodes,
        degrees=g.degrees[nodes],
        categories=p.category_of[nodes],
        node_weights=np.asarray(weights, dtype=float),
        neighbor_counts=counts[nodes],
        labels=p.labels,
        sampler=sampler,
        seed=seed,
        burn_in=burn_in,
        meta=meta or {},
    )


def _check_n(n: int) -> None:
    if int(n) != n or n < 1:
        raise ValueError(f"sample size must be a positive integer, got {n}")


def uis(g: WeightedGraph, n: int, seed=None, partition: CategoryPartition | None = None) -> WalkSample:
    """n uniform draws from V with replacement."""
    _check_n(n)
    if g.node_count == 0:
        raise GraphError("empty graph")
    rng = make_rng(seed)
    nodes = rng.integers(0, g.node_count, size=n)
    return _assemble(g, partition, nodes, np.ones(n), "uis", seed, 0)


def wis(g: WeightedGraph, n: int, z: Sequence[float], seed=None,
        partition: CategoryPartition | None = None) -> WalkSample:
    """n draws from V with replacement, P(v) proportional to z(v)."""
    _check_n(n)
    z = np.asarray(z, dtype=float)
    if z.shape != (g.node_count,):
        raise ValueError("need one weight per node")
    if np.any(~np.isfinite(z)) or np.any(z < 0):
        raise ValueError("node weights must be finite and nonnegative")
    total = z.sum()
    if not total > 0:
        raise ValueError("node weights are all zero")
    cdf = np.cumsum(z)
    rng = make_rng(seed)
    x = rng.random(n) * cdf[-1]
    nodes = np.searchsorted(cdf, x, side="right")
    # rounding can land on the very top of the cdf
    top = np.flatnonzero(z > 0)[-1]
    np.minimum(nodes, top, out=nodes)
    return _assemble(g, partition, nodes, z[nodes], "wis", seed, 0)


# -- crawl kernels --------------------------------------------------------
# Each kernel fills ``out`` starting from out[0] and returns -1 on success or
# the index of the position where the walker got stuck.

@numba.njit(cache=True, nogil=True)
def _rw_kernel(indptr, indices, u_rand, out):
    for t in range(1, len(out)):
        u = out[t - 1]
        lo = indptr[u]
        d = indptr[u + 1] - lo
        if d == 0:
            return t - 1
        k = int(u_rand[t - 1] * d)
        if k >= d:
            k = d - 1
        out[t] = indices[lo + k]
    return -1


@numba.njit(cache=True, nogil=True)
def _mhrw_kernel(indptr, indices, u_rand, out):
    for t in range(1, len(out)):
        u = out[t - 1]
        lo = indptr[u]
        du = indptr[u + 1] - lo
        if du == 0:
            return t - 1
        k = int(u_rand[t - 1, 0] * du)
        if k >= du:
            k = du - 1
        v = indices[lo + k]
        dv = indptr[v + 1] - indptr[v]
        if dv <= du or u_rand[t - 1, 1] * dv < du:
            out[t] = v
        else:
            out[t] = u
    return -1


@numba.njit(cache=True, nogil=True)
def _row_cumsum(indptr, slot_weights):
    cum = np.empty_like(slot_weights)
    for u in range(len(indptr) - 1):
        acc = 0.0
        for s in range(indptr[u], indptr[u + 1]):
            acc += slot_weights[s]
            cum[s] = acc
    return cum


@numba.njit(cache=True, nogil=True)
def _wrw_kernel(indptr, indices, cum, u_rand, out):
    for t in range(1, len(out)):
        u = out[t - 1]
        lo = indptr[u]
        hi = indptr[u + 1]
        if hi == lo or cum[hi - 1] <= 0.0:
            return t - 1
        x = u_rand[t - 1] * cum[hi - 1]
        # first slot whose cumulative weight exceeds x; zero-weight slots
        # never satisfy this strictly
        a = lo
        b = hi
        while a < b:
            m = (a + b) // 2
            if cum[m] > x:
                b = m
            else:
                a = m + 1
        if a >= hi:
            a = hi - 1
            while a > lo and cum[a] == cum[a - 1]:
                a -= 1
        out[t] = indices[a]
    return -1


def _cumulative_weights(g: WeightedGraph) -> np.ndarray:
    cum = g.__dict__.get("_cum")
    if cum is None:
        cum = _row_cumsum(g.indptr, np.ascontiguousarray(g.slot_weights))
        object.__setattr__(g, "_cum", cum)
    return cum


def _start_node(g, start, rng) -> int:
    if start is None:
        return int(rng.integers(0, g.node_count))
    if not 0 <= int(start) < g.node_count:
        raise GraphError(f"unknown start node {start}")
    return int(start)


def _run_crawl(kind, g, n, start, burn_in, seed, weighted_cum=None):
    _check_n(n)
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    rng = make_rng(seed)
    s0 = _start_node(g, start, rng)
    total = n + burn_in
    out = np.empty(total, dtype=np.int64)
    out[0] = s0
    if kind == "mhrw":
        u_rand = rng.random((total - 1, 2))
        status = _mhrw_kernel(g.indptr, g.indices, u_rand, out)
    elif kind == "wrw":
        u_rand = rng.random(total - 1)
        status = _wrw_kernel(g.indptr, g.indices, weighted_cum, u_rand, out)
    else:
        u_rand = rng.random(total - 1)
        status = _rw_kernel(g.indptr, g.indices, u_rand, out)
    if status >= 0:
        raise WalkStuckError(int(out[status]), int(status))
    stuck_start = g.degrees[s0] == 0 if kind != "wrw" else not g.node_weights[s0] > 0
    if stuck_start:
        raise WalkStuckError(s0, 0)
    return out[burn_in:]


def rw(g: WeightedGraph, n: int, start: int | None = None, burn_in: int = 0, seed=None,
       partition: CategoryPartition | None = None) -> WalkSample:
    """Simple random walk; recorded weight is deg(v)."""
    nodes = _run_crawl("rw", g, n, start, burn_in, seed)
    return _assemble(g, partition, nodes, g.degrees[nodes].astype(float), "rw", seed, burn_in)


def mhrw(g: WeightedGraph, n: int, start: int | None = None, burn_in: int = 0, seed=None,
         partition: CategoryPartition | None = None) -> WalkSample:
    """Metropolis-Hastings walk targeting the uniform distribution.

    A rejected proposal repeats the current node and counts as a visit.
    """
    nodes = _run_crawl("mhrw", g, n, start, burn_in, seed)
    return _assemble(g, partition, nodes, np.ones(n), "mhrw", seed, burn_in)


def wrw(g: WeightedGraph, n: int, start: int | None = None, burn_in: int = 0, seed=None,
        partition: CategoryPartition | None = None) -> WalkSample:
    """Weighted random walk; next hop proportional to edge weight.

    Recorded weight is the node weight w(v), the walk's unnormalized
    stationary probability.
    """
    nodes = _run_crawl("wrw", g, n, start, burn_in, seed, _cumulative_weights(g))
    return _assemble(g, partition, nodes, g.node_weights[nodes], "wrw", seed, burn_in)


def transition_probabilities(g: WeightedGraph, u: int) -> dict[int, float]:
    """WRW transition law out of ``u`` (self-loop mass counted twice)."""
    total = g.node_weights[u]
    if not total > 0:
        raise WalkStuckError(u, 0)
    probs: dict[int, float] = {}
    for s in range(g.indptr[u], g.indptr[u + 1]):
        v = int(g.indices[s])
        probs[v] = probs.get(v, 0.0) + float(g.slot_weights[s] / total)
    return probs


def exact_stationary(g: WeightedGraph, tol: float = 1e-12,
                     max_iter: int = 200_000) -> StationaryDistribution:
    """Stationary law of WRW on ``g`` by power iteration.

    Independent of the closed form: iterates pi <- pi P from the uniform
    vector until the L1 residual ``|pi P - pi|`` drops below ``tol``.
    """
    from scipy.sparse import csr_matrix

    if not is_connected(g, positive_only=True) or np.any(g.node_weights <= 0):
        raise ConvergenceError("positive-weight subgraph is disconnected")
    inv = 1.0 / g.node_weights
    rows = g.topology.slot_rows
    P = csr_matrix((g.slot_weights * inv[rows], g.indices, g.indptr),
                   shape=(g.node_count, g.node_count))
    PT = P.T.tocsr()
    pi = np.full(g.node_count, 1.0 / g.node_count)
    residual = np.inf
    for it in range(1, max_iter + 1):
        nxt = PT @ pi
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        if residual < tol:
            return StationaryDistribution(pi, it, residual)
    raise ConvergenceError(
        f"no convergence after {max_iter} iterations (residual {residual:.3g}); "
        "chain may be periodic")


def visit_frequencies(sample: WalkSample, num_nodes: int) -> np.ndarray:
    return np.bincount(sample.nodes, minlength=num_nodes) / len(sample)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
