"""Synthetic graphs used by the experiments.

* ``two_community``: a tiny and a big densely, randomly wired community
  joined by a few hundred random edges; categories either follow the
  communities (``clustered``) or are scattered uniformly (``random``).
* ``toy_a``: a hub joined to two relevant categories whose nodes come in
  pairs; the walk's stay in a category is exactly geometric.
* ``toy_b``: a clique with a two-node category hanging off it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import CategoryPartition, GraphError, WeightedGraph, from_arrays, is_connected
from .walkers import derive_seed

FULL_SIZES = {"tiny": 1_000, "big": 100_000}
FULL_EDGES = {"tiny": 5_000, "big": 500_000, "inter": 500}


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "two_community"
    scale: float = 0.1
    labels: str = "random"
    irrelevant_factor: float = 0.0
    irrelevant_bridges: float = 1.0
    tiny_size: int = FULL_SIZES["tiny"]
    big_size: int = FULL_SIZES["big"]
    tiny_edges: int = FULL_EDGES["tiny"]
    big_edges: int = FULL_EDGES["big"]
    inter_edges: int = FULL_EDGES["inter"]
    category_size: int = 10
    clique_size: int = 20
    toy_tiny_size: int = 2
    attachment: tuple[tuple[int, int], ...] | None = None
    max_retries: int = 20

    def __post_init__(self):
        if self.kind not in ("two_community", "toy_a", "toy_b"):
            raise GraphError(f"unknown scenario kind {self.kind!r}")
        if not self.scale > 0:
            raise GraphError("scale must be positive")
        if self.labels not in ("random", "clustered"):
            raise GraphError("labels must be 'random' or 'clustered'")
        if self.irrelevant_factor < 0:
            raise GraphError("irrelevant_factor must be >= 0")
        if self.irrelevant_bridges < 0:
            raise GraphError("irrelevant_bridges must be >= 0")

    def scaled(self, x: int) -> int:
        return int(round(x * self.scale))


@dataclass(frozen=True, eq=False)
class Scenario:
    graph: WeightedGraph
    partition: CategoryPartition
    spec: ScenarioSpec
    seed: int
    tiny: int | None = None
    communities: np.ndarray | None = None
    slots: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def tiny_fraction(self) -> float:
        """|C_tiny| over the relevant nodes (all nodes when none is irrelevant)."""
        p = self.partition
        rel = p.relevant[p.category_of]
        return float(np.count_nonzero(p.category_of == self.tiny) / np.count_nonzero(rel))


# -- random wiring ----------------------------------------------------------

def _random_pairs(n_a: int, n_b: int | None, m: int, rng, taken: np.ndarray | None = None):
    """``m`` distinct random pairs, in draw order.

    Within one node set (``n_b is None``) pairs are unordered and loop-free;
    otherwise pairs join set A (``0..n_a-1``) to set B (``0..n_b-1``).
    Returns an ``(m, 2)`` array and the keys used.
    """
    cross = n_b is not None
    space = n_a * n_b if cross else n_a * (n_a - 1) // 2
    have = 0 if taken is None else len(taken)
    if m + have > space:
        raise GraphError(f"cannot place {m} edges: only {space - have} free node pairs")
    width = n_b if cross else n_a
    keys = np.empty(0, dtype=np.int64)
    taken = np.empty(0, dtype=np.int64) if taken is None else taken
    while len(keys) < m:
        need = m - len(keys)
        batch = int(need * 1.2) + 16
        a = rng.integers(0, n_a, size=batch)
        b = rng.integers(0, width, size=batch)
        if not cross:
            keep = a != b
            a, b = a[keep], b[keep]
            a, b = np.minimum(a, b), np.maximum(a, b)
        k = a * width + b
        _, first = np.unique(k, return_index=True)
        k = k[np.sort(first)]
        k = k[~np.isin(k, taken) & ~np.isin(k, keys)]
        keys = np.concatenate([keys, k[:need]])
    return np.stack([keys // width, keys % width], axis=1), keys


def _connected_gnm(n: int, m: int, rng) -> np.ndarray:
    """Random simple graph on ``n`` nodes with exactly ``m`` edges.

    When ``m >= n`` a random Hamiltonian cycle is laid first so that the
    result is always connected; the remaining edges are uniform.
    """
    if n < 2:
        if m:
            raise GraphError("a single node cannot carry edges")
        return np.empty((0, 2), dtype=np.int64)
    if m > n * (n - 1) // 2:
        raise GraphError(f"{m} edges do not fit on {n} nodes")
    if m < n or n < 3:
        pairs, _ = _random_pairs(n, None, m, rng)
        return pairs
    perm = rng.permutation(n)
    a, b = perm, np.roll(perm, -1)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    cycle_keys = lo * n + hi
    rest, _ = _random_pairs(n, None, m - n, rng, taken=cycle_keys)
    return np.concatenate([np.stack([lo, hi], axis=1), rest])


def gen_two_community(spec: ScenarioSpec, seed: int) -> Scenario:
    """Two randomly wired communities with unit edge weights.

    At scale 1: 1K and 100K nodes, 5K and 500K internal edges, 500 edges
    between them. A positive ``irrelevant_factor`` f appends an irrelevant
    block of f times as many nodes, wired at the same mean degree and tied to
    the relevant nodes by ``irrelevant_bridges`` random edges per relevant
    node. The relevant part is the same graph as without the block.
    """
    nt = spec.scaled(spec.tiny_size)
    nb = spec.scaled(spec.big_size)
    mt = spec.scaled(spec.tiny_edges)
    mb = spec.scaled(spec.big_edges)
    mi = spec.scaled(spec.inter_edges)
    if min(nt, nb) < 1:
        raise GraphError("scale too small: a category would be empty")
    n_rel = nt + nb
    n_irr = int(round(spec.irrelevant_factor * n_rel))
    m_irr = int(round(spec.irrelevant_factor * (mt + mb + mi)))
    n_bridge = int(round(spec.irrelevant_bridges * n_rel)) if n_irr else 0
    if n_irr and n_bridge < 1:
        raise GraphError("irrelevant block needs at least one bridge edge")

    for attempt in range(spec.max_retries):
        rng = np.random.default_rng(derive_seed(seed, 0, attempt))
        tiny_e = _connected_gnm(nt, mt, rng)
        big_e = _connected_gnm(nb, mb, rng) + nt
        inter, _ = _random_pairs(nt, nb, mi, rng)
        parts = [tiny_e, big_e, inter + np.array([0, nt])]
        if n_irr:
            # separate stream: the relevant part does not depend on the block
            irng = np.random.default_rng(derive_seed(seed, 2, attempt))
            parts.append(_connected_gnm(n_irr, m_irr, irng) + n_rel)
            bridges, _ = _random_pairs(n_rel, n_irr, n_bridge, irng)
            parts.append(bridges + np.array([0, n_rel]))
        g = from_arrays(np.concatenate(parts), num_nodes=n_rel + n_irr)
        if is_connected(g):
            break
    else:
        raise GraphError(f"no connected graph after {spec.max_retries} attempts")

    communities = np.concatenate([np.zeros(nt, dtype=np.int64), np.ones(nb, dtype=np.int64),
                                  np.full(n_irr, 2, dtype=np.int64)])
    # labels use their own stream so topology does not depend on the label mode
    lrng = np.random.default_rng(derive_seed(seed, 1))
    cat = communities.copy()
    if spec.labels == "random":
        cat[:n_rel] = 1
        cat[lrng.permutation(n_rel)[:nt]] = 0
    names = ["tiny", "big"] + (["irrelevant"] if n_irr else [])
    irr = 2 if n_irr else None
    part = CategoryPartition(cat, tuple(names), irr)
    return Scenario(g, part, spec, seed, tiny=0, communities=communities,
                    extra={"attempts": attempt + 1})


def tiny_weighted_graph(scn: Scenario, w: float) -> WeightedGraph:
    """Every edge touching the tiny category gets weight ``w``, the rest 1."""
    cat = scn.partition.category_of
    e = scn.graph.edges
    touch = (cat[e[:, 0]] == scn.tiny) | (cat[e[:, 1]] == scn.tiny)
    return scn.graph.with_edge_weights(np.where(touch, float(w), 1.0))


def tiny_node_weights(scn: Scenario, w: float) -> np.ndarray:
    """WIS node weights: ``w`` on tiny-category nodes, 1 elsewhere."""
    return np.where(scn.partition.category_of == scn.tiny, float(w), 1.0)


# -- toy graphs -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ToyGraph:
    """Toy topology plus an edge-slot label (1 or 2) per edge."""

    graph: WeightedGraph
    partition: CategoryPartition
    slots: np.ndarray
    hub: int | None = None

    def weighted(self, w1: float, w2: float) -> WeightedGraph:
        return self.graph.with_edge_weights(np.where(self.slots == 1, float(w1), float(w2)))


def gen_toy_a(category_size: int = 10, seed: int = 0) -> ToyGraph:
    """Hub (irrelevant) plus red and green categories of ``category_size`` nodes.

    Each relevant node has one partner in its own category (slot 1) and one
    edge to the hub (slot 2), so from a relevant node the walk returns to the
    hub with probability ``w2 / (w1 + w2)``.
    """
    if category_size < 2 or category_size % 2:
        raise GraphError("category_size must be an even number >= 2")
    rng = np.random.default_rng(seed)
    edges, slots = [], []
    labels = ["hub"]
    for c, name in enumerate(("red", "green")):
        base = 1 + c * category_size
        members = base + rng.permutation(category_size)
        for a, b in members.reshape(-1, 2):
            edges.append((a, b))
            slots.append(1)
        for v in range(base, base + category_size):
            edges.append((0, v))
            slots.append(2)
        labels += [name] * category_size
    g = from_arrays(np.array(edges), num_nodes=1 + 2 * category_size)
    part = CategoryPartition.from_labels(labels, irrelevant="hub")
    return ToyGraph(g, part, _slots_in_graph_order(g, edges, slots), hub=0)


def gen_toy_b(clique_size: int = 20, tiny_size: int = 2,
              attachment=None, seed: int = 0) -> ToyGraph:
    """Clique (slot 2) with a small category whose incident edges are slot 1.

    ``attachment`` lists ``(tiny_index, clique_node)`` links; by default tiny
    node i is linked to clique node i.
    """
    if clique_size < 2 or tiny_size < 2:
        raise GraphError("clique_size and tiny_size must be >= 2")
    if attachment is None:
        attachment = [(i, i % clique_size) for i in range(tiny_size)]
    edges, slots = [], []
    for a in range(clique_size):
        for b in range(a + 1, clique_size):
            edges.append((a, b))
            slots.append(2)
    for a in range(tiny_size):
        for b in range(a + 1, tiny_size):
            edges.append((clique_size + a, clique_size + b))
            slots.append(1)
    for t, c in attachment:
        if not (0 <= t < tiny_size and 0 <= c < clique_size):
            raise GraphError(f"bad attachment {(t, c)}")
        edges.append((c, clique_size + t))
        slots.append(1)
    g = from_arrays(np.array(edges), num_nodes=clique_size + tiny_size)
    part = CategoryPartition.from_labels(["big"] * clique_size + ["tiny"] * tiny_size)
    return ToyGraph(g, part, _slots_in_graph_order(g, edges, slots))


def _slots_in_graph_order(g: WeightedGraph, edges, slots) -> np.ndarray:
    n = g.node_count
    lookup = {min(a, b) * n + max(a, b): s for (a, b), s in zip(edges, slots)}
    out = np.array([lookup[int(u) * n + int(v)] for u, v in g.edges])
    out.setflags(write=False)
    return out


def toy_b_wis_ratio(toy: ToyGraph) -> float:
    """w1 / w2 at which both categories carry equal total weight."""
    cat = toy.partition.category_of
    tiny = toy.partition.index("tiny")
    e = toy.graph.edges
    ends = np.concatenate([e[:, 0], e[:, 1]])
    slot = np.concatenate([toy.slots, toy.slots])
    in_tiny = cat[ends] == tiny
    a = np.count_nonzero(in_tiny & (slot == 1))
    b = np.count_nonzero(~in_tiny & (slot == 2))
    c = np.count_nonzero(~in_tiny & (slot == 1))
    return b / (a - c)


def toy_a_exit_probability(w1: float, w2: float) -> float:
    if w1 < 0 or w2 < 0 or w1 + w2 == 0:
        raise ValueError("need nonnegative weights, not both zero")
    return w2 / (w1 + w2)


def toy_a_analytic(p: float, n_wh: int) -> tuple[float, float]:
    """Mean and variance of the red-share estimate ``n_red p / n_wh``."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]; at p = 0 the walk never leaves the hub's neighbors")
    if n_wh < 1:
        raise ValueError("n_wh must be >= 1")
    return 0.5, (3 - 2 * p) / (4 * n_wh)


def generate(spec: ScenarioSpec, seed: int):
    if spec.kind == "two_community":
        return gen_two_community(spec, seed)
    if spec.kind == "toy_a":
        return gen_toy_a(spec.category_size, seed)
    return gen_toy_b(spec.clique_size, spec.toy_tiny_size, spec.attachment, seed)
