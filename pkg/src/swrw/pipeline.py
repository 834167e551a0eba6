"""Stratified weighted random walk: from a measurement objective to edge weights.

Stages, in order:

1. a short pilot RW estimates category volume shares (star estimator);
2. an allocation objective gives per-category weights (optimal under WIS);
3. the irrelevant category receives a small share of that mass;
4. estimated volumes are clamped from below by ``max / gamma``;
5. per-category edge targets ``weight / volume`` are written onto edges,
   with a rule for edges whose endpoints disagree;

after which a WRW is run on the re-weighted graph.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import stratification as strat
from .estimation import category_size_fractions, volume_fraction_star
from .graph import CategoryPartition, GraphError, WeightedGraph
from .walkers import WalkSample, derive_seed, rw, wrw

CONFLICT_RULES = ("arithmetic", "geometric", "max", "hybrid")
DEFAULT_PILOT_FRACTION = 0.065


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class SwrwConfig:
    f_irrelevant: float = 0.01
    gamma: float = 100.0
    conflict: str = "hybrid"
    pilot_length: int | None = None
    pilot_fraction: float = DEFAULT_PILOT_FRACTION
    objective: str = "sizes"
    sigmas: tuple[float, ...] | None = None
    sizes: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0 <= self.f_irrelevant < 1:
            raise PipelineError("f_irrelevant must lie in [0, 1)")
        if not self.gamma >= 1:
            raise PipelineError("gamma must be >= 1")
        if self.conflict not in CONFLICT_RULES:
            raise PipelineError(f"conflict must be one of {CONFLICT_RULES}")
        if self.pilot_length is not None and self.pilot_length < 1:
            raise PipelineError("pilot_length must be >= 1")
        if not 0 < self.pilot_fraction:
            raise PipelineError("pilot_fraction must be positive")
        if self.objective not in strat.OBJECTIVES:
            raise PipelineError(f"objective must be one of {strat.OBJECTIVES}")

    def pilot_for(self, n: int) -> int:
        if self.pilot_length is not None:
            return int(self.pilot_length)
        return max(1, int(round(self.pilot_fraction * n)))

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "SwrwConfig":
        """Build from flat string settings (config file or CLI)."""
        kw = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if raw is None:
                continue
            if key == "f_irrelevant":
                kw[key] = float(raw)
            elif key == "gamma":
                kw[key] = float(raw)
            elif key in ("conflict", "objective"):
                kw[key] = str(raw)
            elif key in ("pilot_len", "pilot_length"):
                kw["pilot_length"] = int(raw)
            elif key == "pilot_fraction":
                kw[key] = float(raw)
            elif key in ("sigmas", "sizes"):
                kw[key] = tuple(float(x) for x in str(raw).split(","))
        return cls(**kw)


@dataclass(frozen=True)
class EdgeWeightPlan:
    labels: tuple[str, ...]
    irrelevant: int | None
    vol_hat: np.ndarray
    vol_tilde: np.ndarray
    vol_min: float
    w_wis: np.ndarray
    w_tilde: np.ndarray
    w_edge: np.ndarray
    conflict: str
    gamma: float
    f_irrelevant: float

    def category_shares(self) -> np.ndarray:
        """Intended category weight shares (the ``w_tilde`` vector normalized)."""
        return self.w_tilde / self.w_tilde.sum()

    def apply(self, g: WeightedGraph, partition: CategoryPartition) -> WeightedGraph:
        return resolve_conflicts(g, partition, self.w_edge, self.conflict)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            irr = self.labels[self.irrelevant] if self.irrelevant is not None else ""
            fh.write(f"# gamma={float(self.gamma)!r} f_irrelevant={float(self.f_irrelevant)!r} "
                     f"conflict={self.conflict} vol_min={float(self.vol_min)!r} irrelevant={irr}\n")
            w = csv.writer(fh)
            w.writerow(["category", "vol_hat", "vol_tilde", "w_wis", "w_tilde", "w_edge"])
            for i, lab in enumerate(self.labels):
                w.writerow([lab] + [repr(float(a[i])) for a in
                                    (self.vol_hat, self.vol_tilde, self.w_wis, self.w_tilde, self.w_edge)])


# -- stages -----------------------------------------------------------------

def pilot_volumes(g: WeightedGraph, partition: CategoryPartition, pilot_length: int,
                  seed=None, start: int | None = None) -> np.ndarray:
    """Volume shares per category from a pilot RW; unseen categories get 0."""
    return _pilot(g, partition, pilot_length, seed, start)[0]


def _pilot(g, partition, pilot_length, seed, start):
    sample = rw(g, pilot_length, start=start, seed=seed, partition=partition)
    return volume_fraction_star(sample, form="rw"), sample


def category_wis_weights(plan: strat.AllocationPlan, irrelevant: int | None = None) -> np.ndarray:
    """w_WIS(C_i) = n_i; the irrelevant category is zeroed."""
    w = plan.weights
    if irrelevant is not None:
        w[irrelevant] = 0.0
    return w


def inject_irrelevant_mass(weights: Sequence[float], irrelevant: int | None,
                           f_irrelevant: float) -> np.ndarray:
    """Give the irrelevant category ``f_irrelevant`` times the relevant mass."""
    w = np.array(weights, dtype=float)
    if not 0 <= f_irrelevant < 1:
        raise PipelineError("f_irrelevant must lie in [0, 1)")
    if irrelevant is None:
        if f_irrelevant > 0:
            warnings.warn("f_irrelevant > 0 but there is no irrelevant category; ignored",
                          stacklevel=2)
        return w
    rel = np.ones(len(w), dtype=bool)
    rel[irrelevant] = False
    w[irrelevant] = f_irrelevant * w[rel].sum()
    return w


def clamp_volumes(vol_estimates: Sequence[float], gamma: float,
                  irrelevant: int | None = None) -> tuple[np.ndarray, float]:
    """Raise every volume to at least ``max_relevant / gamma``.

    Returns the clamped volumes and that floor.
    """
    if not gamma >= 1:
        raise PipelineError("gamma must be >= 1")
    v = np.asarray(vol_estimates, dtype=float)
    rel = np.ones(len(v), dtype=bool)
    if irrelevant is not None:
        rel[irrelevant] = False
    top = v[rel].max() if rel.any() else 0.0
    if not top > 0:
        raise PipelineError("no relevant category volume observed; pilot too short")
    vol_min = top / gamma
    return np.maximum(v, vol_min), float(vol_min)


def target_edge_weights(w_tilde: Sequence[float], vol_tilde: Sequence[float]) -> np.ndarray:
    """Per-category edge target ``w_tilde / vol_tilde``, scaled so the largest is 1."""
    w = np.asarray(w_tilde, dtype=float)
    v = np.asarray(vol_tilde, dtype=float)
    if np.any(v <= 0):
        raise PipelineError("clamped volumes must be positive")
    e = w / v
    top = e.max()
    if not top > 0:
        raise PipelineError("all target edge weights are zero")
    return e / top


def _combine(a: np.ndarray, b: np.ndarray, rule: str) -> np.ndarray:
    if rule == "arithmetic":
        return 0.5 * (a + b)
    if rule == "geometric":
        return np.sqrt(a * b)
    if rule == "max":
        return np.maximum(a, b)
    raise PipelineError(f"unknown conflict rule {rule!r}")


def resolve_conflicts(g: WeightedGraph, partition: CategoryPartition,
                      w_edge: Sequence[float], rule: str = "hybrid") -> WeightedGraph:
    """Copy of ``g`` with edge weights set from per-category targets.

    Intra-category edges take their category's target. Inter-category edges
    take the arithmetic mean, geometric mean or max of the two targets;
    ``hybrid`` uses the geometric mean when an endpoint is irrelevant and the
    max otherwise.
    """
    if rule not in CONFLICT_RULES:
        raise PipelineError(f"unknown conflict rule {rule!r}")
    we = np.asarray(w_edge, dtype=float)
    cu = partition.category_of[g.edges[:, 0]]
    cv = partition.category_of[g.edges[:, 1]]
    a, b = we[cu], we[cv]
    if rule == "hybrid":
        irr = partition.irrelevant
        touches = (cu == irr) | (cv == irr) if irr is not None else np.zeros(len(cu), dtype=bool)
        mixed = np.where(touches, _combine(a, b, "geometric"), _combine(a, b, "max"))
    else:
        mixed = _combine(a, b, rule)
    return g.with_edge_weights(np.where(cu == cv, a, mixed))


def build_plan(vol_hat: np.ndarray, partition: CategoryPartition, config: SwrwConfig,
               size_estimates: np.ndarray | None = None) -> EdgeWeightPlan:
    """Steps 2-5 given pilot volume shares."""
    k = partition.num_categories
    irr = partition.irrelevant
    if config.sizes is not None:
        sizes = np.asarray(config.sizes, dtype=float)
    elif size_estimates is not None:
        sizes = np.asarray(size_estimates, dtype=float).copy()
        # unseen categories borrow the smallest observed size
        pos = sizes[sizes > 0]
        sizes[sizes <= 0] = pos.min() if len(pos) else 1.0
    else:
        sizes = np.ones(k)
    spec = strat.StratumSpec(sizes, n=1.0, sigmas=config.sigmas,
                             relevant=partition.relevant, labels=partition.labels)
    alloc = strat.allocate(spec, config.objective)
    w_wis = category_wis_weights(alloc, irr)
    w_tilde = inject_irrelevant_mass(w_wis, irr, config.f_irrelevant)
    vol_tilde, vol_min = clamp_volumes(vol_hat, config.gamma, irr)
    w_edge = target_edge_weights(w_tilde, vol_tilde)
    return EdgeWeightPlan(partition.labels, irr, np.asarray(vol_hat, dtype=float), vol_tilde,
                          vol_min, w_wis, w_tilde, w_edge, config.conflict, config.gamma,
                          config.f_irrelevant)


@dataclass
class SwrwRun:
    sample: WalkSample
    plan: EdgeWeightPlan
    graph: WeightedGraph
    pilot: WalkSample
    diagnostics: dict = field(default_factory=dict)

    @property
    def cost(self) -> int:
        """Total visits spent, pilot included."""
        return len(self.sample) + len(self.pilot)


def run_swrw(g: WeightedGraph, partition: CategoryPartition, config: SwrwConfig, n: int,
             seed=None, start: int | None = None) -> SwrwRun:
    """Pilot RW, weight plan, then a WRW of length ``n`` on the re-weighted graph.

    The main walk continues from the pilot's last node. Visits record the
    achieved node weights of the re-weighted graph.
    """
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
    pilot_len = config.pilot_for(n)
    vol_hat, pilot = _pilot(g, partition, pilot_len, derive_seed(seed, 0), start)
    plan = build_plan(vol_hat, partition, config, category_size_fractions(pilot, partition))
    weighted = plan.apply(g, partition)
    begin = int(pilot.nodes[-1])
    diag = confinement_diagnostics(weighted, partition, begin)
    if diag["confined"]:
        warnings.warn(f"re-weighted walk is confined to {diag['reachable_fraction']:.3g} "
                      "of the graph; estimates will not converge", stacklevel=2)
    sample = wrw(weighted, n, start=begin, seed=derive_seed(seed, 1), partition=partition)
    sample = replace(sample, sampler="swrw", seed=seed,
                     meta={"pilot_length": pilot_len, "gamma": config.gamma,
                           "f_irrelevant": config.f_irrelevant, "conflict": config.conflict})
    diag["categories_visited_fraction"] = (
        len(np.unique(sample.categories)) / max(1, int(np.count_nonzero(vol_hat > 0))))
    return SwrwRun(sample, plan, weighted, pilot, diag)


def confinement_diagnostics(g: WeightedGraph, partition: CategoryPartition, start: int) -> dict:
    """How much of the graph a WRW from ``start`` can reach through positive weights."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    mat = csr_matrix((np.array(g.slot_weights), g.indices.copy(), g.indptr.copy()),
                     shape=(g.node_count,) * 2)
    mat.eliminate_zeros()
    _, comp = connected_components(mat, directed=False)
    reach = comp == comp[start]
    cats = np.unique(partition.category_of[reach])
    rel = partition.relevant
    return {
        "reachable_fraction": float(reach.mean()),
        "reachable_relevant_categories": int(np.count_nonzero(rel[cats])),
        "relevant_categories": int(np.count_nonzero(rel)),
        "confined": bool(not reach.all()),
    }


def arbitrary_node_weights(g: WeightedGraph, targets: Sequence[float]) -> WeightedGraph:
    """Edge weights realizing any positive node weights on a graph with a
    self-loop at every node.

    Non-loop edges get ``w_min / N``; the loop at v absorbs the rest, halved
    because a loop counts twice in w(v).
    """
    t = np.asarray(targets, dtype=float)
    n = g.node_count
    if t.shape != (n,):
        raise GraphError("need one target weight per node")
    if np.any(~(t > 0)):
        raise GraphError("target node weights must be positive")
    loops = g.edges[:, 0] == g.edges[:, 1]
    has_loop = np.zeros(n, dtype=bool)
    has_loop[g.edges[loops, 0]] = True
    if not has_loop.all():
        raise GraphError(f"node {int(np.flatnonzero(~has_loop)[0])} has no self-loop")
    base = t.min() / n
    ew = np.full(g.edge_count, base)
    v = g.edges[loops, 0]
    ew[loops] = 0.5 * (t[v] - base * (g.degrees[v] - 2))
    return g.with_edge_weights(ew)
