"""Stratified allocation: proportional, optimal allocations and their gains.

Allocations are real-valued (samples per category *in expectation*); the
category weight used by a weighted sampler is the allocation itself, up to a
constant factor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

OBJECTIVES = ("proportional", "mean", "max", "sum", "sizes")


class AllocationError(ValueError):
    pass


@dataclass(frozen=True)
class StratumSpec:
    """Category sizes, optional standard deviations, relevance flags, budget n.

    Unknown ``sigmas`` default to 1 for every category.
    """

    sizes: np.ndarray
    n: float = 1.0
    sigmas: np.ndarray | None = None
    relevant: np.ndarray | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=float)
        if sizes.ndim != 1 or len(sizes) == 0:
            raise AllocationError("need at least one category")
        if np.any(sizes <= 0):
            raise AllocationError("category sizes must be positive")
        sig = np.ones_like(sizes) if self.sigmas is None else np.asarray(self.sigmas, dtype=float)
        if sig.shape != sizes.shape or np.any(sig < 0):
            raise AllocationError("need one nonnegative sigma per category")
        rel = np.ones(len(sizes), dtype=bool) if self.relevant is None else np.asarray(self.relevant, dtype=bool)
        if rel.shape != sizes.shape:
            raise AllocationError("need one relevance flag per category")
        if self.n < 0:
            raise AllocationError("budget must be nonnegative")
        labels = self.labels or tuple(str(i) for i in range(len(sizes)))
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "sigmas", sig)
        object.__setattr__(self, "relevant", rel)
        object.__setattr__(self, "labels", tuple(labels))

    @classmethod
    def with_irrelevant(cls, sizes, irrelevant: int | None, **kw) -> "StratumSpec":
        rel = np.ones(len(sizes), dtype=bool)
        if irrelevant is not None:
            rel[irrelevant] = False
        return cls(np.asarray(sizes), relevant=rel, **kw)

    @property
    def population(self) -> float:
        return float(self.sizes.sum())


@dataclass(frozen=True)
class AllocationPlan:
    allocation: np.ndarray
    objective: str
    spec: StratumSpec = field(repr=False)

    @property
    def weights(self) -> np.ndarray:
        """Category weights for a weighted sampler: proportional to n_i."""
        return self.allocation.copy()

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["category", "size", "sigma", "n_i", "weight"])
            for i, lab in enumerate(self.spec.labels):
                w.writerow([lab, repr(float(self.spec.sizes[i])), repr(float(self.spec.sigmas[i])),
                            repr(float(self.allocation[i])), repr(float(self.allocation[i]))])


def _spread(spec: StratumSpec, score: np.ndarray, objective: str) -> AllocationPlan:
    """Allocate n proportionally to ``score`` over relevant categories."""
    score = np.where(spec.relevant, score, 0.0)
    total = score.sum()
    if not total > 0:
        raise AllocationError(f"degenerate {objective} allocation: all scores are zero")
    return AllocationPlan(score / total * spec.n, objective, spec)


def proportional(spec: StratumSpec) -> AllocationPlan:
    """n_i = |C_i| n / N over all categories, irrelevant ones included."""
    return AllocationPlan(spec.sizes / spec.population * spec.n, "proportional", spec)


def neyman(spec: StratumSpec) -> AllocationPlan:
    """Minimizes the variance of the population-mean estimate."""
    return _spread(spec, spec.sizes * spec.sigmas, "mean")


def max_precision(spec: StratumSpec) -> AllocationPlan:
    """Equalizes sigma_i^2 / n_i across categories."""
    _need_comparison(spec)
    return _spread(spec, spec.sigmas ** 2, "max")


def sum_variances(spec: StratumSpec) -> AllocationPlan:
    """Minimizes sum_i sigma_i^2 / n_i."""
    _need_comparison(spec)
    return _spread(spec, spec.sigmas.copy(), "sum")


def relative_sizes(spec: StratumSpec) -> AllocationPlan:
    """Equal split across relevant categories (category-size estimation)."""
    _need_comparison(spec)
    return _spread(spec, np.ones_like(spec.sizes), "sizes")


def _need_comparison(spec: StratumSpec) -> None:
    if int(spec.relevant.sum()) < 2:
        raise AllocationError("need at least two relevant categories to compare")


_ALLOCATORS = {
    "proportional": proportional,
    "mean": neyman,
    "max": max_precision,
    "sum": sum_variances,
    "sizes": relative_sizes,
}


def allocate(spec: StratumSpec, objective: str) -> AllocationPlan:
    try:
        fn = _ALLOCATORS[objective]
    except KeyError:
        raise AllocationError(f"unknown objective {objective!r}; choose from {OBJECTIVES}") from None
    return fn(spec)


# -- objective values ------------------------------------------------------

def objective_value(spec: StratumSpec, allocation: Sequence[float], objective: str) -> float:
    """Variance criterion that ``objective`` minimizes, evaluated at ``allocation``.

    Only relevant categories enter; ``sizes`` uses the two-category WIS
    variance of f_1 from :func:`wis_two_category_variance`.
    """
    n = np.asarray(allocation, dtype=float)[spec.relevant]
    sizes = spec.sizes[spec.relevant]
    sig = spec.sigmas[spec.relevant]
    with np.errstate(divide="ignore"):
        if objective == "mean":
            big_n = sizes.sum()
            return float(np.sum(sizes ** 2 * sig ** 2 / n) / big_n ** 2)
        if objective == "max":
            return float(np.max(sig ** 2 / n))
        if objective == "sum":
            return float(np.sum(sig ** 2 / n))
        if objective == "sizes":
            if len(sizes) != 2:
                raise AllocationError("sizes objective is defined for two categories")
            f = sizes / sizes.sum()
            total = n.sum()
            # weights proportional to per-node sampling rate n_i / |C_i|
            w1, w2 = n[0] / sizes[0], n[1] / sizes[1]
            if w1 <= 0 or w2 <= 0:
                return float("inf")
            return wis_two_category_variance(f[0], total, w1, w2)
    raise AllocationError(f"objective {objective!r} has no variance criterion")


# -- gains -------------------------------------------------------------------

def gain(spec: StratumSpec, objective: str) -> float:
    """Factor by which proportional/uniform sampling must be longer to match
    the optimal allocation's variance, within the relevant categories."""
    sizes = spec.sizes[spec.relevant]
    sig = spec.sigmas[spec.relevant]
    if len(sizes) == 0:
        raise AllocationError("no relevant categories")
    big_n = sizes.sum()
    if objective == "mean":
        denom = np.sum(sizes * sig) ** 2
        if denom == 0:
            raise AllocationError("all sigmas are zero")
        return float(big_n * np.sum(sizes * sig ** 2) / denom)
    if objective == "max":
        denom = np.sum(sig ** 2)
        if denom == 0:
            raise AllocationError("all sigmas are zero")
        return float(np.max(big_n / sizes * sig ** 2) / denom)
    if objective == "sum":
        denom = np.sum(sig) ** 2
        if denom == 0:
            raise AllocationError("all sigmas are zero")
        return float(np.sum(big_n / sizes * sig ** 2) / denom)
    if objective == "sizes":
        if len(sizes) != 2:
            raise AllocationError("sizes gain is defined for exactly two relevant categories")
        return float(big_n ** 2 / (4 * sizes[0] * sizes[1]))
    raise AllocationError(f"unknown objective {objective!r}")


def gain_with_irrelevant(spec: StratumSpec, objective: str) -> float:
    """Gain including the factor N / (N - |C_irrelevant|) from skipping irrelevant nodes."""
    total = spec.population
    useful = spec.sizes[spec.relevant].sum()
    if useful <= 0:
        raise AllocationError("irrelevant category covers every node")
    return float(total / useful * gain(spec, objective))


# -- two-category WIS size estimation ----------------------------------------

def wis_two_category_estimate(x1: float, n: float, w1: float, w2: float) -> float:
    """f_1 estimate from X_1 draws in C_1 out of n, node weights w1 / w2."""
    if w1 <= 0 or w2 <= 0:
        raise AllocationError("weights must be positive")
    if not 0 <= x1 <= n:
        raise AllocationError("need 0 <= X1 <= n")
    denom = x1 * (w2 - w1) + n * w1
    if denom == 0:
        raise AllocationError("estimator denominator is zero")
    return x1 * w2 / denom


def wis_two_category_variance(f1: float, n: float, w1: float, w2: float) -> float:
    """First-order (delta method) variance of :func:`wis_two_category_estimate`."""
    f2 = 1.0 - f1
    return f1 * f2 / (n * w1 * w2) * (f1 * w1 + f2 * w2) ** 2


def wis_two_category_estimator(x1: float, n: float, w1: float, w2: float,
                               f1: float | None = None) -> tuple[float, float]:
    """Estimate and its approximate variance.

    The variance uses the true ``f1`` when given, otherwise the estimate
    itself is plugged in.
    """
    est = wis_two_category_estimate(x1, n, w1, w2)
    return est, wis_two_category_variance(est if f1 is None else f1, n, w1, w2)
