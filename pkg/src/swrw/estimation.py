"""Re-weighted estimators over samples, and the NRMSE error metric.

All estimators read the per-visit information stored in the sample (degree,
recorded weight, neighbor categories) and never go back to the graph.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .graph import CategoryPartition
from .walkers import WalkSample


class EstimationError(ValueError):
    pass


def _values_at(sample: WalkSample, x) -> np.ndarray:
    """x(v) for every visit; ``x`` is a per-node array or a mapping."""
    if isinstance(x, Mapping):
        try:
            return np.array([x[int(v)] for v in sample.nodes], dtype=float)
        except KeyError as e:
            raise EstimationError(f"no value for sampled node {e.args[0]}") from None
    x = np.asarray(x, dtype=float)
    if len(sample) and sample.nodes.max() >= len(x):
        raise EstimationError("value array shorter than sampled node ids")
    return x[sample.nodes]


def hh_total(sample: WalkSample, x, pi) -> float:
    """Hansen-Hurwitz estimate of sum_v x(v) given normalized probabilities pi."""
    if len(sample) == 0:
        raise EstimationError("empty sample")
    p = np.asarray(pi, dtype=float)[sample.nodes]
    if np.any(p <= 0):
        raise EstimationError("zero sampling probability at a sampled node")
    return float(np.mean(_values_at(sample, x) / p))


def hh_mean(sample: WalkSample, x) -> float:
    """Population mean from recorded (unnormalized) weights.

    sum x(v)/w(v) / sum 1/w(v); a common scale factor on the weights
    cancels.
    """
    if len(sample) == 0:
        raise EstimationError("empty sample")
    w = sample.node_weights
    if np.any(w <= 0):
        raise EstimationError("zero recorded weight")
    # normalizing by the largest weight first keeps the result invariant
    # under power-of-two and most other rescalings
    inv = 1.0 / (w / w.max())
    return float(np.dot(_values_at(sample, x), inv) / inv.sum())


def category_size_fractions(sample: WalkSample, partition: CategoryPartition | None = None) -> np.ndarray:
    """Estimated f_i = |C_i|/N for every category (unseen ones get 0)."""
    if len(sample) == 0:
        raise EstimationError("empty sample")
    w = sample.node_weights
    if np.any(w <= 0):
        raise EstimationError("zero recorded weight")
    k = partition.num_categories if partition is not None else sample.num_categories
    inv = 1.0 / (w / w.max())
    mass = np.bincount(sample.categories, weights=inv, minlength=k)
    return mass / mass.sum()


def _form_for(sample: WalkSample, form: str) -> str:
    if form != "auto":
        if form not in ("uis", "wis", "rw"):
            raise EstimationError(f"unknown estimator form {form!r}")
        return form
    return {"uis": "uis", "mhrw": "uis", "rw": "rw"}.get(sample.sampler, "wis")


def volume_fraction_node(sample: WalkSample, form: str = "auto") -> np.ndarray:
    """Category volume shares from the sampled nodes themselves.

    ``uis``: sum deg 1_C / sum deg; ``wis``: the same with each term divided
    by the recorded weight; ``rw``: fraction of visits in C. ``auto`` picks
    the form matching the sampler that produced the sample.
    """
    if len(sample) == 0:
        raise EstimationError("empty sample")
    k = sample.num_categories
    form = _form_for(sample, form)
    if form == "rw":
        return np.bincount(sample.categories, minlength=k) / len(sample)
    deg = sample.degrees.astype(float)
    if form == "wis":
        deg = deg / sample.node_weights
    num = np.bincount(sample.categories, weights=deg, minlength=k)
    return num / deg.sum()


def volume_fraction_star(sample: WalkSample, form: str = "auto") -> np.ndarray:
    """Category volume shares from the neighbors of sampled nodes (star sampling)."""
    if len(sample) == 0:
        raise EstimationError("empty sample")
    if sample.neighbor_counts is None:
        raise EstimationError("sample carries no neighbor categories")
    if np.any(sample.degrees == 0):
        raise EstimationError("visit at a node of degree 0")
    counts = sample.neighbor_counts.astype(float)
    deg = sample.degrees.astype(float)
    form = _form_for(sample, form)
    if form == "rw":
        return (counts / deg[:, None]).sum(axis=0) / len(sample)
    if form == "uis":
        return counts.sum(axis=0) / deg.sum()
    w = sample.node_weights
    return (counts / w[:, None]).sum(axis=0) / (deg / w).sum()


def nrmse(estimates: Sequence[float], truth: float) -> float:
    """sqrt(mean((x_hat - x)^2)) / x."""
    est = np.asarray(estimates, dtype=float)
    if est.size == 0:
        raise EstimationError("need at least one estimate")
    if truth == 0:
        raise EstimationError("NRMSE undefined for zero truth")
    return float(np.sqrt(np.mean((est - truth) ** 2)) / abs(truth))


def nrmse_stderr(estimates: Sequence[float], truth: float) -> float:
    """Delta-method standard error of :func:`nrmse` across replications."""
    est = np.asarray(estimates, dtype=float)
    if est.size < 2:
        return float("nan")
    sq = (est - truth) ** 2
    mse = sq.mean()
    if mse == 0:
        return 0.0
    se_mse = sq.std(ddof=1) / np.sqrt(est.size)
    return float(se_mse / (2 * np.sqrt(mse) * abs(truth)))


@dataclass
class EstimateSeries:
    """Per-replication estimates of one quantity against its truth."""

    category: str
    estimates: np.ndarray
    truth: float

    @property
    def nrmse(self) -> float:
        return nrmse(self.estimates, self.truth)

    @property
    def low_confidence(self) -> bool:
        return len(self.estimates) < 2


def write_estimates(series: Sequence[EstimateSeries], path: str | Path,
                    summary_path: str | Path | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "category", "estimate", "truth"])
        for s in series:
            for r, e in enumerate(s.estimates):
                w.writerow([r, s.category, repr(float(e)), repr(float(s.truth))])
    if summary_path is not None:
        with open(summary_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["category", "n", "nrmse"])
            for s in series:
                val = s.nrmse if s.truth != 0 else float("nan")
                w.writerow([s.category, len(s.estimates), repr(val)])
