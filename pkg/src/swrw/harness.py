"""Replicated sampling experiments: NRMSE curves, weight sweeps, gains.

Every replication draws its seed from ``derive_seed(master, ...)`` so a
report is a pure function of its inputs.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .estimation import category_size_fractions, nrmse, nrmse_stderr, volume_fraction_node, volume_fraction_star
from .graph import category_volumes
from .pipeline import PipelineError, SwrwConfig, run_swrw
from .scenarios import Scenario, tiny_node_weights, tiny_weighted_graph
from .walkers import WalkSample, WalkStuckError, derive_seed, mhrw, rw, uis, wis, wrw


@dataclass(frozen=True)
class MethodSpec:
    """A sampler plus its parameter.

    ``param`` is the tiny-category weight ``w`` for ``wis``/``wrw``; for
    ``swrw`` it overrides ``config.gamma`` when given.
    """

    kind: str
    param: float | None = None
    config: SwrwConfig | None = None
    name: str | None = None

    @property
    def label(self) -> str:
        return self.name or self.kind


@dataclass
class CurveRow:
    scenario: str
    method: str
    param: float | None
    n: int
    cost: float
    nrmse: float
    stderr: float
    reps: int
    stuck: int
    p_visited: float

    @property
    def low_confidence(self) -> bool:
        return self.reps - self.stuck < 2


@dataclass
class GainRow:
    scenario: str
    method: str
    baseline: str
    n_opt: int
    cost_opt: float
    nrmse: float
    cost_base: float | None
    alpha: float | None


@dataclass
class ExperimentReport:
    rows: list[CurveRow] = field(default_factory=list)
    gains: list[GainRow] = field(default_factory=list)
    volumes: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def curve(self, method: str, param: float | None = None) -> list[CurveRow]:
        out = [r for r in self.rows if r.method == method and (param is None or r.param == param)]
        return sorted(out, key=lambda r: r.n)

    def extend(self, other: "ExperimentReport") -> None:
        self.rows += other.rows
        self.gains += other.gains
        self.volumes += other.volumes

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        path = out / "curves.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "method", "param", "n", "nrmse", "stderr", "cost", "reps", "stuck"])
            for r in self.rows:
                w.writerow([r.scenario, r.method, _fmt(r.param), r.n, _fmt(r.nrmse),
                            _fmt(r.stderr), _fmt(r.cost), r.reps, r.stuck])
        written.append(path)
        path = out / "visits.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "method", "param", "n", "p_visited", "reps"])
            for r in self.rows:
                w.writerow([r.scenario, r.method, _fmt(r.param), r.n, _fmt(r.p_visited), r.reps])
        written.append(path)
        if self.gains:
            path = out / "gains.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["scenario", "method", "baseline", "n", "cost", "nrmse", "cost_baseline", "alpha"])
                for g in self.gains:
                    w.writerow([g.scenario, g.method, g.baseline, g.n_opt, _fmt(g.cost_opt),
                                _fmt(g.nrmse), _fmt(g.cost_base), _fmt(g.alpha)])
            written.append(path)
        if self.volumes:
            path = out / "volumes.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["scenario", "pilot_length", "estimator", "nrmse", "stderr", "reps"])
                for v in self.volumes:
                    w.writerow([v["scenario"], v["pilot_length"], v["estimator"],
                                _fmt(v["nrmse"]), _fmt(v["stderr"]), v["reps"]])
            written.append(path)
        return written


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.10g}"
    return str(x)


def scenario_name(scn: Scenario) -> str:
    s = scn.spec
    name = f"{s.kind}-{s.labels}-x{s.scale:g}"
    if s.irrelevant_factor:
        name += f"-irr{s.irrelevant_factor:g}"
    return name


# -- single runs -------------------------------------------------------------

def sample_once(scn: Scenario, method: MethodSpec, n: int, seed: int,
                _cache: dict | None = None) -> tuple[WalkSample, float]:
    """One run of ``method`` on ``scn``; returns the sample and its cost.

    With an irrelevant category, walks start at a uniformly drawn relevant
    node, as a crawl seeded inside the population of interest would.
    """
    g, p = scn.graph, scn.partition
    kind = method.kind
    start = None
    if p.irrelevant is not None:
        pool = _memo(_cache, "relevant_nodes", lambda: np.flatnonzero(p.relevant[p.category_of]))
        start = int(pool[np.random.default_rng(derive_seed(seed, 7)).integers(len(pool))])
    if kind == "uis":
        return uis(g, n, seed=seed, partition=p), n
    if kind == "rw":
        return rw(g, n, start=start, seed=seed, partition=p), n
    if kind == "mhrw":
        return mhrw(g, n, start=start, seed=seed, partition=p), n
    w = 1.0 if method.param is None else method.param
    if kind == "wis":
        z = _memo(_cache, ("z", w), lambda: tiny_node_weights(scn, w))
        return wis(g, n, z, seed=seed, partition=p), n
    if kind == "wrw":
        gw = _memo(_cache, ("g", w), lambda: tiny_weighted_graph(scn, w))
        return wrw(gw, n, start=start, seed=seed, partition=p), n
    if kind == "swrw":
        cfg = method.config or SwrwConfig()
        if method.param is not None:
            cfg = replace(cfg, gamma=float(method.param))
        if p.irrelevant is None and cfg.f_irrelevant:
            cfg = replace(cfg, f_irrelevant=0.0)
        run = run_swrw(g, p, cfg, n, seed=seed, start=start)
        return run.sample, run.cost
    raise ValueError(f"unknown method {kind!r}")


def _memo(cache, key, make):
    if cache is None:
        return make()
    if key not in cache:
        cache[key] = make()
    return cache[key]


def tiny_size_estimate(sample: WalkSample, scn: Scenario) -> float:
    """Estimated share of the tiny category among relevant nodes."""
    f = category_size_fractions(sample, scn.partition)
    rel = f[scn.partition.relevant].sum()
    return float(f[scn.tiny] / rel) if rel > 0 else 0.0


def run_replications(scn: Scenario, methods: Sequence[MethodSpec], n_grid: Sequence[int],
                     reps: int, master_seed: int, exclude_stuck: bool = False,
                     estimator: Callable[[WalkSample, Scenario], float] = tiny_size_estimate,
                     truth: float | None = None, stream: int = 0) -> ExperimentReport:
    """NRMSE of the tiny-category size estimate for every (method, n).

    Runs are independent across replications and grid points. A stuck run
    (or an S-WRW pilot that saw no relevant volume) contributes an estimate
    of 0 unless ``exclude_stuck`` is set.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if truth is None:
        truth = scn.tiny_fraction
    name = scenario_name(scn)
    report = ExperimentReport()
    for mi, method in enumerate(methods):
        cache: dict = {}
        for ni, n in enumerate(n_grid):
            est, costs, visited, stuck = [], [], 0, 0
            for r in range(reps):
                seed = derive_seed(master_seed, stream, mi, ni, r)
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        sample, cost = sample_once(scn, method, int(n), seed, cache)
                except (WalkStuckError, PipelineError):
                    stuck += 1
                    if not exclude_stuck:
                        est.append(0.0)
                    continue
                est.append(estimator(sample, scn))
                costs.append(cost)
                visited += bool(np.any(sample.categories == scn.tiny))
            done = reps - stuck
            report.rows.append(CurveRow(
                scenario=name, method=method.label, param=method.param, n=int(n),
                cost=float(np.mean(costs)) if costs else float(n),
                nrmse=nrmse(est, truth) if est else float("nan"),
                stderr=nrmse_stderr(est, truth) if est else float("nan"),
                reps=reps, stuck=stuck,
                p_visited=visited / done if done else 0.0,
            ))
    report.config.update({"scenario": name, "reps": reps, "seed": master_seed})
    return report


@dataclass
class WeightSweep:
    rows: list[CurveRow]

    @property
    def weights(self) -> np.ndarray:
        return np.array([r.param for r in self.rows])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.nrmse for r in self.rows])

    @property
    def argmin(self) -> float:
        return float(self.weights[int(np.nanargmin(self.errors))])


def error_vs_weight_sweep(scn: Scenario, w_grid: Sequence[float], n: int, reps: int,
                          seed: int, sampler: str = "wrw") -> WeightSweep:
    """NRMSE of the tiny size estimate at fixed ``n`` for each weight ``w``."""
    methods = [MethodSpec(sampler, float(w)) for w in w_grid]
    rep = run_replications(scn, methods, [n], reps, seed, stream=1)
    return WeightSweep(rep.rows)


def volume_estimator_errors(scn: Scenario, pilot_lengths: Sequence[int], reps: int,
                            seed: int) -> list[dict]:
    """NRMSE of the tiny-category volume share: star vs node estimator on
    the same pilot RW traces."""
    vols = category_volumes(scn.graph, scn.partition)
    truth = vols[scn.tiny] / vols.sum()
    name = scenario_name(scn)
    out = []
    for li, n in enumerate(pilot_lengths):
        star, node = [], []
        for r in range(reps):
            s = rw(scn.graph, int(n), seed=derive_seed(seed, 2, li, r), partition=scn.partition)
            star.append(volume_fraction_star(s, "rw")[scn.tiny])
            node.append(volume_fraction_node(s, "rw")[scn.tiny])
        for label, est in (("star", star), ("node", node)):
            out.append({"scenario": name, "pilot_length": int(n), "estimator": label,
                        "nrmse": nrmse(est, truth), "stderr": nrmse_stderr(est, truth),
                        "reps": reps})
    return out


# -- gains -------------------------------------------------------------------

def _interp_cost(target: float, costs: np.ndarray, errs: np.ndarray) -> float | None:
    """Baseline cost reaching NRMSE ``target``; log-log interpolation between
    the first bracketing pair of grid points."""
    exact = np.flatnonzero(errs == target)
    if len(exact):
        return float(costs[exact[0]])
    for i in range(len(costs) - 1):
        e0, e1 = errs[i], errs[i + 1]
        if not (np.isfinite(e0) and np.isfinite(e1)) or e0 <= 0 or e1 <= 0:
            continue
        if min(e0, e1) <= target <= max(e0, e1):
            t = (math.log(target) - math.log(e0)) / (math.log(e1) - math.log(e0))
            return float(math.exp(math.log(costs[i]) + t * (math.log(costs[i + 1]) - math.log(costs[i]))))
    return None


def measure_gain(opt: Sequence[CurveRow], base: Sequence[CurveRow]) -> list[GainRow]:
    """For each point of the optimized curve, the baseline cost reaching the
    same NRMSE divided by the optimized cost (None when out of range)."""
    base = sorted(base, key=lambda r: r.cost)
    costs = np.array([r.cost for r in base], dtype=float)
    errs = np.array([r.nrmse for r in base], dtype=float)
    out = []
    for r in sorted(opt, key=lambda r: r.cost):
        cb = _interp_cost(r.nrmse, costs, errs) if np.isfinite(r.nrmse) else None
        out.append(GainRow(r.scenario, r.method, base[0].method if base else "", r.n, r.cost,
                           r.nrmse, cb, None if cb is None else cb / r.cost))
    return out


def mean_gain(gains: Sequence[GainRow]) -> float:
    """Geometric mean of the defined gains."""
    vals = [g.alpha for g in gains if g.alpha is not None]
    if not vals:
        return float("nan")
    return float(np.exp(np.mean(np.log(vals))))
