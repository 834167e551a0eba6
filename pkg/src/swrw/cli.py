"""Command-line entry point: ``swrw {generate,sample,estimate,experiment}``.

Settings come from a flat ``key=value`` file (``--config``) overridden by
flags. Every command writes ``manifest.txt`` next to its outputs; passing
that file back through ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .estimation import (EstimationError, category_size_fractions, hh_mean,
                         volume_fraction_node, volume_fraction_star)
from .graph import (CategoryPartition, GraphError, WeightedGraph, category_volumes,
                    read_categories, read_edge_list, write_categories, write_edge_list)
from .harness import (ExperimentReport, MethodSpec, error_vs_weight_sweep, measure_gain,
                      run_replications, scenario_name, volume_estimator_errors)
from .pipeline import PipelineError, SwrwConfig, run_swrw
from .scenarios import ScenarioSpec, ToyGraph, generate, tiny_node_weights, tiny_weighted_graph
from .walkers import SAMPLERS, WalkSample, WalkStuckError, mhrw, rw, uis, wis, wrw

ESTIMATORS = ("mean", "sizes", "vol_node", "vol_star")
PRESETS = ("figure5", "gain", "sweep", "volume")

# flag name -> help; every flag is a string here and typed on use, so a
# config file and the command line go through the same path
OPTIONS = {
    "graph": "edge-list file",
    "categories": "category file ('node label' lines)",
    "irrelevant": "label(s) of the irrelevant category, comma separated",
    "out": "output directory",
    "seed": "master seed",
    "n": "sample length, or a comma-separated grid for experiments",
    "reps": "replications per grid point",
    "method": f"sampler: {', '.join(SAMPLERS)}",
    "w": "tiny-category weight for wis/wrw on a generated scenario",
    "weights": "node-weight file ('node weight' lines) for wis",
    "start": "start node id for walks",
    "burn_in": "visits discarded before recording",
    "gamma": "S-WRW maximal resolution",
    "f_irrelevant": "S-WRW share of visits kept for the irrelevant category",
    "conflict": "S-WRW conflict rule: arithmetic, geometric, max or hybrid",
    "pilot_len": "S-WRW pilot walk length (default: 6.5%% of n)",
    "objective": "allocation objective: proportional, mean, max, sum or sizes",
    "scenario": "generator: two_community, toy_a or toy_b",
    "scale": "two_community size factor",
    "labels": "two_community labelling: random or clustered",
    "irrelevant_factor": "two_community irrelevant block size, relative to the relevant nodes",
    "category_size": "toy_a nodes per relevant category",
    "clique_size": "toy_b clique size",
    "tiny_size": "toy_b tiny category size",
    "w1": "toy slot-1 edge weight",
    "w2": "toy slot-2 edge weight",
    "trace": "trace CSV written by 'sample'",
    "estimator": f"estimator: {', '.join(ESTIMATORS)}",
    "values": "per-node values ('node x' lines) for the mean estimator",
    "preset": f"experiment preset: {', '.join(PRESETS)}",
    "baseline": "baseline sampler for the gain preset",
    "base_n": "baseline n grid for the gain preset",
    "w_grid": "weights for the sweep and figure5 presets",
    "pilot_grid": "pilot lengths for the volume and figure5 presets",
    "exclude_stuck": "drop stuck runs from NRMSE (true/false)",
}

# enumerated flags; config-file values are checked where they are used
CHOICES = {
    "method": SAMPLERS,
    "baseline": SAMPLERS,
    "conflict": ("arithmetic", "geometric", "max", "hybrid"),
    "scenario": ("two_community", "toy_a", "toy_b"),
    "labels": ("random", "clustered"),
    "estimator": ESTIMATORS,
    "preset": PRESETS,
}

COMMANDS = {
    "generate": "write a synthetic graph and its categories",
    "sample": "run one sampler and write its trace",
    "estimate": "estimate quantities from a trace",
    "experiment": "replicated NRMSE experiments",
}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # keep argparse diagnostics to a single line
        self.exit(2, f"swrw: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="swrw", description="Stratified weighted random walk sampling.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key=value settings file (a manifest works)")
        for key, h in OPTIONS.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=h,
                           choices=CHOICES.get(key))
    return parser


# -- settings ----------------------------------------------------------------

def read_config(path: str | Path) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise CliError(f"cannot read config {path}: {e.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


class Settings:
    """Merged string settings with typed accessors; remembers what was read."""

    def __init__(self, command: str, values: dict[str, str]):
        self.command = command
        self.values = {k: v for k, v in values.items() if v not in (None, "")}
        self.used: dict[str, str] = {}

    def _raw(self, key, default=None):
        if key in self.values:
            self.used[key] = self.values[key]
            return self.values[key]
        if default is not None:
            self.used[key] = str(default)
        return default

    def has(self, key) -> bool:
        return key in self.values

    def str(self, key, default=None):
        v = self._raw(key, default)
        return None if v is None else str(v)

    def require(self, key, why=""):
        v = self._raw(key)
        if v is None:
            raise CliError(f"--{key.replace('_', '-')} is required{why}")
        return str(v)

    def int(self, key, default=None):
        v = self._raw(key, default)
        return None if v is None else _parse(int, key, v)

    def float(self, key, default=None):
        v = self._raw(key, default)
        return None if v is None else _parse(float, key, v)

    def ints(self, key, default=None):
        v = self._raw(key, default)
        return None if v is None else [_parse(int, key, x) for x in str(v).split(",")]

    def floats(self, key, default=None):
        v = self._raw(key, default)
        return None if v is None else [_parse(float, key, x) for x in str(v).split(",")]

    def bool(self, key, default=False):
        v = self._raw(key, "true" if default else "false")
        if str(v).lower() in ("1", "true", "yes"):
            return True
        if str(v).lower() in ("0", "false", "no"):
            return False
        raise CliError(f"{key}: expected true or false, got {v!r}")

    def seed(self) -> int:
        if not self.has("seed"):
            raise CliError("--seed is required for this command")
        return self.int("seed")

    def write_manifest(self, out: Path) -> Path:
        path = out / "manifest.txt"
        lines = [f"command={self.command}"] + [f"{k}={self.used[k]}" for k in sorted(self.used)]
        path.write_text("\n".join(lines) + "\n")
        return path


def _parse(kind, key, v):
    try:
        return kind(v)
    except (TypeError, ValueError):
        raise CliError(f"{key}: cannot read {v!r} as {kind.__name__}") from None


def _out_dir(s: Settings) -> Path:
    out = Path(s.require("out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CliError(f"cannot create output directory {out}: {e.strerror}") from None
    return out


# -- graph sources -------------------------------------------------------------

def _scenario_spec(s: Settings) -> ScenarioSpec:
    kind = s.str("scenario")
    if kind == "two_community":
        return ScenarioSpec(kind=kind, scale=s.float("scale", 0.1), labels=s.str("labels", "random"),
                            irrelevant_factor=s.float("irrelevant_factor", 0.0))
    if kind == "toy_a":
        return ScenarioSpec(kind=kind, category_size=s.int("category_size", 10))
    if kind == "toy_b":
        return ScenarioSpec(kind=kind, clique_size=s.int("clique_size", 20),
                            toy_tiny_size=s.int("tiny_size", 2))
    raise CliError(f"unknown scenario {kind!r}")


def _generated(s: Settings):
    """Scenario or toy graph from the generator settings; toy graphs get
    their slot weights applied."""
    made = generate(_scenario_spec(s), s.seed())
    if isinstance(made, ToyGraph):
        g = made.weighted(s.float("w1", 1.0), s.float("w2", 1.0))
        return made, g, made.partition
    return made, made.graph, made.partition


def _load(s: Settings):
    """(scenario or None, graph, partition) from exactly one graph source."""
    if s.has("scenario") and s.has("graph"):
        raise CliError("give either --scenario or --graph, not both")
    if s.has("scenario"):
        return _generated(s)
    g = read_edge_list(s.require("graph", " (or --scenario)"))
    irr = s.str("irrelevant")
    irr = irr.split(",") if irr else None
    if s.has("categories"):
        part = read_categories(s.str("categories"), g, irrelevant=irr)
    else:
        part = CategoryPartition(np.zeros(g.node_count, dtype=np.int64), ("all",), None)
    return None, g, part


def _read_node_values(path, g: WeightedGraph) -> np.ndarray:
    vals = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].split()
            if not line:
                continue
            if len(line) != 2:
                raise CliError(f"{path}:{lineno}: expected 'node value'")
            vals[int(line[0])] = float(line[1])
    missing = [int(i) for i in g.node_ids if int(i) not in vals]
    if missing:
        raise CliError(f"{path}: no value for node {missing[0]}")
    return np.array([vals[int(i)] for i in g.node_ids])


def _start_index(s: Settings, g: WeightedGraph):
    if not s.has("start"):
        return None
    sid = s.int("start")
    i = int(np.searchsorted(g.node_ids, sid))
    if i >= g.node_count or g.node_ids[i] != sid:
        raise CliError(f"start node {sid} is not in the graph")
    return i


# -- commands ----------------------------------------------------------------

def cmd_generate(s: Settings) -> list[Path]:
    _, g, part = _generated(s)
    out = _out_dir(s)
    gp, cp = out / "graph.txt", out / "categories.txt"
    write_edge_list(g, gp)
    write_categories(g, part, cp)
    return [gp, cp, s.write_manifest(out)]


def cmd_sample(s: Settings) -> list[Path]:
    if not s.has("seed"):
        # record a fresh seed so the manifest still replays the run
        s.values["seed"] = str(int(np.random.SeedSequence().generate_state(1, dtype=np.uint32)[0]))
    seed = s.seed()
    method = s.str("method", "rw")
    if method not in SAMPLERS:
        raise CliError(f"unknown method {method!r}; choose from {', '.join(SAMPLERS)}")
    n = s.int("n", 1000)
    scn, g, part = _load(s)
    start = _start_index(s, g)
    burn_in = s.int("burn_in", 0)
    out = _out_dir(s)
    written = []
    if method == "uis":
        sample = uis(g, n, seed=seed, partition=part)
    elif method == "wis":
        if s.has("weights"):
            z = _read_node_values(s.str("weights"), g)
        elif scn is not None and s.has("w") and not isinstance(scn, ToyGraph):
            z = tiny_node_weights(scn, s.float("w"))
        else:
            raise CliError("wis needs node weights: give --weights, or --w with a two_community scenario")
        sample = wis(g, n, z, seed=seed, partition=part)
    elif method == "rw":
        sample = rw(g, n, start=start, burn_in=burn_in, seed=seed, partition=part)
    elif method == "mhrw":
        sample = mhrw(g, n, start=start, burn_in=burn_in, seed=seed, partition=part)
    elif method == "wrw":
        if s.has("w"):
            if scn is None or isinstance(scn, ToyGraph):
                raise CliError("--w applies to two_community scenarios; weight the edge list instead")
            g = tiny_weighted_graph(scn, s.float("w"))
        sample = wrw(g, n, start=start, burn_in=burn_in, seed=seed, partition=part)
    else:
        cfg = _swrw_config(s, part)
        run = run_swrw(g, part, cfg, n, seed=seed, start=start)
        sample = run.sample
        plan_path = out / "plan.csv"
        run.plan.to_csv(plan_path)
        written.append(plan_path)
    trace = out / "trace.csv"
    sample.to_csv(trace, node_ids=g.node_ids)
    return [trace] + written + [s.write_manifest(out)]


def _swrw_config(s: Settings, part: CategoryPartition | None = None) -> SwrwConfig:
    f_default = 0.01 if part is None or part.irrelevant is not None else 0.0
    cfg = SwrwConfig(
        f_irrelevant=s.float("f_irrelevant", f_default),
        gamma=s.float("gamma", 100.0),
        conflict=s.str("conflict", "hybrid"),
        pilot_length=s.int("pilot_len"),
        objective=s.str("objective", "sizes"),
    )
    return cfg


def cmd_estimate(s: Settings) -> list[Path]:
    estimator = s.str("estimator", "sizes")
    if estimator not in ESTIMATORS:
        raise CliError(f"unknown estimator {estimator!r}; choose from {', '.join(ESTIMATORS)}")
    trace = s.require("trace")
    g = part = None
    if s.has("graph"):
        g = read_edge_list(s.str("graph"))
        if s.has("categories"):
            irr = s.str("irrelevant")
            part = read_categories(s.str("categories"), g, irrelevant=irr.split(",") if irr else None)
    sample = WalkSample.from_csv(trace, node_ids=None if g is None else g.node_ids)
    rows = []
    if estimator == "mean":
        if s.has("values"):
            if g is None:
                raise CliError("--values needs --graph to map node ids")
            x = _read_node_values(s.str("values"), g)
            rows.append(("mean_value", "", hh_mean(sample, x), float(x.mean())))
        else:
            # default property: the degree carried in the trace, so no graph is needed
            deg = dict(zip(sample.nodes.tolist(), sample.degrees.tolist()))
            truth = 2 * g.edge_count / g.node_count if g is not None else None
            rows.append(("mean_degree", "", hh_mean(sample, deg), truth))
    else:
        if estimator == "sizes":
            est = category_size_fractions(sample)
            truth = _truth_by_label(part, part.sizes / part.sizes.sum() if part else None)
        elif estimator == "vol_node":
            est = volume_fraction_node(sample)
            truth = _truth_by_label(part, _vol_share(g, part))
        else:
            est = volume_fraction_star(sample)
            truth = _truth_by_label(part, _vol_share(g, part))
        for i, lab in enumerate(sample.labels):
            rows.append((estimator, lab, float(est[i]), None if truth is None else truth.get(lab)))
    out = _out_dir(s)
    path = out / "estimates.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "category", "estimate", "truth"])
        for q, c, e, t in rows:
            w.writerow([q, c, repr(e), "" if t is None else repr(float(t))])
    return [path, s.write_manifest(out)]


def _vol_share(g, part):
    if g is None or part is None:
        return None
    v = category_volumes(g, part)
    return v / v.sum()


def _truth_by_label(part, values):
    if part is None or values is None:
        return None
    return {lab: float(values[i]) for i, lab in enumerate(part.labels)}


def cmd_experiment(s: Settings) -> list[Path]:
    seed = s.seed()
    preset = s.str("preset", "figure5")
    if preset not in PRESETS:
        raise CliError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    if not s.has("scenario"):
        s.values["scenario"] = "two_community"
    if s.str("scenario") != "two_community":
        raise CliError("experiments run on the two_community scenario")
    scn = generate(_scenario_spec(s), seed)
    reps = s.int("reps", 25)
    exclude = s.bool("exclude_stuck")
    report = ExperimentReport()
    if preset == "figure5":
        grid = s.ints("n", "500,1000,2000,5000")
        swrw = MethodSpec("swrw", config=_swrw_config(s, scn.partition))
        curves = run_replications(scn, [MethodSpec("rw"), swrw], grid, reps, seed,
                                  exclude_stuck=exclude)
        report.extend(curves)
        sweep = error_vs_weight_sweep(scn, s.floats("w_grid", "1,5,20,100,500"), grid[0], reps, seed,
                                      sampler="wrw")
        report.rows += sweep.rows
        report.volumes += volume_estimator_errors(scn, s.ints("pilot_grid", "100,300,1000"), reps, seed)
        report.gains += measure_gain(curves.curve("swrw"), curves.curve("rw"))
    elif preset == "gain":
        opt = _method(s, s.str("method", "swrw"), scn)
        base = _method(s, s.str("baseline", "rw"), scn)
        grid = s.ints("n", "500,1000,2000")
        base_grid = s.ints("base_n", ",".join(str(k * grid[0]) for k in (1, 2, 5, 10, 20, 50)))
        a = run_replications(scn, [opt], grid, reps, seed, exclude_stuck=exclude)
        b = run_replications(scn, [base], base_grid, reps, seed, exclude_stuck=exclude, stream=3)
        report.extend(a)
        report.extend(b)
        report.gains += measure_gain(a.rows, b.rows)
    elif preset == "sweep":
        sampler = s.str("method", "wrw")
        if sampler not in ("wrw", "wis"):
            raise CliError("the sweep preset takes --method wrw or wis")
        sweep = error_vs_weight_sweep(scn, s.floats("w_grid", "1,5,20,100,500"), s.int("n", 500),
                                      reps, seed, sampler=sampler)
        report.rows += sweep.rows
    else:
        report.volumes += volume_estimator_errors(scn, s.ints("pilot_grid", "100,300,1000"), reps, seed)
    out = _out_dir(s)
    report.config.update({"scenario": scenario_name(scn), "seed": seed, "reps": reps})
    written = report.write(out)
    return written + [s.write_manifest(out)]


def _method(s: Settings, kind: str, scn) -> MethodSpec:
    if kind not in SAMPLERS:
        raise CliError(f"unknown method {kind!r}; choose from {', '.join(SAMPLERS)}")
    if kind == "swrw":
        return MethodSpec("swrw", config=_swrw_config(s, scn.partition))
    if kind in ("wis", "wrw"):
        return MethodSpec(kind, s.float("w", 1.0))
    return MethodSpec(kind)


HANDLERS = {
    "generate": cmd_generate,
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        values = read_config(args.config) if args.config else {}
        recorded = values.pop("command", args.command)
        if recorded != args.command:
            raise CliError(f"config was written by '{recorded}', not '{args.command}'")
        values.update({k: v for k, v in vars(args).items()
                       if k in OPTIONS and v is not None})
        unknown = sorted(set(values) - set(OPTIONS))
        if unknown:
            raise CliError(f"unknown setting {unknown[0]!r}")
        paths = HANDLERS[args.command](Settings(args.command, values))
    except (CliError, GraphError, PipelineError, EstimationError, WalkStuckError,
            ValueError, OSError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"swrw: error: {msg}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
