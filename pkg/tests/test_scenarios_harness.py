import csv

import numpy as np
import pytest
from scipy import stats

from swrw import harness
from swrw.estimation import category_size_fractions, nrmse
from swrw.graph import GraphError
from swrw.harness import (CurveRow, ExperimentReport, MethodSpec, error_vs_weight_sweep, mean_gain,
                          measure_gain, run_replications, volume_estimator_errors)
from swrw.scenarios import (ScenarioSpec, gen_toy_a, gen_toy_b, gen_two_community,
                            tiny_weighted_graph, toy_a_analytic, toy_a_exit_probability,
                            toy_b_wis_ratio)
from swrw.walkers import WalkStuckError, derive_seed, wrw

SMALL = dict(scale=0.02)


@pytest.fixture(scope="module")
def small_random():
    return gen_two_community(ScenarioSpec(**SMALL), seed=3)


@pytest.fixture(scope="module")
def small_clustered():
    return gen_two_community(ScenarioSpec(labels="clustered", **SMALL), seed=3)


def test_desk_scale_totals():
    scn = gen_two_community(ScenarioSpec(scale=0.1), seed=1)
    assert scn.graph.node_count == 10_100
    assert scn.graph.edge_count == 50_550
    assert np.bincount(scn.partition.category_of).tolist() == [100, 10_000]
    assert scn.tiny_fraction == pytest.approx(100 / 10_100)


def test_edge_split_by_community(small_random):
    c = small_random.communities
    e = small_random.graph.edges
    a, b = c[e[:, 0]], c[e[:, 1]]
    assert np.count_nonzero((a == 0) & (b == 0)) == 100
    assert np.count_nonzero((a == 1) & (b == 1)) == 10_000
    assert np.count_nonzero(a != b) == 10
    assert not np.any(e[:, 0] == e[:, 1])
    assert np.all(small_random.graph.edge_weights == 1.0)


def test_generator_determinism():
    spec = ScenarioSpec(**SMALL)
    a, b = gen_two_community(spec, 11), gen_two_community(spec, 11)
    assert np.array_equal(a.graph.edges, b.graph.edges)
    assert np.array_equal(a.partition.category_of, b.partition.category_of)
    c = gen_two_community(spec, 12)
    assert not np.array_equal(a.graph.edges, c.graph.edges)


def test_random_and_clustered_share_topology(small_random, small_clustered):
    assert np.array_equal(small_random.graph.edges, small_clustered.graph.edges)
    assert np.array_equal(small_clustered.partition.category_of, small_clustered.communities)
    r = small_random.partition.category_of
    assert np.bincount(r).tolist() == np.bincount(small_clustered.communities).tolist()
    assert not np.array_equal(r, small_clustered.communities)


def test_irrelevant_block_keeps_relevant_part(small_random):
    scn = gen_two_community(ScenarioSpec(irrelevant_factor=2, **SMALL), seed=3)
    n_rel = small_random.graph.node_count
    assert scn.graph.node_count == 3 * n_rel
    assert scn.partition.irrelevant == 2 and scn.partition.labels[2] == "irrelevant"
    e = scn.graph.edges
    inside = e[(e < n_rel).all(axis=1)]
    assert np.array_equal(inside, small_random.graph.edges)
    assert np.count_nonzero((e[:, 0] < n_rel) != (e[:, 1] < n_rel)) == n_rel
    assert np.array_equal(scn.partition.category_of[:n_rel], small_random.partition.category_of)
    assert scn.tiny_fraction == small_random.tiny_fraction


def test_generator_errors():
    with pytest.raises(GraphError):
        gen_two_community(ScenarioSpec(scale=0.01), 0)
    with pytest.raises(GraphError):
        gen_two_community(ScenarioSpec(scale=1e-4), 0)
    with pytest.raises(GraphError):
        ScenarioSpec(labels="mixed")
    with pytest.raises(GraphError):
        ScenarioSpec(irrelevant_factor=-1)


def test_tiny_weighted_graph(small_random):
    gw = tiny_weighted_graph(small_random, 7.0)
    cat = small_random.partition.category_of
    e = small_random.graph.edges
    touch = (cat[e] == 0).any(axis=1)
    assert np.all(gw.edge_weights[touch] == 7.0) and np.all(gw.edge_weights[~touch] == 1.0)


def test_toy_a_shape():
    toy = gen_toy_a(4, seed=0)
    assert toy.graph.node_count == 9
    deg = toy.graph.degrees
    assert deg[0] == 8 and np.all(deg[1:] == 2)
    assert toy.partition.labels[toy.partition.irrelevant] == "hub"
    assert np.count_nonzero(toy.slots == 1) == 4 and np.count_nonzero(toy.slots == 2) == 8
    with pytest.raises(GraphError):
        gen_toy_a(3)


def test_toy_a_exit_probability():
    assert toy_a_exit_probability(1, 1) == 0.5
    assert toy_a_exit_probability(0, 2) == 1.0
    toy = gen_toy_a(4, seed=0)
    walk = wrw(toy.weighted(0.0, 1.0), 40, start=0, seed=1).nodes
    assert np.all(walk[::2] == 0) and np.all(walk[1::2] != 0)
    with pytest.raises(WalkStuckError):
        wrw(toy.weighted(1.0, 0.0), 10, start=0, seed=1)


def test_toy_a_dwell_is_geometric():
    p = 0.6
    toy = gen_toy_a(10, seed=2)
    nodes = wrw(toy.weighted(1 - p, p), 40_000, start=0, seed=5).nodes
    hubs = np.flatnonzero(nodes == 0)
    dwell = np.diff(hubs) - 1
    dwell = dwell[:10_000]
    assert len(dwell) == 10_000 and dwell.min() >= 1
    k = 6
    obs = np.array([np.count_nonzero(dwell == j) for j in range(1, k)] + [np.count_nonzero(dwell >= k)])
    probs = np.array([(1 - p) ** (j - 1) * p for j in range(1, k)] + [(1 - p) ** (k - 1)])
    assert stats.chisquare(obs, probs * len(dwell)).pvalue > 0.01


def test_toy_a_analytic():
    assert toy_a_analytic(1.0, 100) == (0.5, pytest.approx(0.0025))
    assert toy_a_analytic(0.5, 100)[1] == pytest.approx(0.005)
    with pytest.raises(ValueError):
        toy_a_analytic(0.0, 100)
    with pytest.raises(ValueError):
        toy_a_analytic(0.5, 0)


def test_toy_b_ratio():
    toy = gen_toy_b()
    cat = toy.partition.category_of
    big = toy.partition.index("big")
    assert toy.graph.degrees[cat == big].sum() - 2 == 380
    assert toy_b_wis_ratio(toy) == pytest.approx(190)
    with pytest.raises(GraphError):
        gen_toy_b(tiny_size=1)
    with pytest.raises(GraphError):
        gen_toy_b(attachment=[(5, 0)])


def test_toy_b_finite_n_optimum_below_wis_ratio():
    toy = gen_toy_b()
    tiny = toy.partition.index("tiny")
    truth = 2 / 22
    grid = [1, 5, 20, 60, 190, 500]
    errs = []
    for i, r in enumerate(grid):
        g = toy.weighted(float(r), 1.0)
        est = [category_size_fractions(wrw(g, 50, seed=derive_seed(4, i, k), partition=toy.partition))[tiny]
               for k in range(1500)]
        errs.append(nrmse(est, truth))
    assert grid[int(np.argmin(errs))] < 190


def _row(n, err, method="m", reps=10, stuck=0):
    return CurveRow("s", method, None, n, float(n), err, 0.0, reps, stuck, 1.0)


def test_measure_gain_identity_and_interpolation():
    curve = [_row(n, 1 / np.sqrt(n)) for n in (100, 400, 1600)]
    assert [g.alpha for g in measure_gain(curve, curve)] == [1.0, 1.0, 1.0]
    base = [_row(n, 2 / np.sqrt(n), "b") for n in (100, 400, 1600, 6400)]
    g = measure_gain([_row(100, 0.1)], base)
    assert g[0].alpha == pytest.approx(4.0)
    assert g[0].baseline == "b"
    assert measure_gain([_row(100, 1e-4)], base)[0].alpha is None
    assert mean_gain(measure_gain([_row(100, 0.1), _row(200, 1e-5)], base)) == pytest.approx(4.0)
    assert np.isnan(mean_gain([]))


def test_low_confidence_flag():
    assert _row(10, 0.1, reps=1).low_confidence
    assert _row(10, 0.1, reps=5, stuck=4).low_confidence
    assert not _row(10, 0.1, reps=2).low_confidence


def test_run_replications_rows(small_random):
    rep = run_replications(small_random, [MethodSpec("rw"), MethodSpec("uis")], [50, 200], 5, 1)
    assert len(rep.rows) == 4
    rw_rows = rep.curve("rw")
    assert [r.n for r in rw_rows] == [50, 200]
    assert all(r.reps == 5 and r.stuck == 0 for r in rep.rows)
    again = run_replications(small_random, [MethodSpec("rw"), MethodSpec("uis")], [50, 200], 5, 1)
    assert [r.nrmse for r in again.rows] == [r.nrmse for r in rep.rows]
    with pytest.raises(ValueError):
        run_replications(small_random, [MethodSpec("rw")], [10], 0, 1)
    single = run_replications(small_random, [MethodSpec("rw")], [10], 1, 1)
    assert single.rows[0].low_confidence and np.isfinite(single.rows[0].nrmse)


def test_wrw_at_one_matches_rw(small_random):
    a = run_replications(small_random, [MethodSpec("rw")], [100], 20, 5)
    b = run_replications(small_random, [MethodSpec("wrw", 1.0)], [100], 20, 5)
    assert a.rows[0].nrmse == b.rows[0].nrmse


def test_rw_error_decreases_with_n(small_random):
    rep = run_replications(small_random, [MethodSpec("rw")], [100, 400, 1600], 200, 2)
    e = [r.nrmse for r in rep.curve("rw")]
    assert e[0] > e[1] > e[2]


def test_visit_probability_grows_with_weight(small_clustered):
    sweep = error_vs_weight_sweep(small_clustered, [1, 10, 100], 30, 200, seed=3)
    p = [r.p_visited for r in sweep.rows]
    assert p[0] < p[1] < p[2]
    assert sweep.weights.tolist() == [1, 10, 100]
    assert sweep.argmin in (1, 10, 100)


def test_stuck_runs_counted(small_random, monkeypatch):
    real = harness.sample_once

    def flaky(scn, method, n, seed, cache=None):
        if seed % 2:
            raise WalkStuckError(0, 0)
        return real(scn, method, n, seed, cache)

    monkeypatch.setattr(harness, "sample_once", flaky)
    kept = run_replications(small_random, [MethodSpec("uis")], [100], 20, 1)
    dropped = run_replications(small_random, [MethodSpec("uis")], [100], 20, 1, exclude_stuck=True)
    assert kept.rows[0].stuck == dropped.rows[0].stuck > 0
    assert kept.rows[0].nrmse > dropped.rows[0].nrmse


def test_swrw_method_runs(small_random):
    scn = gen_two_community(ScenarioSpec(irrelevant_factor=1, **SMALL), seed=3)
    rep = run_replications(scn, [MethodSpec("swrw"), MethodSpec("rw")], [200], 4, 1)
    sw = rep.curve("swrw")[0]
    assert sw.cost > 200 and sw.stuck == 0


def test_report_write(tmp_path, small_random):
    rep = run_replications(small_random, [MethodSpec("rw")], [50, 100], 3, 1)
    rep.gains = measure_gain(rep.rows, rep.rows)
    rep.volumes = volume_estimator_errors(small_random, [50], 3, 1)
    paths = rep.write(tmp_path)
    assert sorted(p.name for p in paths) == ["curves.csv", "gains.csv", "visits.csv", "volumes.csv"]
    with open(tmp_path / "curves.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:6] == ["scenario", "method", "param", "n", "nrmse", "stderr"]
    assert len(rows) == 3 and rows[1][0] == "two_community-random-x0.02"
    assert {v["estimator"] for v in rep.volumes} == {"star", "node"}
    assert ExperimentReport().write(tmp_path / "empty") == [tmp_path / "empty" / "curves.csv",
                                                            tmp_path / "empty" / "visits.csv"]
