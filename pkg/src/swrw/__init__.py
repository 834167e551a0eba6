"""Graph sampling by stratified weighted random walks."""

from .estimation import (EstimationError, category_size_fractions, hh_mean, hh_total, nrmse,
                         volume_fraction_node, volume_fraction_star)
from .graph import (CategoryPartition, GraphError, WeightedGraph, build_graph, category_sizes,
                    category_volumes, from_arrays, read_categories, read_edge_list)
from .harness import (ExperimentReport, MethodSpec, error_vs_weight_sweep, measure_gain,
                      run_replications)
from .pipeline import EdgeWeightPlan, PipelineError, SwrwConfig, arbitrary_node_weights, run_swrw
from .scenarios import ScenarioSpec, gen_toy_a, gen_toy_b, gen_two_community, toy_a_analytic
from .stratification import AllocationError, StratumSpec, allocate, gain, gain_with_irrelevant
from .walkers import (WalkSample, WalkStuckError, exact_stationary, mhrw, rw, transition_probabilities,
                      uis, wis, wrw)

__all__ = [name for name in dir() if not name.startswith("_")]
