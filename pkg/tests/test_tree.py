import math

import numpy as np
import pytest

import surrogate_dual.tree as tree_mod
from oracles import brute_force_minlp, random_instances
from surrogate_dual.minlp import SubSolveOutcome, SubStatus
from surrogate_dual.model import AggregationMatrix
from surrogate_dual.surrogate import BendersConfig, evaluate_K_surrogate, run_benders
from surrogate_dual.tree import AggregationPool, NodeContext, local_bound, milp_bound, split_widest, tree_demo

LAM_HALF = AggregationMatrix.from_array([[0.5, 0.5]])
LAM_SKEW = AggregationMatrix.from_array([[0.8, 0.2]])


@pytest.fixture(scope="module")
def pool(tree_model):
    # root values: (1/2, 1/2) gives y <= 1/2, (0.8, 0.2) gives y <= 0.6 x^2 + 0.2
    cands = [(lam, evaluate_K_surrogate(tree_model, lam)) for lam in (LAM_SKEW, LAM_HALF)]
    return AggregationPool.build(cands, milp_bound(tree_model, tree_model.boxes))


def test_pool_order_and_admission(tree_model, pool):
    assert pool.root_milp_bound == pytest.approx(-1.0)
    assert [e.lam for e in pool.entries] == [LAM_HALF, LAM_SKEW]
    assert [e.root_bound for e in pool.entries] == pytest.approx([-0.5, -0.8], abs=1e-6)
    weak = AggregationPool.build([(AggregationMatrix.from_array([[1.0, 0.0]]), -1.0)], -1.0)
    assert len(weak) == 0


def test_root_returns_root_bound(tree_model, pool):
    bound, cands = local_bound(NodeContext.root(tree_model, pool), tree_model, pool)
    assert bound == pytest.approx(-0.5, abs=1e-6)
    assert cands == (0, 1)


def test_discard_then_next_candidate(tree_model, pool):
    node = NodeContext(1, ((0.0, 0.5), (0.0, 0.5)), (0, 1), depth=2)
    bound, cands = local_bound(node, tree_model, pool)
    # MILP bound -0.5; (1/2,1/2) cannot beat it; (0.8,0.2) gives y <= 0.35
    assert bound == pytest.approx(-0.35, abs=1e-4)
    assert cands == (1,)


def test_all_discarded(tree_model, pool):
    node = NodeContext(1, ((0.5, 1.0), (0.0, 0.5)), (0,), depth=2)
    bound, cands = local_bound(node, tree_model, pool)
    assert bound == pytest.approx(-0.5, abs=1e-9) and cands == ()


def test_empty_pool(tree_model):
    empty = AggregationPool((), -1.0)
    bound, cands = local_bound(NodeContext.root(tree_model, empty), tree_model, empty)
    assert bound == pytest.approx(-1.0) and cands == ()


def test_limit_candidates_are_kept(tree_model, pool, monkeypatch):
    real = tree_mod.solve_subproblem

    def fake(sp, limits=None):
        if sp.aggregated:
            return SubSolveOutcome(SubStatus.LIMIT, -2.0, None, math.inf, math.inf)
        return real(sp, limits)

    monkeypatch.setattr(tree_mod, "solve_subproblem", fake)
    bound, cands = local_bound(NodeContext.root(tree_model, pool), tree_model, pool)
    assert bound == pytest.approx(-1.0) and cands == (0, 1)


def test_split_widest():
    kids = split_widest(((0, 1), (0, 2)), np.array([False, False]))
    assert kids == [((0, 1), (0, 1)), ((0, 1), (1, 2))]
    kids = split_widest(((0, 3), (0, 1)), np.array([True, False]))
    assert kids == [((0, 1), (0, 1)), ((2, 3), (0, 1))]


def _paths_monotone(records):
    by_id = {r.node_id: r for r in records}
    return all(r.parent is None or r.n_candidates <= by_id[r.parent].n_candidates for r in records)


def test_demo_discards_somewhere(tree_model):
    rep = run_benders(tree_model, BendersConfig(K=1))
    one = AggregationPool.from_reports([rep], milp_bound(tree_model, tree_model.boxes), size=1)
    assert len(one) == 1
    nodes = tree_demo(tree_model, one, primal=-0.5, max_depth=2)
    assert nodes[0].n_candidates == 1
    assert any(r.n_candidates == 0 and r.depth > 0 for r in nodes)
    assert _paths_monotone(nodes)
    assert all(r.bound >= r.milp_bound - 1e-9 for r in nodes)


def test_demo_without_pool(tree_model):
    nodes = tree_demo(tree_model, AggregationPool((), -1.0), primal=-0.5, max_depth=2)
    assert all(r.bound == r.milp_bound for r in nodes)


def test_demo_pruning(tree_model, pool):
    nodes = tree_demo(tree_model, pool, primal=-0.6, max_depth=2)
    assert nodes[0].pruned and len(nodes) == 1
    nodes = tree_demo(tree_model, pool, primal=-0.45, max_depth=2)
    assert any(r.pruned for r in nodes)
    assert all(r.pruned == (r.bound > -0.45 + 1e-9) for r in nodes)


@pytest.mark.parametrize("idx", [0, 5, 7, 9])
def test_local_bounds_are_sound(idx):
    model = random_instances()[idx]
    rep = run_benders(model, BendersConfig(K=1, max_iterations=30))
    root = milp_bound(model, model.boxes)
    pool = AggregationPool.from_reports([rep], root, size=3)
    nodes = tree_demo(model, pool, primal=math.inf, max_depth=2)
    assert _paths_monotone(nodes)
    for rec in nodes:
        ref, _ = brute_force_minlp(model, boxes=rec.boxes, steps=401)
        assert rec.bound >= rec.milp_bound - 1e-9
        assert rec.bound <= ref + 1e-4
