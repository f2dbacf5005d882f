import numpy as np
import pytest

from gmdual import SolveOptions, brute_force, build, check_admissible, dual_bound, run
from gmdual.engine import DualState, MessageUpdate, Schedule, send_messages
from gmdual.factors import FactorGraph, MarginalCoupling, PairwiseFactor, SimplexFactor
from gmdual.instance import instance_from_arrays

from conftest import make_random


def test_dual_bound_examples():
    g = FactorGraph()
    g.add_factor(SimplexFactor(np.zeros(3)))
    g.add_factor(PairwiseFactor(np.zeros((3, 3))))
    assert dual_bound(g) == 0.0
    g = FactorGraph()
    g.add_factor(SimplexFactor([3.0, 1.0, 2.0]))
    assert dual_bound(g) == 1.0


def test_dual_bound_at_zero_reparametrization_is_below_optimum():
    inst = make_random(5, n=3)
    rel = build(inst, "amp-o")
    assert dual_bound(rel.graph) <= brute_force(inst).energy + 1e-12


@pytest.mark.parametrize("delta, ok", [
    ([0, 0, 0], True),
    ([2, 0, 1], True),
    ([4, 0, 1], False),
    ([2, 0.5, 1], False),
    ([-1, 0, 0], False),
])
def test_check_admissible_examples(delta, ok):
    assert check_admissible(np.array(delta, dtype=float), theta=[3, 1, 2], x_star=1) is ok


def node_edge_graph(theta):
    g = FactorGraph()
    n = g.add_factor(SimplexFactor(theta))
    p = g.add_factor(PairwiseFactor(np.zeros((len(theta), 2))))
    g.add_coupling(MarginalCoupling(g.factors[n], g.factors[p], 0))
    return g, n, p


def test_send_one_edge_leaves_node_uniform():
    g, n, p = node_edge_graph([3.0, 1.0, 2.0])
    ups = send_messages(g, n, [p])
    assert ups[0].delta.tolist() == [2, 0, 1]
    assert g.factors[n].theta.tolist() == [1, 1, 1]
    assert g.factors[p].theta[:, 0].tolist() == [2, 0, 1]


def test_send_uniform_is_noop():
    g, n, p = node_edge_graph([2.0, 2.0])
    ups = send_messages(g, n, [p])
    assert np.all(ups[0].delta == 0)


def test_schedule_reverse():
    s = Schedule([1, 2, 3], {2: [1]}, {1: [2]}, True, frozenset([3]))
    r = s.reversed()
    assert r.order == [3, 2, 1] and r.recv == {1: [2]} and not r.forward
    assert r.reversed().order == [1, 2, 3]
    assert s.receive_sources(3) == []


def test_crf_chain_converges_to_optimum():
    # disjoint label sets make this a plain 3-node chain CRF; LP tight on trees
    rng = np.random.default_rng(2)
    unary = [rng.normal(size=3) for _ in range(3)]
    pw = {(0, 1): rng.normal(size=(3, 3)), (1, 2): rng.normal(size=(3, 3))}
    inst = instance_from_arrays(unary, pw, label_sets=[np.arange(3), np.arange(3, 6),
                                                        np.arange(6, 9)])
    rel = build(inst, "gm-o")
    st = run(rel.graph, rel.schedule(), SolveOptions(max_iter=200))
    assert st.lower_bound == pytest.approx(brute_force(inst).energy, abs=1e-9)


def test_zero_cost_instance_closes_after_one_iteration():
    from gmdual import solve

    inst = instance_from_arrays([np.zeros(3)] * 3, {(0, 1): np.zeros((3, 3))})
    res = solve(inst, "amp-o")
    assert res.iterations == 1 and res.lower_bound == 0.0 and res.gap == 0.0


def test_run_bounds_monotone_and_stall_stop():
    inst = make_random(9, n=4)
    rel = build(inst, "amp-o")
    st = run(rel.graph, rel.schedule(), SolveOptions(max_iter=500, stall_iters=5))
    assert isinstance(st, DualState)
    assert all(b >= a for a, b in zip(st.history, st.history[1:]))
    assert st.iteration < 500 or st.stall == 0


def test_time_limit():
    inst = make_random(1, n=5)
    rel = build(inst, "amp-o")
    st = run(rel.graph, rel.schedule(), SolveOptions(max_iter=10 ** 6, stall_iters=10 ** 6,
                                                     time_limit=0.0, gap_tol=-1))
    assert st.iteration == 1


def test_message_update_receiver():
    g, n, p = node_edge_graph([1.0, 0.0])
    up = MessageUpdate(g.coupling(n, p), g.factors[n], np.zeros(2))
    assert up.receiver is g.factors[p]
