import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmdual import METHODS, NoFeasibleLabel, SolveOptions, brute_force, build, energy, mcf, solve
from gmdual.engine import run
from gmdual.instance import instance_from_arrays
from gmdual.rounding import Rounder, interleaved_round, mcf_round

from conftest import make_random


def test_interleaved_first_node():
    assert interleaved_round([3, 1, 2], [False, False, False]) == 1


def test_interleaved_skips_taken():
    assert interleaved_round([3, 1, 2], [False, True, False]) == 2


def test_interleaved_pair_terms_and_mask():
    assert interleaved_round([0, 0, 0], [False] * 3, [np.array([1.0, 0.5, 2.0])]) == 1
    assert interleaved_round([0, 1, 2], [False] * 3, allowed=[False, True, True]) == 1
    with pytest.raises(NoFeasibleLabel):
        interleaved_round([1, 2], [True, True])


def test_greedy_on_diagonal_chain_is_optimal():
    unary = [np.array([0.0, 5, 5]), np.array([5.0, 0, 5]), np.array([5.0, 5, 0])]
    pw = {(0, 1): np.full((3, 3), 1.0), (1, 2): np.full((3, 3), 1.0)}
    inst = instance_from_arrays(unary, pw)
    rel = build(inst, "amp-o")
    r = Rounder(rel)
    st_ = run(rel.graph, rel.schedule(), SolveOptions(max_iter=1, gap_tol=-1), round_hook=r)
    assert r.last["interleaved"].labels.tolist() == [0, 1, 2]
    assert st_.upper_bound == brute_force(inst).energy


def test_mcf_round_identity_and_unary_only():
    inst = instance_from_arrays(list(1.0 - np.eye(4)), {})
    assert mcf_round(build(inst, "amp-o")).labels.tolist() == [0, 1, 2, 3]
    rng = np.random.default_rng(1)
    c = rng.normal(size=(3, 4))
    inst = instance_from_arrays(list(c), {}, num_labels=4)
    a = mcf_round(build(inst, "gm-o"))
    assert a.energy == pytest.approx(mcf.assignment(c).objective)


@pytest.mark.parametrize("method", METHODS)
def test_rounding_returns_feasible_labeling(method):
    inst = make_random(17, n=4, label_density=0.7)
    res = solve(inst, method, SolveOptions(max_iter=20, tighten=False))
    assert res.upper_bound == energy(inst, res.assignment.labels)
    assert res.upper_bound >= res.lower_bound - 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 4))
def test_weak_duality(seed, n):
    inst = make_random(seed, n=n, label_density=0.7, edge_density=0.6)
    res = solve(inst, "amp-o", SolveOptions(max_iter=30, tighten=False))
    assert res.lower_bound <= res.upper_bound + 1e-9
