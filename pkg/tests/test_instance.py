import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmdual import (
    InfeasibleAssignment,
    InstanceSyntaxError,
    NotBijective,
    brute_force,
    build_inverse,
    energy,
    load_instance,
    parse_instance,
    serialize_instance,
)
from gmdual.instance import (
    has_injective_labeling,
    has_perfect_matching,
    instance_from_arrays,
    invert_labeling,
    make_assignment,
)

from conftest import make_random


def test_parse_tiny(tiny):
    assert tiny.num_nodes == 2 and tiny.num_labels == 2
    assert tiny.unary[0][0] == 1.0
    assert tiny.pair_cost(0, 1, 0, 1) == -1.0
    assert tiny.pair_cost(1, 0, 1, 0) == -1.0
    assert tiny.pair_cost(0, 1, 1, 0) == 0.0


def test_parse_without_edges():
    inst = parse_instance("p 2 2 4 0\na 0 0 0 1\na 1 0 1 2\na 2 1 0 3\na 3 1 1 4\n")
    assert inst.edges == []
    assert brute_force(inst).energy == 5.0


def test_parse_accepts_streams_and_comments(tiny_text):
    text = "c a comment\n# another\n\n" + tiny_text
    a = parse_instance(io.BytesIO(text.encode()))
    b = parse_instance(io.StringIO(text))
    assert energy(a, [0, 1]) == energy(b, [0, 1]) == 4.0


@pytest.mark.parametrize(
    "text, line",
    [
        ("p 1 1 1 0\na 0 0 x 1\n", 2),
        ("p 1 1 1 0\na 0 0 0 nan\n", 2),
        ("p 1 1 1 0\nz\n", 2),
        ("p 1 1 1\n", 1),
        ("p 1 1 2 0\na 0 0 0 1\na 0 0 0 2\n", 3),
        ("p 2 2 2 1\na 0 0 0 1\na 1 1 1 1\ne 0 5 1\n", 4),
        ("p 2 2 2 1\na 0 0 0 1\na 1 1 0 1\ne 0 1 1\n", 4),
        ("p 2 2 2 2\na 0 0 0 1\na 1 1 1 1\ne 0 1 1\ne 1 0 2\n", 5),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(InstanceSyntaxError) as err:
        parse_instance(text, source="x.dd")
    assert err.value.line == line
    assert str(err.value).startswith(f"x.dd:{line}:")


def test_parse_count_mismatch():
    with pytest.raises(InstanceSyntaxError):
        parse_instance("p 1 1 2 0\na 0 0 0 1\n")
    with pytest.raises(InstanceSyntaxError):
        parse_instance("a 0 0 0 1\n")


def test_energy_hand_sum(tiny):
    assert energy(tiny, [0, 1]) == 1 + 4 - 1
    assert energy(tiny, [1, 0]) == 2 + 3


def test_energy_zero_costs():
    inst = instance_from_arrays([np.zeros(3)] * 3, {(0, 1): np.zeros((3, 3))})
    assert energy(inst, [2, 0, 1]) == 0.0


def test_energy_rejects_infeasible(tiny):
    with pytest.raises(InfeasibleAssignment):
        energy(tiny, [0, 0])
    with pytest.raises(InfeasibleAssignment):
        energy(tiny, [0, -1])
    with pytest.raises(InfeasibleAssignment):
        energy(tiny, [0])


def test_inverse_of_tiny(tiny):
    inv = build_inverse(tiny)
    assert inv.num_nodes == 2 and inv.num_labels == 2 and inv.edges == [(0, 1)]
    # x = (0 -> 1, 1 -> 0) corresponds to y = (0 -> 1, 1 -> 0)
    for x in ([0, 1], [1, 0]):
        y = invert_labeling(x, 2)
        assert energy(inv, y) == energy(tiny, x)


def test_inverse_can_be_denser():
    # star around node 0 with labels shared by all: inverse edges join every label pair
    inst = make_random(3, n=4, edge_density=0.0)
    inst.pairwise[(0, 1)] = np.ones((4, 4)) - np.eye(4)
    inst.pairwise[(0, 2)] = np.ones((4, 4)) - np.eye(4)
    inv = build_inverse(inst)
    assert len(inv.edges) > len(inst.edges)


def test_inverse_requires_square():
    with pytest.raises(NotBijective):
        build_inverse(make_random(0, n=2, m=3))


def test_feasibility_helpers():
    inst = instance_from_arrays([[0.0], [0.0]], {}, label_sets=[[0], [0]], num_labels=2)
    assert not has_perfect_matching(inst)
    assert not has_injective_labeling(inst)
    assert has_injective_labeling(make_random(1, n=2, m=4))


def test_serialize_roundtrip():
    inst = make_random(7, n=4, m=5, label_density=0.6, edge_density=0.7)
    again = parse_instance(serialize_instance(inst))
    for lab in ([int(ls[0]) for ls in inst.label_sets],):
        if len(set(lab)) == len(lab):
            assert energy(again, lab) == energy(inst, lab)
    assert brute_force(again).energy == brute_force(inst).energy


def test_load_instance(tmp_path, tiny_text):
    p = tmp_path / "t.dd"
    p.write_text(tiny_text)
    assert load_instance(p).num_nodes == 2


def test_oracle_energy_agrees_on_random():
    inst = make_random(11, n=5)
    best = brute_force(inst)
    assert make_assignment(inst, best.labels).energy == best.energy


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 4), extra=st.integers(0, 2))
def test_inverse_preserves_energy(seed, n, extra):
    inst = make_random(seed, n=n, label_density=0.7, edge_density=0.6)
    inv = build_inverse(inst)
    rng = np.random.default_rng(seed + extra)
    for _ in range(5):
        x = rng.permutation(n)
        if all(inst.has_label(u, int(s)) for u, s in enumerate(x)):
            assert math.isclose(energy(inv, invert_labeling(x, n)), energy(inst, x),
                                rel_tol=1e-12, abs_tol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_serialize_roundtrip_property(seed):
    inst = make_random(seed, n=3, m=4, label_density=0.6, edge_density=0.7)
    again = parse_instance(serialize_instance(inst))
    assert [ls.tolist() for ls in again.label_sets] == [ls.tolist() for ls in inst.label_sets]
    for key, m in inst.pairwise.items():
        assert np.array_equal(again.pairwise.get(key, np.zeros_like(m)), m)
