import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_model, random_state
from tempergrid.constraints import (ConstrainedProblem, ConstraintSet, SparsificationError,
                                    SparsificationMap, build_effective, decode, decode_many, evaluate_g,
                                    min_degree_cap, sparsify)
from tempergrid.instances import five_node_complete
from tempergrid.ising import IsingModel, ModelError
from tempergrid.oracle import exact_ground_state, spins_from_codes


def test_g_mismatched_pair():
    assert evaluate_g(ConstraintSet([[0, 1]]), [1, -1]) == 4


def test_g_all_aligned():
    assert evaluate_g(ConstraintSet([[0, 1], [1, 2]]), [-1, -1, -1]) == 0


def test_g_three_copy_chain():
    assert evaluate_g(ConstraintSet([[0, 1], [1, 2]]), [1, -1, 1]) == 8


@given(st.lists(st.sampled_from([-1, 1]), min_size=6, max_size=6))
def test_g_values_multiple_of_four(spins):
    cs = ConstraintSet([[0, 1], [1, 2], [3, 4], [4, 5]])
    g = cs.evaluate(spins)
    assert g % 4 == 0 and 0 <= g <= 4 * cs.m
    assert (g == 0) == all(spins[a] == spins[b] for a, b in cs.pairs)


def test_constraint_set_validation():
    with pytest.raises(ModelError):
        ConstraintSet([[1, 1]])
    with pytest.raises(ModelError):
        ConstraintSet([[0, 1], [1, 0]])
    with pytest.raises(ModelError):
        ConstrainedProblem(IsingModel.from_edges(2), ConstraintSet([[0, 2]]))


def test_effective_zero_penalty_is_cost(rng):
    m = random_model(6, rng)
    prob = ConstrainedProblem(m, ConstraintSet([[0, 1]]))
    eff = build_effective(prob, 0.0)
    s = random_state(6, rng)
    assert eff.energy(s) == pytest.approx(m.energy(s))


def test_effective_single_pair_p8():
    prob = ConstrainedProblem(IsingModel.from_edges(2), ConstraintSet([[0, 1]]))
    eff = build_effective(prob, 8.0)
    assert eff.energy([1, -1]) == pytest.approx(prob.f([1, -1]) + 32.0)


def test_effective_random_states_match(rng):
    m = random_model(8, rng)
    prob = ConstrainedProblem(m, ConstraintSet([[0, 1], [1, 2], [5, 7]]))
    eff = build_effective(prob, 3.0)
    for _ in range(100):
        s = random_state(8, rng)
        assert eff.energy(s) == pytest.approx(m.energy(s) + 3.0 * prob.g(s), rel=1e-12, abs=1e-12)


def test_effective_merges_existing_coupling():
    m = IsingModel.from_edges(2, [(0, 1, 0.5)])
    eff = build_effective(ConstrainedProblem(m, ConstraintSet([[1, 0]])), 2.0)
    assert eff.merged.edges() == [(0, 1, 4.5)]
    assert eff.offset == 4.0


def test_sparsify_five_node_two_copies():
    prob, smap = sparsify(five_node_complete(), 2, 3)
    assert prob.n_spins == 10
    assert prob.constraints.m == 5
    deg = prob.cost.degrees + np.bincount(prob.constraints.pairs.ravel(), minlength=10)
    assert deg.max() <= 3


def test_sparsify_identity():
    m = five_node_complete()
    prob, smap = sparsify(m, 1)
    assert prob.cost is m and prob.constraints.m == 0


@pytest.mark.parametrize("n", [4, 7, 10])
def test_sparsify_three_copies_counts(n, rng):
    m = random_model(n, rng, density=1.0)
    prob, smap = sparsify(m, 3, min_degree_cap(m, 3))
    assert prob.n_spins == 3 * n
    assert prob.constraints.m == 2 * n


def test_sparsify_infeasible_names_node():
    with pytest.raises(SparsificationError, match=">= 3"):
        sparsify(five_node_complete(), 2, 2)
    m = IsingModel.from_edges(6, [(0, j, 1.0) for j in range(1, 6)])
    with pytest.raises(SparsificationError, match="node 0"):
        sparsify(m, 2, 3)


def test_sparsify_every_coupling_once(rng):
    m = random_model(7, rng, density=0.8)
    prob, smap = sparsify(m, 3, min_degree_cap(m, 3))
    assert prob.cost.n_couplings == m.n_couplings
    for (u, v), (a, b) in smap.edge_assignment.items():
        assert a in smap.copies[u] and b in smap.copies[v]
    assert sorted(x for c in smap.copies for x in c) == list(range(prob.n_spins))


@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_feasible_energy_preserved(seed, k):
    rng = np.random.default_rng(seed)
    m = random_model(6, rng, density=0.9)
    prob, smap = sparsify(m, k, min_degree_cap(m, k))
    logical = random_state(6, rng)
    phys = np.repeat(logical, k)
    assert prob.g(phys) == 0
    assert prob.f(phys) == pytest.approx(m.energy(logical), rel=1e-12, abs=1e-12)
    dec, ok = decode(smap, phys)
    assert ok and np.array_equal(dec, logical)


def test_ground_state_preserved(rng):
    m = random_model(5, rng, density=1.0)
    prob, smap = sparsify(m, 2, min_degree_cap(m, 2))
    codes = np.arange(1 << prob.n_spins)
    s = spins_from_codes(codes, prob.n_spins)
    feasible = prob.constraints.evaluate_many(s) == 0
    e_phys = prob.cost.energies(s[feasible]).min()
    assert e_phys == pytest.approx(exact_ground_state(m)[1])


def test_decode_rules():
    smap2 = SparsificationMap(1, ((0, 1),), {})
    assert decode(smap2, [1, 1]) [1] is True
    val, ok = decode(smap2, [1, -1])
    assert val.tolist() == [1] and not ok
    val, ok = decode(smap2, [-1, 1])
    assert val.tolist() == [-1] and not ok
    smap3 = SparsificationMap(1, ((0, 1, 2),), {})
    val, ok = decode(smap3, [1, -1, -1])
    assert val.tolist() == [-1] and not ok


def test_decode_many_shape_check():
    with pytest.raises(ModelError):
        decode_many(SparsificationMap(1, ((0, 1),), {}), np.ones((2, 3), dtype=np.int8))


def test_map_json_roundtrip(tmp_path, rng):
    m = random_model(5, rng, density=1.0)
    _, smap = sparsify(m, 3, min_degree_cap(m, 3))
    smap.save(tmp_path / "map.json")
    back = SparsificationMap.load(tmp_path / "map.json")
    assert back == smap
    json.loads((tmp_path / "map.json").read_text())


def test_problem_json_roundtrip(rng):
    m = random_model(5, rng)
    prob = ConstrainedProblem(m, ConstraintSet([[0, 1], [3, 4]]))
    back = ConstrainedProblem.from_json(json.loads(json.dumps(prob.to_json())))
    assert back.cost.edges() == m.edges()
    np.testing.assert_array_equal(back.constraints.pairs, prob.constraints.pairs)
