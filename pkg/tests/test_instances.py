import json

import numpy as np
import pytest

from tempergrid.constraints import sparsify
from tempergrid.instances import (WishartSpec, five_node_complete, generate_verified_wishart,
                                  generate_wishart, read_bundle, verify_planted, write_bundle,
                                  write_sparsified)
from tempergrid.ising import ModelError, save_model, IsingModel
from tempergrid.oracle import all_energies, codes_from_spins, enumerate_boltzmann, exact_ground_state


def test_planted_energy_definition():
    inst = generate_wishart(WishartSpec(20, 0.75, 3))
    assert inst.planted_energy == inst.model.energy(inst.planted_state)


def test_couplings_symmetric_zero_diag_no_fields():
    inst = generate_wishart(WishartSpec(12, 0.75, 1))
    j = inst.model.dense()
    np.testing.assert_array_equal(j, j.T)
    assert np.all(np.diag(j) == 0)
    assert np.all(inst.model.fields == 0)


def test_deterministic_bytes():
    a = generate_wishart(WishartSpec(16, 0.75, 9)).model.to_json()
    b = generate_wishart(WishartSpec(16, 0.75, 9)).model.to_json()
    assert json.dumps(a) == json.dumps(b)


def test_global_flip_degenerate():
    inst = generate_wishart(WishartSpec(12, 0.75, 4))
    assert inst.model.energy(-inst.planted_state) == pytest.approx(inst.planted_energy, rel=1e-12)


def test_planted_is_ground_state_fifty_seeds():
    # enumeration over 2^12 states, every seed
    failures = [seed for seed in range(50) if not verify_planted(generate_wishart(WishartSpec(12, 0.75, seed)))]
    assert failures == []


def test_verified_generator_bumps_seed(monkeypatch):
    from tempergrid import instances
    calls = []
    real = instances.verify_planted

    def flaky(inst):
        calls.append(inst.spec.seed)
        return len(calls) > 1 and real(inst)

    monkeypatch.setattr(instances, "verify_planted", flaky)
    inst = instances.generate_verified_wishart(WishartSpec(8, 0.75, 5))
    assert calls[:2] == [5, 6] and inst.spec.seed == 6


@pytest.mark.parametrize("n", [12, 24, 48])
def test_planted_energy_extensive(n):
    e = [generate_wishart(WishartSpec(n, 0.75, s)).planted_energy / n for s in range(5)]
    assert -2.0 < np.mean(e) < -0.05


def test_spec_validation():
    with pytest.raises(ValueError):
        WishartSpec(2)
    with pytest.raises(ValueError):
        WishartSpec(10, alpha=0.01)
    assert WishartSpec(16, 0.75).m == 12


def test_five_node_default():
    m = five_node_complete()
    assert m.n_spins == 5 and m.n_couplings == 10
    assert set(abs(w) for _, _, w in m.edges()) <= {1.0, 2.0}
    assert np.all(m.fields != 0)
    p = enumerate_boltzmann(m, 1.0).probabilities
    assert p.max() < 0.5  # not collapsed on one state
    e = all_energies(m)
    assert np.sum(e == e.min()) == 1


def test_five_node_ground_state_by_enumeration():
    s, e = exact_ground_state(five_node_complete())
    assert e == pytest.approx(-6.0, abs=1e-12)
    assert five_node_complete().energy(s) == e


def test_five_node_sparsified_size():
    prob, _ = sparsify(five_node_complete(), 2, 3)
    assert prob.n_spins == 10


def test_five_node_from_file(tmp_path):
    m = IsingModel.from_edges(5, [(i, j, 1.0) for i in range(5) for j in range(i + 1, 5)], [0.1] * 5)
    save_model(m, tmp_path / "k5.json")
    assert five_node_complete(tmp_path / "k5.json").edges() == m.edges()
    save_model(IsingModel.from_edges(5, [(0, 1, 1.0)]), tmp_path / "bad.json")
    with pytest.raises(ModelError):
        five_node_complete(tmp_path / "bad.json")


def test_bundle_roundtrip(tmp_path):
    inst = generate_wishart(WishartSpec(8, 0.75, 2))
    write_bundle(tmp_path / "b", inst.model, planted=inst.planted_state, planted_energy=inst.planted_energy,
                 meta={"kind": "wishart"})
    with pytest.raises(FileExistsError):
        write_bundle(tmp_path / "b", inst.model)
    prob, smap = sparsify(inst.model, 3, 5)
    write_sparsified(tmp_path / "b", prob, smap, {"copies": 3})
    b = read_bundle(tmp_path / "b")
    assert b.planted_energy == inst.planted_energy
    np.testing.assert_array_equal(b.planted, inst.planted_state)
    assert b.problem.n_spins == 24 and b.smap == smap
    assert {p.name for p in (tmp_path / "b").iterdir()} == {"model.json", "planted.json", "meta.json",
                                                             "physical.json", "map.json"}
