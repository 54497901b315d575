import os
import subprocess
import sys
from types import SimpleNamespace

import numpy as np
import pytest

from conftest import random_model
from tempergrid import engine
from tempergrid.constraints import ConstrainedProblem, ConstraintSet, sparsify
from tempergrid.engine import RunConfig, run_2dpt, run_jcolumn_pt
from tempergrid.instances import five_node_complete
from tempergrid.kernels import BACKENDS, MODE_ALTERNATE, MODE_BETA, MODE_BOTH, MODE_NONE, MODE_P, backend_name


def small_problem():
    prob, _ = sparsify(five_node_complete(), 2, 3)
    return prob


GRID = SimpleNamespace(betas=[0.3, 0.7, 1.2], penalties=[0.5, 1.5, 3.0])


def assert_same_trace(a, b):
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.f, b.f)
    np.testing.assert_array_equal(a.g, b.g)
    np.testing.assert_array_equal(a.acc_p, b.acc_p)
    np.testing.assert_array_equal(a.acc_beta, b.acc_beta)
    np.testing.assert_array_equal(a.final.states, b.final.states)


@pytest.mark.parametrize("both", [False, True])
def test_numpy_and_numba_agree(both):
    prob = small_problem()
    cfg = RunConfig(600, 3, seed=11, store_target_only=False, both_directions=both)
    a = run_2dpt(prob, GRID, cfg, backend_name="numba")
    b = run_2dpt(prob, GRID, cfg, backend_name="numpy")
    assert_same_trace(a, b)


def test_backends_agree_on_histograms():
    prob = small_problem()
    cfg = RunConfig(200, 1, seed=2, record_histograms=True, burn_in_rounds=20)
    a = run_2dpt(prob, GRID, cfg, backend_name="numba")
    b = run_2dpt(prob, GRID, cfg, backend_name="numpy")
    np.testing.assert_array_equal(a.histograms, b.histograms)


def test_chunk_size_does_not_change_results(monkeypatch):
    prob = small_problem()
    cfg = RunConfig(900, 5, seed=4, store_target_only=False)
    ref = run_2dpt(prob, GRID, cfg)
    monkeypatch.setattr(engine, "CHUNK_BUDGET", 1000)
    assert_same_trace(ref, run_2dpt(prob, GRID, cfg))


@pytest.mark.parametrize("threads", [2, 3, 9])
def test_thread_count_does_not_change_results(threads):
    prob = small_problem()
    cfg = RunConfig(500, 5, seed=8, store_target_only=False)
    assert_same_trace(run_2dpt(prob, GRID, cfg, threads=1), run_2dpt(prob, GRID, cfg, threads=threads))


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("TEMPERGRID_THREADS", "3")
    assert engine.resolve_threads() == 3
    with pytest.raises(engine.ConfigError):
        engine.resolve_threads(0)


def test_baseline_backends_agree():
    prob = small_problem()
    cfg = RunConfig(300, 3, seed=1)
    a = run_jcolumn_pt(prob, [0.5, 1.0], 2.0, 3, cfg, backend_name="numba")
    b = run_jcolumn_pt(prob, [0.5, 1.0], 2.0, 3, cfg, backend_name="numpy")
    np.testing.assert_array_equal(a.best_f, b.best_f)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_phase_table(name):
    ph = BACKENDS[name].phases
    # rounds 1..8 under the alternating rule: P P beta beta P P beta beta
    got = [tuple(bool(x) for x in ph(n, MODE_ALTERNATE)[:2]) for n in range(1, 9)]
    assert got == [(True, False)] * 2 + [(False, True)] * 2 + [(True, False)] * 2 + [(False, True)] * 2
    assert [ph(n, MODE_ALTERNATE)[2] for n in range(1, 5)] == [0, 1, 0, 1]
    assert tuple(ph(3, MODE_BOTH)[:2]) == (True, True)
    assert tuple(ph(3, MODE_BETA)[:2]) == (False, True)
    assert tuple(ph(3, MODE_P)[:2]) == (True, False)
    assert tuple(ph(3, MODE_NONE)[:2]) == (False, False)


def test_env_selects_numpy_backend():
    code = "from tempergrid.kernels import backend_name; print(backend_name())"
    env = dict(os.environ, TEMPERGRID_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["TEMPERGRID_BACKEND"] = "fortran"
    bad = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert bad.returncode != 0


def test_default_backend_is_numba():
    if os.environ.get("TEMPERGRID_BACKEND"):
        pytest.skip("backend forced by environment")
    assert backend_name() == "numba"


def test_benchmark_script_agrees_across_backends():
    import pathlib
    import subprocess
    import sys
    script = pathlib.Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    out = subprocess.run([sys.executable, str(script), "--n", "8", "--sweeps", "40", "--repeats", "1"],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert "traces identical: True" in out.stdout
