import math
from types import SimpleNamespace

import numpy as np
import pytest

from tempergrid.analysis import (AnalysisError, ResidualCurve, fraction_in_band, fss_collapse, kl_experiment,
                                 log_checkpoints, logical_energies, loglog_slope, read_curve_csv,
                                 residual_curve, sign_test, swap_rate_report, time_to_target,
                                 write_collapse_json, write_curve_csv, write_curve_dat)
from tempergrid.constraints import sparsify
from tempergrid.engine import RunConfig, run_2dpt, simulate
from tempergrid.instances import five_node_complete
from tempergrid.kernels import MODE_P


def synthetic_curves(mu, sizes=(16, 24, 32, 48), t=None):
    t = np.logspace(2, 7, 60) if t is None else t
    g = lambda x: 0.5 * (1 + x) ** -0.7  # noqa: E731
    return [ResidualCurve(n, t, g(t * n ** -mu), np.zeros_like(t), 1, 1) for n in sizes]


def test_residual_flat_zero_at_ground_state():
    t = np.arange(1, 11) * 50.0
    c = residual_curve([[np.full(10, -3.0)] * 2], [-3.0], 8, t)
    np.testing.assert_array_equal(c.rho, 0.0)


def test_residual_single_run_degenerate():
    c = residual_curve([[np.linspace(0, -1, 5)]], [-1.0], 4, np.arange(5))
    assert c.degenerate and np.all(c.ci95 == 0)


def test_residual_shift_by_c_over_n():
    rng = np.random.default_rng(0)
    t = np.arange(20)
    e = [[rng.normal(size=20) for _ in range(3)] for _ in range(2)]
    a = residual_curve(e, [-5.0, -4.0], 10, t)
    b = residual_curve(e, [-5.5, -4.5], 10, t)
    np.testing.assert_allclose(b.rho - a.rho, 0.05, atol=1e-12)


def test_residual_requires_ground_energy():
    with pytest.raises(AnalysisError):
        residual_curve([[np.zeros(3)]], None, 4, np.arange(3))
    with pytest.raises(AnalysisError):
        residual_curve([[np.zeros(3)]], [float("nan")], 4, np.arange(3))


def test_bootstrap_width_scales():
    rng = np.random.default_rng(1)
    t = np.arange(40)
    widths = []
    for trials in (100, 400):
        e = [[rng.normal(size=40) for _ in range(trials)]]
        widths.append(residual_curve(e, [0.0], 1, t, n_boot=2000).ci95.mean())
    assert widths[0] / widths[1] == pytest.approx(2.0, rel=0.2)


def test_logical_energies_decode_and_strict():
    logical = five_node_complete()
    prob, smap = sparsify(logical, 2, 3)
    tr = run_2dpt(prob, SimpleNamespace(betas=[0.2], penalties=[0.1]), RunConfig(200, 1, seed=2))
    e = logical_energies(tr, logical, smap)
    strict = logical_energies(tr, logical, smap, strict=True)
    assert np.all(np.isfinite(e))
    feasible = tr.target_g == 0
    np.testing.assert_allclose(strict[feasible], tr.target_f[feasible])
    assert np.all(np.isnan(strict[~feasible]))


def test_collapse_identical_curves_mu_zero():
    t = np.logspace(1, 5, 30)
    curves = [ResidualCurve(n, t, 1 / np.sqrt(t), np.zeros(30), 1, 1) for n in (8, 16, 32)]
    res = fss_collapse(curves)
    assert res.mu == 0.0 and res.objective == pytest.approx(0.0, abs=1e-20)


def test_collapse_recovers_planted_exponent():
    res = fss_collapse(synthetic_curves(5.0), window=(1e2, 1e30), b=0.0)
    assert abs(res.mu - 5.0) <= 0.1 + 1e-9


def test_collapse_relabel_and_time_rescale_invariance():
    curves = synthetic_curves(3.0, t=np.logspace(2, 9, 80))
    a = fss_collapse(curves)
    b = fss_collapse(curves[::-1])
    assert a.mu == b.mu and a.objective == pytest.approx(b.objective)
    scaled = [ResidualCurve(c.n_logical, 10 * c.t, c.rho, c.ci95, 1, 1) for c in curves]
    assert fss_collapse(scaled).mu == a.mu


def test_collapse_needs_three_sizes():
    with pytest.raises(AnalysisError, match="three"):
        fss_collapse(synthetic_curves(1.0, sizes=(16, 32)))


def test_collapse_window_excludes_all():
    with pytest.raises(AnalysisError):
        fss_collapse(synthetic_curves(1.0), window=(1e12, 1e13))


def test_collapse_json(tmp_path):
    res = fss_collapse(synthetic_curves(2.0))
    write_collapse_json(res, tmp_path / "c.json", {"sizes": [16, 24, 32, 48]})
    import json
    obj = json.loads((tmp_path / "c.json").read_text())
    assert obj["mu"] == res.mu and obj["b"] == 0.0 and len(obj["window"]) == 2


def test_swap_report_empty_for_single_replica():
    tr = run_2dpt(five_node_complete(), SimpleNamespace(betas=[1.0], penalties=[0.0]), RunConfig(10, 1))
    assert swap_rate_report(tr) == {"P": [], "beta": []}


def test_swap_report_duplicate_columns():
    prob, _ = sparsify(five_node_complete(), 2, 3)
    tr = simulate(prob, [1.0], [3.0, 3.0, 3.0], RunConfig(40, 1, seed=1), mode=MODE_P)
    rep = swap_rate_report(tr)
    assert [r["rate"] for r in rep["P"]] == [1.0, 1.0]
    # each pair is tried every other round
    assert [r["attempts"] for r in rep["P"]] == [20, 20]
    assert fraction_in_band(rep, "P") == 0.0


def test_time_to_target():
    assert time_to_target([10, 20, 30], [5, 1, 0], 1.0) == 20
    assert time_to_target([10, 20], [5, np.nan], 1.0) == math.inf


def test_sign_test():
    wins, n, p = sign_test(np.arange(20), np.arange(20) + 1)
    assert (wins, n) == (20, 20) and p == pytest.approx(2.0**-20)
    wins, n, p = sign_test([1] * 15 + [3] * 5, [2] * 20)
    assert p == pytest.approx(sum(math.comb(20, k) for k in range(15, 21)) / 2**20)
    assert p < 0.05
    assert sign_test([1, 2], [1, 2]) == (0, 0, 1.0)


def test_loglog_slope():
    t = np.logspace(1, 4, 20)
    assert loglog_slope(t, 3 / t, 10, 1e4) == pytest.approx(-1.0)
    with pytest.raises(AnalysisError):
        loglog_slope(t, 1 / t, 1e5, 1e6)


def test_log_checkpoints():
    c = log_checkpoints(1000)
    assert c[0] == 1 and c[-1] == 1000 and np.all(np.diff(c) > 0)


def test_curve_csv_and_dat_roundtrip(tmp_path):
    c = ResidualCurve(16, np.array([50.0, 100.0]), np.array([0.3, 0.1]), np.array([0.01, 0.02]), 5, 10)
    write_curve_csv(c, tmp_path / "c.csv")
    back = read_curve_csv(tmp_path / "c.csv")
    assert back.n_logical == 16 and back.trials == 5 and back.instances == 10
    np.testing.assert_array_equal(back.rho, c.rho)
    write_curve_dat(c, tmp_path / "c.dat")
    rows = [l for l in (tmp_path / "c.dat").read_text().splitlines() if not l.startswith("#")]
    assert len(rows) == 2 and len(rows[0].split()) == 3


def test_kl_experiment_small():
    logical = five_node_complete()
    prob, smap = sparsify(logical, 2, 3)
    res = kl_experiment(prob, smap, logical, total_sweeps=5000, sweeps_per_swap=50, n_chains=3)
    assert res.per_chain.shape == (3, res.samples.size)
    assert res.reference[-1] == pytest.approx(31 / (2 * 100))
    assert np.all(res.mean_kl >= 0)
    off = kl_experiment(prob, smap, logical, total_sweeps=5000, sweeps_per_swap=50, n_chains=2,
                        swaps=False, discard_infeasible=True)
    assert off.per_chain.shape[0] == 2
