"""Post-processing: residual-energy curves, KL-vs-time, swap rates and
finite-size-scaling collapse.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints import ConstrainedProblem, SparsificationMap, decode_many
from .engine import BaselineTrace, RunConfig, Trace, run_2dpt
from .ising import IsingModel
from .oracle import codes_from_spins, enumerate_boltzmann, expected_kl_bias, kl_curve


class AnalysisError(ValueError):
    pass


# --- residual energy -------------------------------------------------------------

@dataclass
class ResidualCurve:
    n_logical: int
    t: np.ndarray
    rho: np.ndarray
    ci95: np.ndarray
    trials: int
    instances: int
    degenerate: bool = False

    @property
    def points(self):
        return list(zip(self.t.tolist(), self.rho.tolist(), self.ci95.tolist()))


def logical_energies(trace: Trace, model: IsingModel, smap: SparsificationMap | None = None, *,
                     strict: bool = False) -> np.ndarray:
    """Logical cost energy of the stored target replica per round.

    Infeasible samples are decoded by majority vote, or become NaN when
    ``strict``. For a baseline trace the best feasible energy is returned
    as-is (NaN for rounds without a feasible sample).
    """
    if isinstance(trace, BaselineTrace):
        return np.asarray(trace.best_f, dtype=np.float64).copy()
    states = trace.target_states
    if smap is None:
        e = model.energies(states)
        feasible = trace.target_g == 0
    else:
        logical, feasible = decode_many(smap, states)
        e = model.energies(logical)
    if strict:
        e = np.where(feasible, e, np.nan)
    return e


def residual_curve(energies, e_gs, n_logical: int, t, *, n_boot: int = 1000, seed: int = 0) -> ResidualCurve:
    """Average ``rho_E = (E - E_gs) / N`` over instances and trials.

    ``energies[k]`` is a list of per-trial logical-energy series for instance
    ``k`` (all the same length as ``t``); ``e_gs[k]`` its ground-state energy.
    The 95% interval is a percentile bootstrap over (instance, trial) units,
    reported as a half-width.
    """
    if len(energies) == 0:
        raise AnalysisError("no instances")
    if e_gs is None or len(e_gs) != len(energies):
        raise AnalysisError("a ground-state energy is required for every instance")
    t = np.asarray(t, dtype=np.float64)
    rows = []
    trials = None
    for series, egs in zip(energies, e_gs):
        if egs is None or not np.isfinite(egs):
            raise AnalysisError("missing ground-state energy")
        if trials is None:
            trials = len(series)
        for e in series:
            e = np.asarray(e, dtype=np.float64)
            if e.shape != t.shape:
                raise AnalysisError("energy series and time axis differ in length")
            rows.append((e - egs) / n_logical)
    units = np.array(rows)
    with np.errstate(invalid="ignore"):
        rho = np.nanmean(units, axis=0) if units.shape[0] else units
    n_units = units.shape[0]
    if n_units < 2:
        return ResidualCurve(n_logical, t, rho, np.zeros_like(rho), trials, len(energies), True)
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, n_units, size=(n_boot, n_units))
    with np.errstate(invalid="ignore"), _quiet_nan():
        boot = np.nanmean(units[picks], axis=1)
        lo, hi = np.nanpercentile(boot, [2.5, 97.5], axis=0)
    return ResidualCurve(n_logical, t, rho, (hi - lo) / 2, trials, len(energies), False)


class _quiet_nan:
    def __enter__(self):
        import warnings
        self._w = warnings.catch_warnings()
        self._w.__enter__()
        warnings.simplefilter("ignore", RuntimeWarning)

    def __exit__(self, *exc):
        self._w.__exit__(*exc)


def time_to_target(t, energies, threshold: float) -> float:
    """First ``t`` at which ``energies <= threshold`` (NaN never counts); inf if never."""
    e = np.nan_to_num(np.asarray(energies, dtype=np.float64), nan=np.inf)
    hit = np.flatnonzero(e <= threshold)
    return float(np.asarray(t)[hit[0]]) if hit.size else math.inf


def sign_test(a, b) -> tuple[int, int, float]:
    """One-sided sign test that ``a`` tends to be smaller than ``b``.

    Returns (wins, informative pairs, p-value); ties are dropped.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    wins = int(np.sum(a < b))
    n = int(np.sum(a != b))
    p = sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0**n if n else 1.0
    return wins, n, float(p)


# --- finite-size scaling ---------------------------------------------------------

@dataclass
class CollapseResult:
    b: float
    mu: float
    objective: float
    window: tuple
    mu_grid: np.ndarray = field(repr=False, default=None)
    objectives: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {"b": self.b, "mu": self.mu, "objective": self.objective,
                "window": [float(w) for w in self.window],
                "mu_grid": self.mu_grid.tolist(),
                "objectives": [None if not np.isfinite(o) else float(o) for o in self.objectives]}


def _collapse_objective(logs, mu, b, n_grid):
    xs, ys = [], []
    for log_n, lt, lr in logs:
        xs.append(lt - mu * log_n)
        ys.append(lr + b * log_n)
    lo = max(x[0] for x in xs)
    hi = min(x[-1] for x in xs)
    if not hi > lo:
        return math.inf
    grid = np.linspace(lo, hi, n_grid)
    curves = np.array([np.interp(grid, x, y) for x, y in zip(xs, ys)])
    ref = np.median(curves, axis=0)
    return float(np.mean((curves - ref) ** 2))


def fss_collapse(curves, b: float = 0.0, mu_grid=None, window=None, n_grid: int = 64) -> CollapseResult:
    """Fit ``rho N^b = F(t N^-mu)`` by grid search over ``mu``.

    Curves are rescaled in log-log space, interpolated linearly onto a shared
    grid spanning their common abscissa and compared with the pointwise median
    curve; the objective is the mean squared deviation.
    """
    if mu_grid is None:
        mu_grid = np.round(np.arange(0.0, 15.0 + 1e-9, 0.1), 10)
    mu_grid = np.asarray(mu_grid, dtype=np.float64)
    sizes = {c.n_logical for c in curves}
    if len(sizes) < 3:
        raise AnalysisError("collapse needs at least three distinct system sizes")
    if window is None:
        window = (min(float(c.t[0]) for c in curves), max(float(c.t[-1]) for c in curves))
    t_min, t_max = window
    logs = []
    for c in curves:
        keep = (c.t >= t_min) & (c.t <= t_max) & np.isfinite(c.rho) & (c.rho > 0)
        if keep.sum() < 2:
            raise AnalysisError(f"window {window} leaves fewer than 2 points for N={c.n_logical}")
        logs.append((math.log(c.n_logical), np.log(c.t[keep]), np.log(c.rho[keep])))
    obj = np.array([_collapse_objective(logs, mu, b, n_grid) for mu in mu_grid])
    if not np.any(np.isfinite(obj)):
        raise AnalysisError("no mu in the grid gives overlapping rescaled curves")
    k = int(np.argmin(obj))
    return CollapseResult(float(b), float(mu_grid[k]), float(obj[k]), (t_min, t_max), mu_grid, obj)


# --- swap rates ------------------------------------------------------------------

def swap_rate_report(trace: Trace) -> dict:
    """Per-pair acceptance rates; pairs never attempted are left out."""
    (acc_p, att_p), (acc_b, att_b) = trace.acceptance_counts()
    out = {"P": [], "beta": []}
    for i, p in zip(*np.nonzero(att_p)):
        out["P"].append({"row": int(i), "pair": [int(p), int(p) + 1],
                         "rate": float(acc_p[i, p] / att_p[i, p]), "attempts": int(att_p[i, p])})
    for bi, j in zip(*np.nonzero(att_b)):
        out["beta"].append({"column": int(j), "pair": [int(bi), int(bi) + 1],
                            "rate": float(acc_b[bi, j] / att_b[bi, j]), "attempts": int(att_b[bi, j])})
    return out


def fraction_in_band(report: dict, direction: str, lo: float = 0.35, hi: float = 0.65) -> float:
    rates = np.array([r["rate"] for r in report[direction]])
    return float(np.mean((rates >= lo) & (rates <= hi))) if rates.size else math.nan


# --- KL experiment ---------------------------------------------------------------

@dataclass
class KLResult:
    sweeps: np.ndarray
    samples: np.ndarray
    mean_kl: np.ndarray
    per_chain: np.ndarray
    reference: np.ndarray

    def slope(self, t_min: float, t_max: float) -> float:
        return loglog_slope(self.sweeps, self.mean_kl, t_min, t_max)


def loglog_slope(t, y, t_min: float, t_max: float) -> float:
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    keep = (t >= t_min) & (t <= t_max) & (y > 0)
    if keep.sum() < 2:
        raise AnalysisError("fewer than two points in the fit range")
    return float(np.polyfit(np.log(t[keep]), np.log(y[keep]), 1)[0])


def log_checkpoints(n: int, per_decade: int = 10) -> np.ndarray:
    pts = np.unique(np.round(np.logspace(0, math.log10(n), int(per_decade * math.log10(n)) + 1)).astype(np.int64))
    return pts[(pts >= 1) & (pts <= n)]


def kl_experiment(problem: ConstrainedProblem, smap: SparsificationMap, logical: IsingModel, *,
                  betas=(1.0,), penalties=(2.0, 4.0, 6.0, 8.0), total_sweeps: int = 100_000,
                  sweeps_per_swap: int = 500, n_chains: int = 100, beta_target: float = 1.0,
                  swaps: bool = True, discard_infeasible: bool = False, seed: int = 0,
                  checkpoints=None, threads=None, progress=None) -> KLResult:
    """KL of the time-accumulated, decoded target-replica histogram against the
    exact logical Boltzmann law, averaged over independent chains.

    With ``swaps=False`` only the target replica (last beta, last penalty) is
    simulated. One sample is taken per swap round.
    """
    from types import SimpleNamespace

    exact = enumerate_boltzmann(logical, beta_target)
    if swaps:
        sched = SimpleNamespace(betas=np.asarray(betas, float), penalties=np.asarray(penalties, float))
    else:
        sched = SimpleNamespace(betas=np.asarray(betas[-1:], float), penalties=np.asarray(penalties[-1:], float))
    n_rounds = total_sweeps // sweeps_per_swap
    if checkpoints is None:
        checkpoints = log_checkpoints(n_rounds)
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    seeds = np.random.SeedSequence(seed).generate_state(n_chains, np.uint64)
    per_chain = np.empty((n_chains, checkpoints.size))
    for c in range(n_chains):
        tr = run_2dpt(problem, sched, RunConfig(total_sweeps, sweeps_per_swap, int(seeds[c])), threads=threads)
        logical_states, feasible = decode_many(smap, tr.target_states)
        codes = codes_from_spins(logical_states)
        if discard_infeasible:
            idx = np.flatnonzero(feasible)
            cnt = np.searchsorted(idx, checkpoints, side="right")
            curve = np.full(checkpoints.size, np.nan)
            ok = cnt > 0
            if ok.any():
                curve[ok] = kl_curve(codes[idx], exact, cnt[ok])
            per_chain[c] = curve
        else:
            per_chain[c] = kl_curve(codes, exact, checkpoints)
        if progress is not None:
            progress(c + 1, n_chains)
    k = 1 << logical.n_spins
    ref = np.array([expected_kl_bias(k, int(t)) for t in checkpoints])
    with _quiet_nan():
        mean = np.nanmean(per_chain, axis=0)
    return KLResult(checkpoints * sweeps_per_swap, checkpoints, mean, per_chain, ref)


# --- writers ---------------------------------------------------------------------

def write_kl_csv(res: KLResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweeps", "samples", "kl", "reference"])
        for row in zip(res.sweeps, res.samples, res.mean_kl, res.reference):
            w.writerow([int(row[0]), int(row[1]), repr(float(row[2])), repr(float(row[3]))])


def write_curve_csv(curve: ResidualCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# n_logical={curve.n_logical} trials={curve.trials} instances={curve.instances} "
                 f"degenerate={int(curve.degenerate)}\n")
        w = csv.writer(fh)
        w.writerow(["t", "rho_E", "ci95"])
        for t, r, c in curve.points:
            w.writerow([repr(t), repr(r), repr(c)])


def read_curve_csv(path) -> ResidualCurve:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise AnalysisError(f"{path}: missing '# n_logical=...' header")
    meta = dict(kv.split("=") for kv in lines[0][1:].split())
    rows = list(csv.DictReader(lines[1:]))
    col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
    return ResidualCurve(int(meta["n_logical"]), col("t"), col("rho_E"), col("ci95"),
                         int(meta.get("trials", 0)), int(meta.get("instances", 0)),
                         bool(int(meta.get("degenerate", 0))))


def write_curve_dat(curve: ResidualCurve, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# N={curve.n_logical}\n# t rho_E ci95\n")
        for t, r, c in curve.points:
            fh.write(f"{t:.10g} {r:.10g} {c:.10g}\n")


def write_collapse_json(res: CollapseResult, path, extra: dict | None = None) -> None:
    obj = res.to_json()
    if extra:
        obj.update(extra)
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")
