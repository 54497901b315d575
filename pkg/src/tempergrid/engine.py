"""Two-dimensional parallel tempering over a (beta, penalty) replica grid.

Each round every replica performs ``sweeps_per_swap`` Metropolis sweeps at its
own ``(beta_i, P_j)``; then one swap phase runs. Rounds alternate between
penalty-direction and beta-direction phases in pairs (P, P, beta, beta, ...),
and within a phase odd rounds try pairs ``(0,1), (2,3), ...`` while even
rounds try ``(1,2), (3,4), ...``. Configurations move, parameters stay put.
A grid with a single row (column) has no beta (P) pairs, so it runs its one
existing phase every round instead of idling half the rounds.

Randomness: the master seed is split with :class:`numpy.random.SeedSequence`
into one stream per replica (row-major) plus one stream for swap decisions.
Each replica stream first draws its initial spins, then one uniform per
proposed flip; the swap stream draws a fixed block of uniforms per round.
Results therefore do not depend on thread count or chunking.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstrainedProblem
from .ising import IsingModel
from .kernels import MODE_ALTERNATE, MODE_BETA, MODE_BOTH, MODE_NONE, MODE_P, backend

CHUNK_BUDGET = 1 << 22  # uniforms drawn per chunk
MAX_HIST_SPINS = 24


class ConfigError(ValueError):
    pass


def p_swap_probability(beta: float, d_penalty: float, d_g: float) -> float:
    x = beta * d_penalty * d_g
    return 1.0 if x >= 0 else math.exp(x)


def beta_swap_probability(d_beta: float, d_energy: float) -> float:
    x = d_beta * d_energy
    return 1.0 if x >= 0 else math.exp(x)


def general_swap_probability(beta_a: float, beta_b: float, d_ea: float, d_eb: float) -> float:
    """``min(1, exp(beta_a dE_a + beta_b dE_b))`` with ``dE_a = E_a(S_a) - E_a(S_b)``
    and ``dE_b = E_b(S_b) - E_b(S_a)``."""
    x = beta_a * d_ea + beta_b * d_eb
    return 1.0 if x >= 0 else math.exp(x)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("TEMPERGRID_THREADS", "1") or 1)
    if threads < 1:
        raise ConfigError("thread count must be >= 1")
    return int(threads)


@dataclass(frozen=True)
class RunConfig:
    total_sweeps: int
    sweeps_per_swap: int
    seed: int = 0
    store_target_only: bool = True
    store_states: bool = True
    both_directions: bool = False
    record_histograms: bool = False
    burn_in_rounds: int = 0

    def __post_init__(self):
        if self.sweeps_per_swap < 1:
            raise ConfigError("sweeps_per_swap must be >= 1")
        if self.total_sweeps < self.sweeps_per_swap:
            raise ConfigError("total_sweeps must be >= sweeps_per_swap")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.burn_in_rounds < 0:
            raise ConfigError("burn_in_rounds must be >= 0")

    @property
    def n_rounds(self) -> int:
        return self.total_sweeps // self.sweeps_per_swap


@dataclass
class ReplicaGrid:
    """Flat row-major replica storage: replica ``i * J + j`` is at (beta_i, P_j)."""

    betas: np.ndarray
    penalties: np.ndarray
    states: np.ndarray  # (I*J, N) int8
    f: np.ndarray
    g: np.ndarray

    @property
    def shape(self):
        return len(self.betas), len(self.penalties)

    def state(self, i: int, j: int) -> np.ndarray:
        return self.states[i * len(self.penalties) + j]

    def energies(self):
        """Cached (f, g) as ``I x J`` arrays."""
        return self.f.reshape(self.shape), self.g.reshape(self.shape)

    def check_consistency(self, problem: ConstrainedProblem, rtol: float = 1e-6) -> bool:
        f = problem.cost.energies(self.states)
        g = problem.constraints.evaluate_many(self.states)
        scale = np.maximum(1.0, np.abs(f))
        return bool(np.all(np.abs(f - self.f) <= rtol * scale) and np.array_equal(g, self.g))


def _check_ladder(values, name, allow_zero=True):
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ConfigError(f"{name} must be non-empty")
    if not np.all(np.isfinite(v)):
        raise ConfigError(f"{name} must be finite")
    if np.any(v < 0) or (not allow_zero and np.any(v == 0)):
        raise ConfigError(f"{name} must be non-negative")
    if np.any(np.diff(v) <= 0):
        raise ConfigError(f"{name} must be strictly increasing")
    return v


@dataclass
class Trace:
    betas: np.ndarray
    penalties: np.ndarray
    sweeps_per_swap: int
    store_idx: np.ndarray
    f: np.ndarray  # (rounds, stored)
    g: np.ndarray
    states: np.ndarray | None  # (rounds, stored, N) int8
    acc_p: np.ndarray  # (rounds, I, J-1): -1 not attempted, 0 rejected, 1 accepted
    acc_beta: np.ndarray  # (rounds, I-1, J)
    final: ReplicaGrid
    histograms: np.ndarray | None = None
    seed: int = 0

    @property
    def n_rounds(self) -> int:
        return self.f.shape[0]

    @property
    def sweep_count(self) -> np.ndarray:
        return (np.arange(self.n_rounds, dtype=np.int64) + 1) * self.sweeps_per_swap

    def _target_col(self) -> int:
        target = len(self.betas) * len(self.penalties) - 1
        hits = np.flatnonzero(self.store_idx == target)
        if hits.size == 0:
            raise ValueError("target replica was not stored")
        return int(hits[0])

    @property
    def target_f(self) -> np.ndarray:
        return self.f[:, self._target_col()]

    @property
    def target_g(self) -> np.ndarray:
        return self.g[:, self._target_col()]

    @property
    def target_states(self) -> np.ndarray:
        if self.states is None:
            raise ValueError("states were not stored")
        return self.states[:, self._target_col()]

    def acceptance_counts(self):
        """((accepted_P, attempted_P), (accepted_beta, attempted_beta)) per pair."""
        out = []
        for acc in (self.acc_p, self.acc_beta):
            out.append(((acc == 1).sum(axis=0), (acc >= 0).sum(axis=0)))
        return tuple(out)

    def acceptance_rates(self):
        """Per-pair acceptance rates (NaN where never attempted)."""
        rates = []
        for accepted, attempted in self.acceptance_counts():
            with np.errstate(invalid="ignore", divide="ignore"):
                rates.append(np.where(attempted > 0, accepted / np.maximum(attempted, 1), np.nan))
        return tuple(rates)


@dataclass
class BaselineTrace(Trace):
    """J-column PT output: per round, best feasible cold-replica energy across columns."""

    best_f: np.ndarray = field(default=None)  # NaN when no column is feasible
    best_states: np.ndarray | None = None
    feasible_fraction: float = 0.0
    penalty: float = 0.0


def _initial_states(rngs, n):
    return np.stack([np.where(r.random(n) < 0.5, -1, 1).astype(np.int8) for r in rngs])


def simulate(problem: ConstrainedProblem, betas, penalties, cfg: RunConfig, *, mode=MODE_ALTERNATE,
             store_idx=None, initial=None, threads=None, backend_name=None) -> Trace:
    """Core driver shared by 2D-PT, J-column PT and schedule probes.

    No ordering checks are made on ``betas``/``penalties`` here.
    """
    be = backend(backend_name)
    betas = np.ascontiguousarray(betas, dtype=np.float64)
    pens = np.ascontiguousarray(penalties, dtype=np.float64)
    n_i, n_j = len(betas), len(pens)
    n_rep = n_i * n_j
    n = problem.n_spins
    threads = resolve_threads(threads)

    seqs = np.random.SeedSequence(cfg.seed).spawn(n_rep + 1)
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in seqs]
    if initial is None:
        states = _initial_states(rngs[:n_rep], n)
    else:
        states = np.array(initial, dtype=np.int8).reshape(n_rep, n)
        if not np.all(np.abs(states) == 1):
            raise ConfigError("initial spins must be -1 or +1")
    f = problem.cost.energies(states)
    g = problem.constraints.evaluate_many(states).astype(np.float64)
    betas_r = np.repeat(betas, n_j)
    pens_r = np.tile(pens, n_i)

    if store_idx is None:
        store_idx = np.array([n_rep - 1]) if cfg.store_target_only else np.arange(n_rep)
    store_idx = np.ascontiguousarray(store_idx, dtype=np.int64)
    n_store = store_idx.size
    n_rounds = cfg.n_rounds
    keep = bool(cfg.store_states)
    out_s = np.zeros((n_rounds, n_store, n if keep else 0), dtype=np.int8)
    out_f = np.zeros((n_rounds, n_store))
    out_g = np.zeros((n_rounds, n_store))
    acc_p = np.full((n_rounds, n_i, n_j - 1), -1, dtype=np.int8)
    acc_b = np.full((n_rounds, n_i - 1, n_j), -1, dtype=np.int8)
    if cfg.record_histograms:
        if n > MAX_HIST_SPINS:
            raise ConfigError(f"histograms need n_spins <= {MAX_HIST_SPINS}")
        hist = np.zeros((n_rep, 1 << n), dtype=np.int64)
    else:
        hist = np.zeros((0, 0), dtype=np.int64)
    hist_start = cfg.burn_in_rounds + 1

    arrays = problem.kernel_arrays()
    n_swap_u = n_i * (n_j - 1) + (n_i - 1) * n_j
    per_round = cfg.sweeps_per_swap * n
    chunk = max(1, min(n_rounds, CHUNK_BUDGET // max(1, n_rep * per_round + n_swap_u)))
    blocks = np.array_split(np.arange(n_rep), min(threads, n_rep))
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for start in range(0, n_rounds, chunk):
            k = min(chunk, n_rounds - start)
            unif = np.empty((n_rep, k * per_round))
            for r in range(n_rep):
                unif[r] = rngs[r].random(k * per_round)
            su = rngs[n_rep].random((k, n_swap_u))
            sl = slice(start, start + k)
            if pool is None:
                be.run_chunk(*arrays, betas, pens, betas_r, pens_r, states, f, g, unif, su,
                             start + 1, cfg.sweeps_per_swap, mode, acc_p[sl], acc_b[sl], store_idx,
                             keep, out_s[sl], out_f[sl], out_g[sl], hist, hist_start)
                continue
            for q in range(k):
                futures = [pool.submit(be.sweep_replicas, *arrays, betas_r, pens_r, states, f, g,
                                       unif, q * per_round, cfg.sweeps_per_swap, int(b[0]), int(b[-1]) + 1)
                           for b in blocks if b.size]
                for fut in futures:
                    fut.result()
                t = start + q
                be.finish_round(betas, pens, states, f, g, su[q], t + 1, mode, acc_p[t], acc_b[t],
                                store_idx, keep, out_s[t], out_f[t], out_g[t], hist, hist_start)
    finally:
        if pool is not None:
            pool.shutdown()

    final = ReplicaGrid(betas, pens, states, f, g)
    return Trace(betas, pens, cfg.sweeps_per_swap, store_idx, out_f, out_g, out_s if keep else None,
                 acc_p, acc_b, final, hist if cfg.record_histograms else None, cfg.seed)


def run_2dpt(problem: ConstrainedProblem, schedule, cfg: RunConfig, *, threads=None, initial=None,
             backend_name=None) -> Trace:
    """Run 2D-PT on ``schedule.betas x schedule.penalties``; see module docstring."""
    if isinstance(problem, IsingModel):
        problem = ConstrainedProblem.unconstrained(problem)
    betas = _check_ladder(schedule.betas, "betas")
    pens = _check_ladder(schedule.penalties, "penalties")
    mode = MODE_BOTH if cfg.both_directions else MODE_ALTERNATE
    if len(betas) == 1:
        mode = MODE_P
    elif len(pens) == 1:
        mode = MODE_BETA
    return simulate(problem, betas, pens, cfg, mode=mode, initial=initial, threads=threads,
                    backend_name=backend_name)


def run_jcolumn_pt(problem: ConstrainedProblem, betas, penalty: float, j_repeats: int,
                   cfg: RunConfig, *, threads=None, backend_name=None) -> BaselineTrace:
    """``j_repeats`` independent standard-PT columns at a fixed penalty.

    Columns share the beta ladder and get independent replica streams; only
    beta-swaps occur (every round, alternating pair parity). The cold
    replica of each column is stored every round.
    """
    if penalty <= 0:
        raise ConfigError("penalty must be positive")
    if j_repeats < 1:
        raise ConfigError("j_repeats must be >= 1")
    betas = _check_ladder(betas, "betas")
    n_i = len(betas)
    pens = np.full(j_repeats, float(penalty))
    store = (n_i - 1) * j_repeats + np.arange(j_repeats)
    tr = simulate(problem, betas, pens, cfg, mode=MODE_BETA, store_idx=store, threads=threads,
                  backend_name=backend_name)
    feasible = tr.g == 0
    masked = np.where(feasible, tr.f, np.inf)
    col = np.argmin(masked, axis=1)
    rows = np.arange(tr.n_rounds)
    best = masked[rows, col]
    best = np.where(np.isfinite(best), best, np.nan)
    best_states = tr.states[rows, col] if tr.states is not None else None
    return BaselineTrace(**tr.__dict__, best_f=best, best_states=best_states,
                         feasible_fraction=float(feasible.mean()), penalty=float(penalty))


def run_probe(problem: ConstrainedProblem, beta: float, penalty: float, n_chains: int,
              sweeps: int, seed: int, *, threads=None) -> tuple[np.ndarray, np.ndarray]:
    """Independent chains at one (beta, P); per-sweep (f, g) of shape (sweeps, n_chains)."""
    cfg = RunConfig(sweeps, 1, seed, store_target_only=False, store_states=False)
    tr = simulate(problem, np.full(n_chains, float(beta)), [float(penalty)], cfg, mode=MODE_NONE,
                  threads=threads)
    return tr.f, tr.g


# --- trace files -------------------------------------------------------------

def rle_encode(state) -> list:
    s = np.asarray(state)
    out = []
    start = 0
    for k in range(1, len(s) + 1):
        if k == len(s) or s[k] != s[start]:
            out.append([int(s[start]), k - start])
            start = k
    return out


def rle_decode(runs) -> np.ndarray:
    return np.concatenate([np.full(n, v, dtype=np.int8) for v, n in runs]) if runs else np.zeros(0, np.int8)


def _rates_or_null(acc_cum, att_cum):
    out = []
    for a, t in zip(acc_cum.ravel(), att_cum.ravel()):
        out.append(float(a / t) if t else None)
    return out


def write_trace_jsonl(trace: Trace, path, *, include_states: bool = True) -> None:
    """One JSON record per round for the target replica (best feasible for baselines)."""
    acc_p_cum = np.cumsum(trace.acc_p == 1, axis=0)
    att_p_cum = np.cumsum(trace.acc_p >= 0, axis=0)
    acc_b_cum = np.cumsum(trace.acc_beta == 1, axis=0)
    att_b_cum = np.cumsum(trace.acc_beta >= 0, axis=0)
    baseline = isinstance(trace, BaselineTrace)
    if baseline:
        fs = trace.best_f
        gs = np.where(np.isnan(fs), np.nan, 0.0)
        states = trace.best_states
    else:
        fs, gs = trace.target_f, trace.target_g
        states = trace.target_states if trace.states is not None else None
    sweeps = trace.sweep_count
    with open(path, "w") as fh:
        for n in range(trace.n_rounds):
            feasible = bool(not np.isnan(fs[n]) and gs[n] == 0)
            rec = {
                "round": n + 1,
                "sweep_count": int(sweeps[n]),
                "f": None if np.isnan(fs[n]) else float(fs[n]),
                "g": None if np.isnan(gs[n]) else float(gs[n]),
                "feasible": feasible,
            }
            if include_states and states is not None and not (baseline and not feasible):
                rec["state"] = rle_encode(states[n])
            rec["acceptance_rates_P"] = _rates_or_null(acc_p_cum[n], att_p_cum[n])
            rec["acceptance_rates_beta"] = _rates_or_null(acc_b_cum[n], att_b_cum[n])
            fh.write(json.dumps(rec, allow_nan=False) + "\n")


def read_trace_jsonl(path) -> dict:
    rounds, sweeps, fs, gs, feas, states = [], [], [], [], [], []
    last = None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            rounds.append(rec["round"])
            sweeps.append(rec["sweep_count"])
            fs.append(np.nan if rec["f"] is None else rec["f"])
            gs.append(np.nan if rec["g"] is None else rec["g"])
            feas.append(rec["feasible"])
            states.append(rle_decode(rec["state"]) if "state" in rec else None)
            last = rec
    out = {
        "round": np.asarray(rounds, dtype=np.int64),
        "sweep_count": np.asarray(sweeps, dtype=np.int64),
        "f": np.asarray(fs, dtype=np.float64),
        "g": np.asarray(gs, dtype=np.float64),
        "feasible": np.asarray(feas, dtype=bool),
        "states": states,
    }
    if last is not None:
        out["acceptance_rates_P"] = last["acceptance_rates_P"]
        out["acceptance_rates_beta"] = last["acceptance_rates_beta"]
    return out
