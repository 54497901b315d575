"""Adaptive construction of the beta and penalty ladders.

Rows: starting from ``beta0``, each probe at ``(beta, P)`` measures the spread
``sigma_E`` of the penalised energy and the next inverse temperature is
``beta + alpha_beta / sigma_E``. The first column stops adding rows once
``sigma_E`` falls to ``sigma_min``.

Columns: every probe also proposes a next penalty
``P + alpha_P / (beta * sigma_g)``; the next column takes the median proposal
over rows. Columns are added until the coldest probe's mean constraint value
drops below ``feasibility_threshold``. Each later column re-ascends its own
beta ladder (same row count) and the final betas are per-row medians across
columns.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .constraints import ConstrainedProblem
from .engine import run_probe

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScheduleConfig:
    beta0: float = 0.5
    P0: float = 0.5
    I_max: int = 20
    J_max: int = 20
    sigma_min: float | None = None  # default 0.2 * sqrt(n_spins)
    alpha_beta: float = 1.0
    alpha_P: float = 1.3
    n_chains: int = 32
    sweeps_per_probe: int = 1000
    budget: int = 400
    feasibility_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.beta0 <= 0:
            raise ValueError("beta0 must be positive")
        if self.P0 < 0:
            raise ValueError("P0 must be non-negative")
        if self.I_max < 1 or self.J_max < 1:
            raise ValueError("I_max and J_max must be >= 1")
        if self.I_max * self.J_max > self.budget:
            raise ValueError(f"I_max * J_max = {self.I_max * self.J_max} exceeds budget {self.budget}")
        if self.alpha_beta <= 0 or self.alpha_P <= 0:
            raise ValueError("learning rates must be positive")
        if self.sigma_min is not None and self.sigma_min <= 0:
            raise ValueError("sigma_min must be positive")
        if self.n_chains < 2:
            raise ValueError("n_chains must be >= 2")
        if self.sweeps_per_probe < 2:
            raise ValueError("sweeps_per_probe must be >= 2")


@dataclass
class Schedule:
    betas: np.ndarray
    penalties: np.ndarray
    probe_stats: list = field(default_factory=list)
    warning: str | None = None

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        self.penalties = np.asarray(self.penalties, dtype=np.float64)
        for name, v in (("betas", self.betas), ("penalties", self.penalties)):
            if v.size == 0 or not np.all(np.isfinite(v)) or np.any(np.diff(v) <= 0):
                raise ValueError(f"{name} must be non-empty, finite and strictly increasing")

    @property
    def shape(self):
        return self.betas.size, self.penalties.size

    def to_json(self) -> dict:
        obj = {"betas": self.betas.tolist(), "penalties": self.penalties.tolist(),
               "probe_stats": self.probe_stats}
        if self.warning:
            obj["warning"] = self.warning
        return obj

    @classmethod
    def from_json(cls, obj) -> "Schedule":
        return cls(obj["betas"], obj["penalties"], obj.get("probe_stats", []), obj.get("warning"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Schedule":
        return cls.from_json(json.loads(Path(path).read_text()))


def _probe_seed(seed: int, column: int, row: int) -> int:
    return int(np.random.SeedSequence([seed, column, row]).generate_state(1, np.uint64)[0])


def probe_population(problem: ConstrainedProblem, beta: float, penalty: float, n_chains: int,
                     sweeps: int, seed: int = 0, *, threads=None):
    """(sigma_E, sigma_g, mean_g) over the second half of ``sweeps`` sweeps of
    ``n_chains`` independent chains started from random states."""
    if n_chains < 2:
        raise ValueError("n_chains must be >= 2")
    f, g = run_probe(problem, beta, penalty, n_chains, sweeps, seed, threads=threads)
    keep = slice(sweeps // 2, None)
    e = f[keep] + penalty * g[keep]
    gk = g[keep]
    return float(e.std()), float(gk.std()), float(gk.mean())


def _lower_median(values) -> float:
    v = np.sort(np.asarray(values, dtype=np.float64))
    return float(v[(v.size - 1) // 2])


def build_schedule(problem: ConstrainedProblem, cfg: ScheduleConfig = ScheduleConfig(), *,
                   threads=None) -> Schedule:
    sigma_min = cfg.sigma_min if cfg.sigma_min is not None else 0.2 * math.sqrt(problem.n_spins)
    p_cap = 2.0 * cfg.P0 + 1.0
    stats = []

    def probe(column, row, beta, pen):
        s_e, s_g, m_g = probe_population(problem, beta, pen, cfg.n_chains, cfg.sweeps_per_probe,
                                         _probe_seed(cfg.seed, column, row), threads=threads)
        stats.append({"column": column, "row": row, "beta": beta, "P": pen,
                      "sigma_E": s_e, "sigma_g": s_g, "mean_g": m_g})
        return s_e, s_g, m_g

    def next_penalty(pen, beta, s_g):
        step = p_cap if s_g == 0 else min(cfg.alpha_P / (beta * s_g), p_cap)
        return pen + step

    # first column: grow rows while the energy still fluctuates
    col = [cfg.beta0]
    proposals = []
    mean_g = 0.0
    i = 0
    while True:
        s_e, s_g, mean_g = probe(0, i, col[i], cfg.P0)
        proposals.append(next_penalty(cfg.P0, col[i], s_g))
        if s_e > sigma_min and i + 1 < cfg.I_max:
            col.append(col[i] + cfg.alpha_beta / s_e)
            i += 1
        else:
            break
    n_rows = len(col)
    beta_cols = [col]
    penalties = [cfg.P0]
    warning = None
    j_max = min(cfg.J_max, cfg.budget // n_rows)

    if mean_g >= cfg.feasibility_threshold:
        while True:
            if len(penalties) >= j_max:
                warning = (f"replica budget exhausted at {n_rows}x{len(penalties)} with cold "
                           f"mean_g={mean_g:.3g} >= {cfg.feasibility_threshold}")
                log.warning(warning)
                break
            penalties.append(_lower_median(proposals))
            j = len(penalties) - 1
            pen = penalties[j]
            col = [cfg.beta0]
            proposals = []
            for i in range(n_rows):
                s_e, s_g, mean_g = probe(j, i, col[i], pen)
                if i + 1 < n_rows:
                    col.append(col[i] + cfg.alpha_beta / max(s_e, sigma_min))
                proposals.append(next_penalty(pen, col[i], s_g))
            beta_cols.append(col)
            if mean_g < cfg.feasibility_threshold:
                break

    betas = np.array([_lower_median(row) for row in np.array(beta_cols).T])
    return Schedule(betas, np.array(penalties), stats, warning)
