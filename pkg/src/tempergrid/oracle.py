"""Exact enumeration for small systems: Boltzmann distributions, ground
states, moments, and empirical KL divergence.

States are indexed by their binary code: bit ``i`` is 1 iff spin ``i`` is +1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constraints import ConstrainedProblem, EffectiveModel
from .ising import IsingModel

MAX_ENUM_SPINS = 24
_BLOCK_BITS = 16


class SizeGuardError(ValueError):
    """Raised when exhaustive enumeration is refused."""


def spins_from_codes(codes, n: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    bits = (codes[..., None] >> np.arange(n, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


def codes_from_spins(states) -> np.ndarray:
    s = np.asarray(states)
    return (s > 0).astype(np.int64) @ (np.int64(1) << np.arange(s.shape[-1], dtype=np.int64))


def _terms(model):
    """(n, f-model, constraint set or None, penalty)."""
    if isinstance(model, IsingModel):
        return model.n_spins, model, None, 0.0
    if isinstance(model, EffectiveModel):
        return model.n_spins, model.problem.cost, model.problem.constraints, model.penalty
    if isinstance(model, ConstrainedProblem):
        return model.n_spins, model.cost, model.constraints, 0.0
    raise TypeError(f"cannot enumerate {type(model).__name__}")


def all_terms(model) -> tuple[np.ndarray, np.ndarray]:
    """(f, g) for every state in code order."""
    n, cost, cons, _ = _terms(model)
    if n > MAX_ENUM_SPINS:
        raise SizeGuardError(f"refusing to enumerate 2^{n} states (limit 2^{MAX_ENUM_SPINS})")
    total = 1 << n
    f = np.empty(total)
    g = np.zeros(total)
    block = 1 << min(n, _BLOCK_BITS)
    for start in range(0, total, block):
        s = spins_from_codes(np.arange(start, start + block), n)
        f[start:start + block] = cost.energies(s)
        if cons is not None and cons.m:
            g[start:start + block] = cons.evaluate_many(s)
    return f, g


def all_energies(model) -> np.ndarray:
    _, _, _, pen = _terms(model)
    f, g = all_terms(model)
    return f + pen * g


@dataclass(frozen=True)
class ExactDistribution:
    beta: float
    probabilities: np.ndarray
    log_partition: float

    @property
    def n_spins(self) -> int:
        return int(self.probabilities.size).bit_length() - 1


def _boltzmann(energies, beta):
    a = -beta * energies
    amax = a.max()
    w = np.exp(a - amax)
    z = w.sum()
    return w / z, float(amax + np.log(z))


def enumerate_boltzmann(model, beta: float) -> ExactDistribution:
    p, logz = _boltzmann(all_energies(model), beta)
    return ExactDistribution(float(beta), p, logz)


def exact_ground_state(model):
    """Minimum-energy state; ties go to the smallest code."""
    e = all_energies(model)
    code = int(np.argmin(e))  # argmin returns the first minimum
    n = _terms(model)[0]
    return spins_from_codes(code, n), float(e[code])


def exact_moments(model, beta: float):
    """(mean_E, var_E, mean_g, var_g) under the exact Boltzmann distribution."""
    _, _, _, pen = _terms(model)
    f, g = all_terms(model)
    e = f + pen * g
    p, _ = _boltzmann(e, beta)
    mean_e = float(p @ e)
    mean_g = float(p @ g)
    var_e = max(float(p @ (e - mean_e) ** 2), 0.0)
    var_g = max(float(p @ (g - mean_g) ** 2), 0.0)
    return mean_e, var_e, mean_g, var_g


def kl_divergence(counts, exact) -> float:
    """Empirical-versus-exact KL, natural log; ``counts`` indexed by state code."""
    c = np.asarray(counts, dtype=np.float64)
    p = exact.probabilities if isinstance(exact, ExactDistribution) else np.asarray(exact, dtype=np.float64)
    if c.shape != p.shape:
        raise ValueError(f"histogram has {c.size} bins, distribution has {p.size}")
    t = c.sum()
    if t < 1:
        raise ValueError("empty histogram")
    q = c / t
    nz = q > 0
    if np.any(p[nz] <= 0):
        raise ValueError("target has zero probability where the histogram does not")
    return max(float(np.sum(q[nz] * np.log(q[nz] / p[nz]))), 0.0)


def kl_curve(codes, exact, checkpoints=None) -> np.ndarray:
    """KL of the time-accumulated histogram of ``codes`` after each checkpoint.

    ``checkpoints`` are sample counts (1-based); default every sample.
    """
    p = exact.probabilities if isinstance(exact, ExactDistribution) else np.asarray(exact)
    codes = np.asarray(codes, dtype=np.int64)
    if checkpoints is None:
        checkpoints = np.arange(1, codes.size + 1)
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    out = np.empty(checkpoints.size)
    counts = np.zeros(p.size, dtype=np.int64)
    done = 0
    for k, t in enumerate(checkpoints):
        counts += np.bincount(codes[done:t], minlength=p.size)
        done = t
        out[k] = kl_divergence(counts, p)
    return out


def expected_kl_bias(k: int, t: int) -> float:
    """Leading-order expected KL of a ``t``-sample histogram of a ``k``-state law."""
    if k < 2 or t < 1:
        raise ValueError("need k >= 2 and t >= 1")
    return (k - 1) / (2 * t)


def total_variation(counts_or_p, exact) -> float:
    q = np.asarray(counts_or_p, dtype=np.float64)
    q = q / q.sum()
    p = exact.probabilities if isinstance(exact, ExactDistribution) else np.asarray(exact)
    return 0.5 * float(np.abs(q - p).sum())


def save_histogram(counts, n: int, path) -> None:
    c = np.asarray(counts, dtype=np.int64)
    nz = np.flatnonzero(c)
    obj = {"n": int(n), "counts": {str(int(i)): int(c[i]) for i in nz}, "total": int(c.sum())}
    Path(path).write_text(json.dumps(obj) + "\n")


def load_histogram(path) -> tuple[np.ndarray, int]:
    obj = json.loads(Path(path).read_text())
    n = int(obj["n"])
    c = np.zeros(1 << n, dtype=np.int64)
    for key, v in obj["counts"].items():
        c[int(key)] = v
    if c.sum() != obj["total"]:
        raise ValueError("histogram total does not match counts")
    return c, n
