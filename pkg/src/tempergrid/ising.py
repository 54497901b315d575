"""Ising cost models, energies and single-spin-flip Metropolis sweeps.

Energy convention::

    E(s) = -sum_{i<j} J_ij s_i s_j - sum_i h_i s_i

so a positive coupling is ferromagnetic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


class ModelError(ValueError):
    """Malformed model input (bad indices, duplicates, wrong lengths)."""


def as_spins(state, n: int | None = None) -> np.ndarray:
    s = np.asarray(state)
    if s.ndim != 1:
        raise ModelError(f"spin state must be 1-d, got shape {s.shape}")
    if n is not None and s.shape[0] != n:
        raise ModelError(f"state has length {s.shape[0]}, model has {n} spins")
    if not np.all((s == 1) | (s == -1)):
        raise ModelError("spin values must be -1 or +1")
    return s.astype(np.int8, copy=False)


def _csr(n, rows, cols, weights=None):
    """Symmetric adjacency lists in CSR form, neighbours in ascending order."""
    a = np.concatenate([rows, cols])
    b = np.concatenate([cols, rows])
    order = np.lexsort((b, a))
    a, b = a[order], b[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, a + 1, 1)
    ptr = np.cumsum(ptr)
    if weights is None:
        return ptr, b.astype(np.int64)
    w = np.concatenate([weights, weights])[order]
    return ptr, b.astype(np.int64), w.astype(np.float64)


@dataclass(frozen=True, eq=False)
class IsingModel:
    """Sparse Ising model: couplings stored once per unordered pair with i < j."""

    n_spins: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    fields: np.ndarray

    def __post_init__(self):
        n = int(self.n_spins)
        if n < 1:
            raise ModelError("n_spins must be positive")
        rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        h = np.asarray(self.fields, dtype=np.float64).reshape(-1)
        if not (rows.shape == cols.shape == w.shape):
            raise ModelError("couplings arrays must have equal length")
        if h.shape != (n,):
            raise ModelError(f"fields must have length {n}, got {h.shape[0]}")
        if rows.size:
            if np.any(rows == cols):
                i = int(rows[rows == cols][0])
                raise ModelError(f"self-loop on spin {i}")
            if min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= n:
                raise ModelError("coupling index out of range")
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        order = np.lexsort((hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        if lo.size > 1:
            dup = (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])
            if np.any(dup):
                k = int(np.argmax(dup))
                raise ModelError(f"duplicate coupling ({lo[k]}, {hi[k]})")
        object.__setattr__(self, "n_spins", n)
        object.__setattr__(self, "rows", lo)
        object.__setattr__(self, "cols", hi)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "fields", h)

    @classmethod
    def from_edges(cls, n, couplings=(), fields=None) -> "IsingModel":
        """Build from ``[(i, j, J_ij), ...]`` and an optional field vector."""
        couplings = list(couplings)
        if couplings:
            arr = np.asarray(couplings, dtype=np.float64).reshape(-1, 3)
            idx = arr[:, :2]
            if not np.all(idx == np.round(idx)):
                raise ModelError("coupling indices must be integers")
            rows, cols, w = idx[:, 0].astype(np.int64), idx[:, 1].astype(np.int64), arr[:, 2]
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            w = np.zeros(0)
        h = np.zeros(n) if fields is None else fields
        return cls(n, rows, cols, w, h)

    @classmethod
    def from_dense(cls, jmat, fields=None) -> "IsingModel":
        jmat = np.asarray(jmat, dtype=np.float64)
        n = jmat.shape[0]
        iu, ju = np.triu_indices(n, 1)
        w = jmat[iu, ju]
        keep = w != 0
        h = np.zeros(n) if fields is None else fields
        return cls(n, iu[keep], ju[keep], w[keep], h)

    @property
    def n_couplings(self) -> int:
        return int(self.weights.size)

    def edges(self):
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.rows, self.cols, self.weights)]

    @cached_property
    def adjacency(self):
        """(indptr, neighbours, weights) per spin; delta evaluation is O(degree)."""
        return _csr(self.n_spins, self.rows, self.cols, self.weights)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency[0])

    def dense(self) -> np.ndarray:
        m = np.zeros((self.n_spins, self.n_spins))
        m[self.rows, self.cols] = self.weights
        m[self.cols, self.rows] = self.weights
        return m

    def energy(self, state) -> float:
        s = as_spins(state, self.n_spins).astype(np.float64)
        return float(-np.dot(self.weights, s[self.rows] * s[self.cols]) - np.dot(self.fields, s))

    def energies(self, states) -> np.ndarray:
        """Vectorised energy of a (batch, n) array of spins."""
        s = np.asarray(states, dtype=np.float64)
        return -(s[:, self.rows] * s[:, self.cols]) @ self.weights - s @ self.fields

    def to_json(self) -> dict:
        return {"n": self.n_spins, "couplings": [[i, j, w] for i, j, w in self.edges()],
                "fields": [float(x) for x in self.fields]}

    @classmethod
    def from_json(cls, obj) -> "IsingModel":
        try:
            n = obj["n"]
            couplings = obj.get("couplings", [])
            fields = obj.get("fields")
        except (TypeError, AttributeError, KeyError) as exc:
            raise ModelError(f"malformed model object: {exc}") from None
        if not isinstance(n, int) or isinstance(n, bool):
            raise ModelError("'n' must be an integer")
        for c in couplings:
            if not isinstance(c, (list, tuple)) or len(c) != 3:
                raise ModelError(f"coupling entry must be [i, j, J_ij], got {c!r}")
            if not all(isinstance(x, int) and not isinstance(x, bool) for x in c[:2]):
                raise ModelError(f"coupling indices must be integers, got {c!r}")
        if fields is None:
            fields = [0.0] * n
        return cls.from_edges(n, couplings, fields)


def load_model(path) -> IsingModel:
    with open(path) as fh:
        return IsingModel.from_json(json.load(fh))


def save_model(model: IsingModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_json()) + "\n")


def energy(model: IsingModel, state) -> float:
    return model.energy(state)


@dataclass(frozen=True)
class EnergyBreakdown:
    f: float
    g: float = 0.0

    def total(self, penalty: float) -> float:
        return self.f + penalty * self.g


class LocalFields:
    """Per-spin cache of ``sum_j J_ij s_j + h_i`` kept in sync with a state."""

    def __init__(self, model: IsingModel, state):
        self.model = model
        s = as_spins(state, model.n_spins).astype(np.float64)
        self.values = model.dense() @ s + model.fields

    def flip(self, state, i: int) -> None:
        """Update the cache for flipping spin ``i``; call before mutating ``state``."""
        ptr, idx, w = self.model.adjacency
        sl = slice(ptr[i], ptr[i + 1])
        self.values[idx[sl]] -= 2.0 * state[i] * w[sl]


def delta_energy_flip(model: IsingModel, state, i: int, local_cache: LocalFields) -> float:
    return 2.0 * float(state[i]) * float(local_cache.values[i])


def metropolis_sweep(view, beta: float, state, rng: np.random.Generator, energies=None):
    """One sequential-order Metropolis sweep at inverse temperature ``beta``.

    ``view`` is an :class:`~tempergrid.constraints.EffectiveModel` or a plain
    :class:`IsingModel`. ``state`` is updated in place. Returns
    ``(state, EnergyBreakdown)``.
    """
    from .constraints import ConstrainedProblem, EffectiveModel
    from .kernels import backend

    if isinstance(view, IsingModel):
        view = ConstrainedProblem.unconstrained(view).effective(0.0)
    if not isinstance(view, EffectiveModel):
        raise TypeError("view must be an EffectiveModel or IsingModel")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    problem = view.problem
    s = as_spins(state, problem.n_spins)
    if s is not state:
        raise ModelError("state must be an int8 array to be updated in place")
    if energies is None:
        energies = EnergyBreakdown(problem.cost.energy(s), problem.constraints.evaluate(s))
    arrays = problem.kernel_arrays()
    states = s.reshape(1, -1)
    f = np.array([energies.f])
    g = np.array([energies.g])
    unif = rng.random((1, problem.n_spins))
    backend().sweep_replicas(*arrays, np.array([float(beta)]), np.array([float(view.penalty)]),
                             states, f, g, unif, 0, 1, 0, 1)
    return state, EnergyBreakdown(float(f[0]), float(g[0]))
