"""Copy constraints, penalised models, graph sparsification and decoding."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .ising import IsingModel, ModelError, _csr, as_spins


class SparsificationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Equality constraints ``(S_a - S_b)^2`` over spin pairs."""

    pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        if np.any(p[:, 0] == p[:, 1]):
            raise ModelError("constraint pair joins a spin to itself")
        key = np.sort(p, axis=1)
        if len(np.unique(key, axis=0)) != len(key):
            raise ModelError("duplicate constraint pair")
        object.__setattr__(self, "pairs", p)

    @property
    def m(self) -> int:
        return int(self.pairs.shape[0])

    def evaluate(self, state) -> int:
        s = np.asarray(state, dtype=np.int64)
        d = s[self.pairs[:, 0]] - s[self.pairs[:, 1]]
        return int(np.sum(d * d))

    def evaluate_many(self, states) -> np.ndarray:
        s = np.asarray(states, dtype=np.int64)
        d = s[:, self.pairs[:, 0]] - s[:, self.pairs[:, 1]]
        return np.sum(d * d, axis=1)


def evaluate_g(constraints: ConstraintSet, state) -> int:
    return constraints.evaluate(state)


@dataclass(frozen=True, eq=False)
class ConstrainedProblem:
    """Cost model ``f`` plus constraint function ``g``; energy ``f + P g``."""

    cost: IsingModel
    constraints: ConstraintSet = field(default_factory=ConstraintSet)

    def __post_init__(self):
        p = self.constraints.pairs
        if p.size and (p.min() < 0 or p.max() >= self.cost.n_spins):
            raise ModelError("constraint index out of range")

    @classmethod
    def unconstrained(cls, model: IsingModel) -> "ConstrainedProblem":
        return cls(model, ConstraintSet())

    @property
    def n_spins(self) -> int:
        return self.cost.n_spins

    def f(self, state) -> float:
        return self.cost.energy(state)

    def g(self, state) -> int:
        return self.constraints.evaluate(state)

    def total(self, state, penalty: float) -> float:
        return self.f(state) + penalty * self.g(state)

    def effective(self, penalty: float) -> "EffectiveModel":
        return build_effective(self, penalty)

    @cached_property
    def partner_adjacency(self):
        p = self.constraints.pairs
        return _csr(self.n_spins, p[:, 0], p[:, 1])

    def kernel_arrays(self):
        """Flat arrays consumed by the sweep kernels."""
        c_ptr, c_idx, c_w = self.cost.adjacency
        k_ptr, k_idx = self.partner_adjacency
        return c_ptr, c_idx, c_w, self.cost.fields, k_ptr, k_idx

    def to_json(self) -> dict:
        obj = self.cost.to_json()
        obj["constraints"] = self.constraints.pairs.tolist()
        return obj

    @classmethod
    def from_json(cls, obj) -> "ConstrainedProblem":
        model = IsingModel.from_json({k: v for k, v in obj.items() if k != "constraints"})
        pairs = obj.get("constraints", [])
        return cls(model, ConstraintSet(np.asarray(pairs, dtype=np.int64).reshape(-1, 2)))


@dataclass(frozen=True, eq=False)
class EffectiveModel:
    """Cost model with each constraint pair merged in as a coupling ``2P``.

    ``P (S_a - S_b)^2 = 2P - 2P S_a S_b``, so the merged model's energy plus
    the constant ``2 P m`` equals ``f + P g``.
    """

    problem: ConstrainedProblem
    penalty: float
    merged: IsingModel
    offset: float

    def energy(self, state) -> float:
        return self.merged.energy(state) + self.offset

    def energies(self, states) -> np.ndarray:
        return self.merged.energies(states) + self.offset

    def breakdown(self, state):
        from .ising import EnergyBreakdown

        return EnergyBreakdown(self.problem.f(state), float(self.problem.g(state)))

    @property
    def n_spins(self) -> int:
        return self.problem.n_spins


def build_effective(problem: ConstrainedProblem, penalty: float) -> EffectiveModel:
    if penalty < 0:
        raise ValueError("penalty must be non-negative")
    cost = problem.cost
    pairs = problem.constraints.pairs
    m = pairs.shape[0]
    if penalty == 0 or m == 0:
        return EffectiveModel(problem, float(penalty), cost, 0.0)
    jmat = {(int(i), int(j)): float(w) for i, j, w in zip(cost.rows, cost.cols, cost.weights)}
    for a, b in pairs:
        key = (int(min(a, b)), int(max(a, b)))
        jmat[key] = jmat.get(key, 0.0) + 2.0 * penalty
    edges = [(i, j, w) for (i, j), w in jmat.items()]
    merged = IsingModel.from_edges(cost.n_spins, edges, cost.fields)
    return EffectiveModel(problem, float(penalty), merged, 2.0 * penalty * m)


@dataclass(frozen=True)
class SparsificationMap:
    n_logical: int
    copies: tuple  # per logical node: tuple of physical indices in chain order
    edge_assignment: dict  # (u, v) -> (physical u copy, physical v copy)

    @property
    def n_physical(self) -> int:
        return sum(len(c) for c in self.copies)

    @cached_property
    def copy_matrix(self) -> np.ndarray:
        """(n_logical, copies) physical index table; requires equal chain lengths."""
        return np.asarray(self.copies, dtype=np.int64)

    def to_json(self) -> dict:
        return {
            "n_logical": self.n_logical,
            "copies": [list(c) for c in self.copies],
            "edge_assignment": [[u, v, a, b] for (u, v), (a, b) in sorted(self.edge_assignment.items())],
        }

    @classmethod
    def from_json(cls, obj) -> "SparsificationMap":
        copies = tuple(tuple(int(x) for x in c) for c in obj["copies"])
        edges = {(int(u), int(v)): (int(a), int(b)) for u, v, a, b in obj["edge_assignment"]}
        m = cls(int(obj["n_logical"]), copies, edges)
        flat = sorted(x for c in copies for x in c)
        if flat != list(range(len(flat))):
            raise ModelError("map copies must partition the physical indices")
        return m

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path) -> "SparsificationMap":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def identity_map(n: int) -> SparsificationMap:
    return SparsificationMap(n, tuple((i,) for i in range(n)), {})


def min_degree_cap(logical: IsingModel, copies_per_node: int) -> int:
    """Smallest physical degree cap for which :func:`sparsify` succeeds."""
    k = copies_per_node
    need = int(logical.degrees.max()) if logical.n_couplings else 0
    if k == 1:
        return need
    # k*cap slots minus 2(k-1) chain incidences must cover the logical degree
    cap = -(-(need + 2 * (k - 1)) // k)
    return max(cap, 3)


def sparsify(logical: IsingModel, copies_per_node: int, max_degree: int | None = None):
    """Split every logical node into a path of copies with bounded degree.

    Returns ``(ConstrainedProblem, SparsificationMap)``. Physical indices are
    node-major: copy ``c`` of node ``u`` is ``u * copies_per_node + c``.
    Couplings are assigned greedily, in sorted logical-edge order, to the copy
    with the largest remaining degree budget (first copy on ties). Fields sit
    on the first copy.
    """
    k = int(copies_per_node)
    if k < 1:
        raise SparsificationError("copies_per_node must be >= 1")
    n = logical.n_spins
    if k > 1 and max_degree is not None and max_degree < 3:
        raise SparsificationError("max_degree must be >= 3 when copies_per_node > 1")
    if k == 1:
        if max_degree is not None and logical.n_couplings and logical.degrees.max() > max_degree:
            u = int(np.argmax(logical.degrees))
            raise SparsificationError(
                f"node {u} has degree {logical.degrees[u]} > max_degree {max_degree}")
        return ConstrainedProblem.unconstrained(logical), identity_map(n)

    chain_deg = np.full(k, 2, dtype=np.int64)
    chain_deg[0] = chain_deg[-1] = 1
    cap = np.iinfo(np.int64).max // 4 if max_degree is None else int(max_degree)
    budget = np.tile(cap - chain_deg, (n, 1))
    for u in range(n):
        if logical.degrees[u] > budget[u].sum():
            raise SparsificationError(
                f"node {u}: degree {logical.degrees[u]} does not fit in {k} copies "
                f"with max_degree {max_degree}")

    def take(u):
        c = int(np.argmax(budget[u]))  # argmax returns the first maximum
        budget[u, c] -= 1
        return u * k + c

    assignment = {}
    rows, cols, weights = [], [], []
    for i, j, w in logical.edges():
        a, b = take(i), take(j)
        assignment[(i, j)] = (a, b)
        rows.append(min(a, b))
        cols.append(max(a, b))
        weights.append(w)
    fields = np.zeros(n * k)
    fields[::k] = logical.fields
    cost = IsingModel(n * k, np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
                      np.asarray(weights, dtype=np.float64), fields)
    pairs = np.array([(u * k + c, u * k + c + 1) for u in range(n) for c in range(k - 1)],
                     dtype=np.int64)
    problem = ConstrainedProblem(cost, ConstraintSet(pairs))
    smap = SparsificationMap(n, tuple(tuple(range(u * k, (u + 1) * k)) for u in range(n)), assignment)
    deg = cost.degrees + np.bincount(pairs.ravel(), minlength=n * k)
    if max_degree is not None:
        assert deg.max() <= max_degree, "degree cap violated"
    return problem, smap


def decode_many(smap: SparsificationMap, physical) -> tuple[np.ndarray, np.ndarray]:
    """Majority vote per chain, ties to the first copy; plus feasibility flags."""
    s = np.asarray(physical)
    if s.ndim == 1:
        s = s[None, :]
    if s.shape[1] != smap.n_physical:
        raise ModelError(f"physical state length {s.shape[1]} != {smap.n_physical}")
    logical = np.empty((s.shape[0], smap.n_logical), dtype=np.int8)
    feasible = np.ones(s.shape[0], dtype=bool)
    for u, chain in enumerate(smap.copies):
        block = s[:, list(chain)].astype(np.int64)
        total = block.sum(axis=1)
        logical[:, u] = np.where(total > 0, 1, np.where(total < 0, -1, block[:, 0]))
        feasible &= np.all(block == block[:, :1], axis=1)
    return logical, feasible


def decode(smap: SparsificationMap, physical):
    phys = as_spins(physical, smap.n_physical)
    logical, feasible = decode_many(smap, phys)
    return logical[0], bool(feasible[0])
