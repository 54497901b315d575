"""Problem generators: planted Wishart ensembles and a small complete graph."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .constraints import ConstrainedProblem, SparsificationMap
from .ising import IsingModel, ModelError, as_spins, load_model, save_model

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WishartSpec:
    n_logical: int
    alpha: float = 0.75
    seed: int = 0

    @property
    def m(self) -> int:
        return int(round(self.alpha * self.n_logical))

    def __post_init__(self):
        if self.n_logical < 3:
            raise ValueError("n_logical must be >= 3")
        if self.alpha <= 0 or self.m < 1:
            raise ValueError("alpha * n_logical must round to at least 1")


@dataclass(frozen=True, eq=False)
class GeneratedInstance:
    model: IsingModel
    planted_state: np.ndarray
    planted_energy: float
    spec: WishartSpec | None = None


def wishart_couplings(n: int, m: int, planted: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Dense coupling matrix of a planted Wishart instance.

    Recipe: draw ``Z`` (n x m) standard normal, project every column onto the
    complement of the planted vector ``t`` and rescale by ``sqrt(n / (n - 1))``
    so entries keep unit variance; then ``J = -W W^T / n`` with zero
    diagonal. Since ``W^T t = 0``, the energy ``s^T W W^T s / (2n) - const``
    is minimised by ``t``.
    """
    t = planted.astype(np.float64)
    z = rng.standard_normal((n, m))
    w = (z - np.outer(t, t @ z) / n) * np.sqrt(n / (n - 1))
    jmat = -(w @ w.T) / n
    np.fill_diagonal(jmat, 0.0)
    return jmat


def generate_wishart(spec: WishartSpec) -> GeneratedInstance:
    rng = np.random.default_rng(spec.seed)
    n = spec.n_logical
    planted = np.where(rng.random(n) < 0.5, -1, 1).astype(np.int8)
    jmat = wishart_couplings(n, spec.m, planted, rng)
    model = IsingModel.from_dense(jmat)
    return GeneratedInstance(model, planted, model.energy(planted), spec)


def verify_planted(inst: GeneratedInstance, tol: float = 1e-9) -> bool:
    """True iff enumeration finds no state below the planted energy and the only
    minimisers are the planted state and its global flip."""
    from .oracle import all_energies, codes_from_spins

    e = all_energies(inst.model)
    emin = e.min()
    if emin < inst.planted_energy - tol * max(1.0, abs(emin)):
        return False
    minimisers = set(np.flatnonzero(e <= emin + tol * max(1.0, abs(emin))).tolist())
    t = inst.planted_state
    return minimisers <= {int(codes_from_spins(t)), int(codes_from_spins(-t))}


def generate_verified_wishart(spec: WishartSpec, max_tries: int = 100) -> GeneratedInstance:
    """Generate and enumerate-check, bumping the seed until the plant is unique."""
    for k in range(max_tries):
        s = WishartSpec(spec.n_logical, spec.alpha, spec.seed + k)
        inst = generate_wishart(s)
        if verify_planted(inst):
            return inst
        log.warning("seed %d: planted state not the unique ground state; regenerating", s.seed)
    raise RuntimeError(f"no verified instance in {max_tries} seeds")


# Default K5 instance: a full-adder penalty on spins (A, B, Cin, S, Cout).
# With c = (1, 1, 1, -1, -2), (c . s)^2 / 4 vanishes exactly on the 8 rows of
# the truth table; J_ij = -c_i c_j reproduces it up to a constant. The small
# fields make the ground state unique and spread the beta = 1 distribution
# over ~8 effective states.
_ADDER = (1, 1, 1, -1, -2)
FIVE_NODE_COUPLINGS = [(i, j, float(-_ADDER[i] * _ADDER[j])) for i in range(5) for j in range(i + 1, 5)]
FIVE_NODE_FIELDS = [0.3, -0.2, 0.4, -0.5, 0.6]


def five_node_complete(couplings_file=None) -> IsingModel:
    if couplings_file is not None:
        model = load_model(couplings_file)
        if model.n_spins != 5 or model.n_couplings != 10:
            raise ModelError("five-node instance must be a complete graph on 5 spins")
        return model
    return IsingModel.from_edges(5, FIVE_NODE_COUPLINGS, FIVE_NODE_FIELDS)


# --- instance bundles ----------------------------------------------------------

def write_bundle(path, model: IsingModel, *, planted=None, planted_energy=None, meta=None,
                 force: bool = False) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} exists; pass force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.json")
    if planted is not None:
        obj = {"state": [int(x) for x in planted], "energy": float(planted_energy)}
        (out / "planted.json").write_text(json.dumps(obj) + "\n")
    (out / "meta.json").write_text(json.dumps(meta or {}, sort_keys=True, indent=1) + "\n")
    return out


def write_sparsified(path, problem: ConstrainedProblem, smap: SparsificationMap, params: dict) -> None:
    out = Path(path)
    (out / "physical.json").write_text(json.dumps(problem.to_json()) + "\n")
    obj = smap.to_json()
    obj["params"] = params
    (out / "map.json").write_text(json.dumps(obj) + "\n")


@dataclass
class Bundle:
    path: Path
    model: IsingModel
    planted: np.ndarray | None
    planted_energy: float | None
    problem: ConstrainedProblem | None
    smap: SparsificationMap | None
    meta: dict


def read_bundle(path) -> Bundle:
    p = Path(path)
    model = load_model(p / "model.json")
    planted = energy = None
    if (p / "planted.json").exists():
        obj = json.loads((p / "planted.json").read_text())
        planted = as_spins(obj["state"], model.n_spins).copy()
        energy = float(obj["energy"])
    problem = smap = None
    if (p / "physical.json").exists():
        problem = ConstrainedProblem.from_json(json.loads((p / "physical.json").read_text()))
        smap = SparsificationMap.load(p / "map.json")
    meta = json.loads((p / "meta.json").read_text()) if (p / "meta.json").exists() else {}
    return Bundle(p, model, planted, energy, problem, smap, meta)


def spec_meta(spec: WishartSpec) -> dict:
    return {"kind": "wishart", **asdict(spec)}
