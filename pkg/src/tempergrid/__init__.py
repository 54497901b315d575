"""Two-dimensional parallel tempering over inverse temperature and penalty strength."""
from .constraints import (ConstrainedProblem, ConstraintSet, EffectiveModel, SparsificationMap,
                          build_effective, decode, decode_many, evaluate_g, sparsify)
from .engine import (BaselineTrace, ReplicaGrid, RunConfig, Trace, beta_swap_probability,
                     general_swap_probability, p_swap_probability, run_2dpt, run_jcolumn_pt)
from .ising import EnergyBreakdown, IsingModel, LocalFields, delta_energy_flip, energy, metropolis_sweep

__version__ = "0.1.0"
