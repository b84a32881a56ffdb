"""Tensor-network VQE benchmarks for single-band Hubbard models."""

from .bench import BenchRecord, SweepPlan, min_params_for_delta, power_law_fit, run_sweep
from .circuits import (
    Circuit,
    GateOp,
    build_ep_ansatz,
    build_np_ansatz,
    build_uccsd_ansatz,
    ep_gate,
    evaluate,
    fswap,
    np_gate,
)
from .errors import CapabilityError, ConfigError, NumericalConsistencyError
from .lattice import (
    HubbardModel,
    LatticeGeometry,
    QubitLayout,
    checkerboard_occupation,
    realize_model,
    site_index,
)
from .mps import (
    MpoOperator,
    MpsState,
    expectation,
    inner_product,
    mpo_from_pauli_sum,
    product_state,
)
from .observables import error_per_site, fidelity, spin_correlation
from .optimize import lbfgs_minimize
from .pauli import PauliSum, jordan_wigner
from .solvers import DMRG, ExactDiagonalization, dmrg_ground_state, exact_ground_state
from .vqe import VQE, OptimizationConfig, VqeResult, energy_loss, overlap_loss, run_vqe

__version__ = "0.1.0"
