"""Loss functions, gradients and the restart protocol of the VQE.

Two execution backends produce identical states at full bond dimension:

``"dense"``
    statevector kernels from :mod:`hubbardvqe.statevector`; used whenever the
    register is small enough and the bond dimension is not truncated.
``"mps"``
    gate-by-gate MPS evolution with MPO expectation values; required for
    truncated bond dimensions.

Gradients are analytic reverse sweeps on both backends: the circuit is
uncomputed gate by gate while the generator of every parameter is inserted
between the co-state and the state.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from decimal import Decimal

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .circuits import Circuit, GateOp, build_ansatz, evaluate
from .errors import ConfigError, NumericalConsistencyError
from .lattice import GENERATOR_ID, HubbardModel, checkerboard_occupation, model_from_config
from .mps import (
    MpoOperator,
    MpsState,
    apply_mpo,
    expectation,
    inner_product,
    mpo_from_pauli_sum,
    product_state,
)
from .optimize import lbfgs_minimize
from .pauli import PauliSum, jordan_wigner, pauli_matrix
from .statevector import DenseCircuit, basis_state

#: Infidelity floor of the overlap loss, so ``f >= -16``.
INFIDELITY_FLOOR = 1e-16
#: Largest register simulated densely by the ``"auto"`` backend.
DENSE_BACKEND_QUBITS = 20

_X_BLOCK = np.zeros((4, 4), dtype=complex)
_X_BLOCK[1, 2] = _X_BLOCK[2, 1] = 1.0
_P11 = np.diag([0, 0, 0, 1]).astype(complex)
_Z = np.diag([1.0, -1.0]).astype(complex)


def _generators(op: GateOp):
    """Anti-Hermitian generators of the parameters of a local gate."""
    if op.kind == "RZ":
        return [-0.5j * _Z]
    if op.kind == "NP":
        return [1j * _X_BLOCK, 1j * _P11]
    if op.kind == "EP":
        return [-0.5j * _X_BLOCK, -1j * _P11]
    return []


def _inverse_matrix(op: GateOp, params):
    return op.matrix(params).conj().T


def _apply_local(state: MpsState, op: GateOp, mat):
    if len(op.qubits) == 1:
        state.apply_one_qubit_gate(op.qubits[0], mat)
    else:
        state.apply_two_qubit_gate(op.qubits, mat)


def resolve_backend(backend: str, circuit: Circuit, chi=None) -> str:
    if backend not in ("auto", "dense", "mps"):
        raise ConfigError(f"unknown backend {backend!r}")
    full = 2 ** (circuit.n_qubits // 2)
    has_ucc = any(op.kind == "UCC" for op in circuit.ops)
    if backend == "auto":
        exact = chi is None or chi >= full
        backend = "dense" if (exact and circuit.n_qubits <= DENSE_BACKEND_QUBITS) else "mps"
        if has_ucc:
            backend = "dense"
    if backend == "mps" and has_ucc:
        raise ConfigError("UCC circuits only run on the dense backend")
    return backend


class Objective:
    """Loss ``f(theta)`` of a circuit acting on a fixed product state.

    Subclasses define the co-state: the derivative of ``f`` with respect to
    ``<psi|``.  ``value_and_grad`` then back-propagates it through the
    circuit.
    """

    def __init__(self, circuit: Circuit, occupation: str, backend="auto", chi=None):
        self.circuit = circuit
        self.occupation = occupation
        self.chi = chi
        self.backend = resolve_backend(backend, circuit, chi)
        if self.backend == "dense":
            self._dense = DenseCircuit(circuit)
            self._psi0 = basis_state(occupation)

    # state preparation ----------------------------------------------------
    def state(self, params):
        params = np.asarray(params, dtype=float)
        if params.shape != (self.circuit.n_parameters,):
            raise ConfigError(
                f"expected {self.circuit.n_parameters} parameters, got {params.shape}"
            )
        if self.backend == "dense":
            return self._dense.run(params, self._psi0)
        initial = product_state(self.occupation, chi_max=self.chi)
        return evaluate(self.circuit, params, initial)

    def mps_state(self, params) -> MpsState:
        psi = self.state(params)
        if isinstance(psi, MpsState):
            return psi
        return MpsState.from_dense(psi, self.chi)

    # to be provided by subclasses ------------------------------------------
    def _value_costate(self, psi):
        raise NotImplementedError

    # public -------------------------------------------------------------------
    def __call__(self, params) -> float:
        return self._value_costate(self.state(params))[0]

    def value_and_grad(self, params):
        params = np.asarray(params, dtype=float)
        psi = self.state(params)
        value, lam, scale = self._value_costate(psi)
        if scale == 0.0:
            return value, np.zeros(self.circuit.n_parameters)
        if self.backend == "dense":
            grad = self._dense.backpropagate(params, psi, lam)
        else:
            grad = self._mps_backpropagate(params, psi, lam)
        return value, scale * grad

    def _mps_backpropagate(self, params, psi: MpsState, lam: MpsState):
        grad = np.zeros(self.circuit.n_parameters)
        for op in reversed(self.circuit.ops):
            for slot, gen in zip(op.slots, _generators(op)):
                val = inner_product(lam, psi, insert=(op.qubits, gen))
                grad[slot] += 2.0 * val.real
            inv = _inverse_matrix(op, params)
            _apply_local(psi, op, inv)
            _apply_local(lam, op, inv)
        return grad


class EnergyObjective(Objective):
    """``E(theta) = <psi(theta)|H|psi(theta)>``."""

    def __init__(self, circuit, hamiltonian: PauliSum, occupation, backend="auto", chi=None):
        super().__init__(circuit, occupation, backend, chi)
        self.hamiltonian = hamiltonian
        if self.backend == "dense":
            self._h = pauli_matrix(hamiltonian)
        else:
            self._mpo = mpo_from_pauli_sum(hamiltonian, compress=True)

    def _value_costate(self, psi):
        if self.backend == "dense":
            hpsi = self._h @ psi
            raw = np.vdot(psi, hpsi)
            lam = hpsi
        else:
            raw = expectation(psi, self._mpo)
            lam = apply_mpo(self._mpo, psi, psi.chi_max)
        if abs(np.imag(raw)) > 1e-9:
            raise NumericalConsistencyError(f"energy has imaginary part {np.imag(raw):.3e}")
        return float(np.real(raw)), lam, 1.0


class OverlapObjective(Objective):
    """``f(theta) = log10(1 - |<psi(theta)|ref>|^2)`` with a floor on ``1 - F``."""

    def __init__(self, circuit, reference, occupation, backend="auto", chi=None):
        super().__init__(circuit, occupation, backend, chi)
        if self.backend == "dense":
            ref = reference.to_dense() if isinstance(reference, MpsState) else reference
            ref = np.asarray(ref, dtype=complex)
        else:
            ref = reference if isinstance(reference, MpsState) else MpsState.from_dense(reference)
        self.reference = ref

    def _value_costate(self, psi):
        if self.backend == "dense":
            amp = np.vdot(self.reference, psi)
        else:
            amp = inner_product(self.reference, psi)
        fid = min(abs(amp) ** 2, 1.0)
        infid = 1.0 - fid
        if infid <= INFIDELITY_FLOOR:
            return float(np.log10(INFIDELITY_FLOOR)), None, 0.0
        # dF/d<psi| = |ref><ref|psi>;  df = -dF / ((1 - F) ln 10)
        scale = -1.0 / (infid * np.log(10.0))
        if self.backend == "dense":
            lam = self.reference * amp
        else:
            lam = self.reference.copy()
            lam.tensors[0] = lam.tensors[0] * amp
        return float(np.log10(infid)), lam, scale


# ----------------------------------------------------------------------
# functional forms


def energy_loss(params, circuit: Circuit, initial, h) -> float:
    """Energy of ``circuit(params)`` applied to ``initial`` (MPS evaluation).

    ``h`` is an :class:`MpoOperator` or a :class:`PauliSum`.
    """
    state = initial if isinstance(initial, MpsState) else product_state(initial)
    if isinstance(h, PauliSum):
        h = mpo_from_pauli_sum(h, compress=True)
    return expectation(evaluate(circuit, params, state), h)


def overlap_loss(params, circuit: Circuit, initial, reference: MpsState) -> float:
    state = initial if isinstance(initial, MpsState) else product_state(initial)
    amp = inner_product(reference, evaluate(circuit, params, state))
    return log_infidelity(abs(amp) ** 2)


def log_infidelity(fid: float) -> float:
    """``log10(1 - F)`` with ``1 - F`` floored at :data:`INFIDELITY_FLOOR`.

    ``1 - F`` is formed from the shortest decimal representation of ``F``,
    so a fidelity given as ``0.99`` maps to exactly ``-2``.
    """
    infid = float(1 - Decimal(repr(float(fid))))
    return float(np.log10(max(infid, INFIDELITY_FLOOR)))


def finite_difference_gradient(fun, params, step=1e-5):
    params = np.asarray(params, dtype=float)
    grad = np.zeros_like(params)
    for k in range(len(params)):
        e = np.zeros_like(params)
        e[k] = step
        grad[k] = (fun(params + e) - fun(params - e)) / (2 * step)
    return grad


def gradient(objective: Objective, params, method="analytic", check=False,
             step=1e-5, rtol=1e-5, atol=1e-8):
    """Gradient of ``objective`` at ``params``.

    ``method="fd"`` uses central differences.  With ``check=True`` the
    analytic gradient is compared against central differences component by
    component (``|a - b| <= rtol * max(|a|, |b|) + atol``) and a
    :class:`NumericalConsistencyError` is raised on disagreement.
    """
    if method == "fd":
        return finite_difference_gradient(objective, params, step)
    if method != "analytic":
        raise ConfigError(f"unknown gradient method {method!r}")
    _, grad = objective.value_and_grad(params)
    if check:
        fd = finite_difference_gradient(objective, params, step)
        bad = np.abs(grad - fd) > rtol * np.maximum(np.abs(grad), np.abs(fd)) + atol
        if np.any(bad):
            k = int(np.argmax(bad))
            raise NumericalConsistencyError(
                f"gradient mismatch at slot {k}: analytic {grad[k]:.6e}, fd {fd[k]:.6e}"
            )
    return grad


# ----------------------------------------------------------------------
# restart protocol


@dataclass
class OptimizationConfig:
    """Settings of :func:`run_vqe`; the defaults follow the reference protocol."""

    loss: str = "energy"
    restarts: int = 10
    init_var: float = 1e-5
    energy_tol: float = 1e-7
    grad_tol: float = 1e-6
    max_steps: int = 1000
    warm_start_u0: bool = True
    seed: int = 0
    memory: int = 10
    backend: str = "auto"
    chi: int | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.loss not in ("energy", "overlap"):
            raise ConfigError(f"loss must be 'energy' or 'overlap', not {self.loss!r}")
        if self.restarts < 1:
            raise ConfigError("need at least one restart")
        if min(self.init_var, self.energy_tol, self.grad_tol) <= 0:
            raise ConfigError("tolerances and the initial variance must be positive")
        if self.max_steps < 1 or self.memory < 1:
            raise ConfigError("max_steps and memory must be >= 1")


def restart_seed(master: int, index: int) -> int:
    """64-bit seed of restart ``index`` derived from the master seed."""
    ss = np.random.SeedSequence([int(master), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def initial_parameters(seed: int, n: int, var: float = 1e-5) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.normal(0.0, np.sqrt(var), size=n)


@dataclass
class RestartRecord:
    index: int
    seed: int
    energy: float
    loss: float
    reason: str
    steps: int
    trace: list
    params: np.ndarray
    warm_energy: float | None = None
    warm_steps: int = 0
    warm_reason: str | None = None
    fidelity: float | None = None
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["params"] = [float(p) for p in self.params]
        doc["trace"] = [[int(s), float(v)] for s, v in self.trace]
        return doc


@dataclass
class VqeResult:
    restarts: list
    best_index: int | None
    config: dict
    circuit: dict
    model: dict
    valid: bool = True
    state_path: str | None = None
    versions: dict = field(default_factory=dict)

    @property
    def best(self) -> RestartRecord | None:
        return None if self.best_index is None else self.restarts[self.best_index]

    @property
    def best_energy(self) -> float:
        return self.best.energy if self.best else float("nan")

    @property
    def best_params(self):
        return self.best.params if self.best else None

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.restarts])

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "circuit": self.circuit,
            "model": self.model,
            "valid": self.valid,
            "best_index": self.best_index,
            "best_energy": self.best_energy,
            "best_params": None if self.best is None else [float(p) for p in self.best.params],
            "state_path": self.state_path,
            "versions": self.versions,
            "infidelity_floor": INFIDELITY_FLOOR,
            "restarts": [r.to_dict() for r in self.restarts],
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def best_restart(energies) -> int | None:
    """Index of the lowest energy; ties go to the lowest index."""
    energies = list(energies)
    if not energies:
        return None
    return int(np.argmin(energies))


def _resolve_circuit(ansatz, model: HubbardModel) -> Circuit:
    if isinstance(ansatz, Circuit):
        if ansatz.n_qubits != model.n_qubits:
            raise ConfigError("circuit and model sizes differ")
        return ansatz
    if isinstance(ansatz, dict):
        return build_ansatz(ansatz["family"], model.geometry, ansatz.get("layers"))
    family, layers = ansatz
    return build_ansatz(family, model.geometry, layers)


def _run_restart(args):
    index, model, circuit, config, reference = args
    start = time.perf_counter()
    seed = restart_seed(config.seed, index)
    occ = checkerboard_occupation(model.geometry)
    opts = dict(
        energy_tol=config.energy_tol,
        grad_tol=config.grad_tol,
        max_steps=config.max_steps,
        memory=config.memory,
    )
    energy = EnergyObjective(circuit, jordan_wigner(model), occ, config.backend, config.chi)
    x = initial_parameters(seed, circuit.n_parameters, config.init_var)
    warm = None
    if config.warm_start_u0:
        free = EnergyObjective(
            circuit, jordan_wigner(model.non_interacting()), occ, config.backend, config.chi
        )
        warm = lbfgs_minimize(free.value_and_grad, x, **opts)
        x = warm.x
    if config.loss == "energy":
        target = energy
    else:
        if reference is None:
            raise ConfigError("the overlap loss needs a reference state")
        target = OverlapObjective(circuit, reference, occ, config.backend, config.chi)
    res = lbfgs_minimize(target.value_and_grad, x, **opts)
    fid = None
    if reference is not None:
        psi = energy.state(res.x)
        if isinstance(psi, MpsState):
            amp = inner_product(
                reference if isinstance(reference, MpsState) else MpsState.from_dense(reference),
                psi,
            )
        else:
            ref = reference.to_dense() if isinstance(reference, MpsState) else reference
            amp = np.vdot(ref, psi)
        fid = float(min(abs(amp) ** 2, 1.0))
    return RestartRecord(
        index,
        seed,
        energy(res.x),
        res.fun,
        res.reason,
        res.steps,
        res.trace,
        res.x,
        warm.fun if warm else None,
        warm.steps if warm else 0,
        warm.reason if warm else None,
        fid,
        time.perf_counter() - start,
    )


def run_vqe(model: HubbardModel, ansatz, config: OptimizationConfig | None = None,
            reference=None) -> VqeResult:
    """Run ``config.restarts`` independent optimizations and keep the best.

    Parameters
    ----------
    model : HubbardModel
    ansatz : Circuit or (family, layers) or dict
    config : OptimizationConfig
    reference : MpsState or ndarray, optional
        Reference ground state.  Required for the overlap loss; when given,
        the fidelity of every restart is recorded.

    Every restart draws ``theta0 ~ N(0, init_var)`` from its own seed,
    optionally minimizes the ``U = V = d = 0`` energy first and then the
    target loss.  The reported energy is always the energy loss at the final
    parameters.
    """
    config = config or OptimizationConfig()
    circuit = _resolve_circuit(ansatz, model)
    jobs = [(r, model, circuit, config, reference) for r in range(config.restarts)]
    if config.n_jobs > 1 and config.restarts > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
            records = list(pool.map(_run_restart, jobs))
    else:
        records = [_run_restart(job) for job in jobs]
    stalled = all(r.reason == "line_search_failure" and r.steps == 0 for r in records)
    best = None if stalled else best_restart([r.energy for r in records])
    return VqeResult(
        records,
        best,
        asdict(config),
        {
            "family": circuit.family,
            "layers": circuit.layers,
            "n_parameters": circuit.n_parameters,
            "n_qubits": circuit.n_qubits,
        },
        model.to_dict(),
        valid=not stalled,
        versions={"numpy": np.__version__, "generator": GENERATOR_ID},
    )


class VQE(BaseEstimator):
    """Estimator wrapper around :func:`run_vqe`.

    Parameters
    ----------
    family : {"np", "ep", "uccsd"}
    layers : int, optional
        Layer count (ignored for UCCSD).
    loss : {"energy", "overlap"}
    restarts, seed, chi, backend, warm_start, max_steps
        See :class:`OptimizationConfig`.

    Attributes
    ----------
    result_ : VqeResult
    energy_ : float
        Best energy over restarts.
    params_ : ndarray
        Parameters of the best restart.
    circuit_ : Circuit
    """

    def __init__(self, family="np", layers=1, loss="energy", restarts=10, seed=0,
                 chi=None, backend="auto", warm_start=True, max_steps=1000, n_jobs=1):
        self.family = family
        self.layers = layers
        self.loss = loss
        self.restarts = restarts
        self.seed = seed
        self.chi = chi
        self.backend = backend
        self.warm_start = warm_start
        self.max_steps = max_steps
        self.n_jobs = n_jobs

    def _config(self):
        return OptimizationConfig(
            loss=self.loss,
            restarts=self.restarts,
            seed=self.seed,
            chi=self.chi,
            backend=self.backend,
            warm_start_u0=self.warm_start,
            max_steps=self.max_steps,
            n_jobs=self.n_jobs,
        )

    def fit(self, model, reference=None):
        if isinstance(model, dict):
            model = model_from_config(model)
        if not isinstance(model, HubbardModel):
            raise ConfigError("fit expects a HubbardModel or a model config mapping")
        config = self._config()
        if self.loss == "overlap" and reference is None:
            raise ConfigError("the overlap loss needs a reference state")
        self.circuit_ = build_ansatz(self.family, model.geometry, self.layers)
        self.model_ = model
        self.result_ = run_vqe(model, self.circuit_, config, reference)
        self.energy_ = self.result_.best_energy
        self.params_ = self.result_.best_params
        return self

    def state(self) -> MpsState:
        """Best state as an MPS."""
        check_is_fitted(self, "result_")
        initial = product_state(checkerboard_occupation(self.model_.geometry), self.chi)
        return evaluate(self.circuit_, self.params_, initial)
