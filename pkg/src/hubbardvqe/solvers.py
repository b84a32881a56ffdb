"""Reference ground states: sector-restricted exact diagonalization and DMRG.

Both solvers work in the fixed ``(N_up, N_down)`` sector of the checkerboard
state.  ED restricts the basis directly.  DMRG has no quantum-number blocking;
it adds a quadratic penalty on the two spin counts to the Hamiltonian MPO so
that leaked weight outside the sector costs energy.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import CapabilityError, ConfigError
from .lattice import (
    DOWN,
    UP,
    HubbardModel,
    QubitLayout,
    checkerboard_occupation,
    model_from_config,
    sector_of,
)
from .mps import (
    MpoOperator,
    MpsState,
    expectation,
    mpo_from_pauli_sum,
    number_penalty_mpo,
    product_state,
    truncated_svd,
)
from .pauli import PauliSum, jordan_wigner, pauli_matrix, sector_basis

#: Largest qubit count accepted by exact diagonalization.
ED_QUBIT_BUDGET = 24
#: Sector dimension up to which references are computed by ED.
ED_DIMENSION_BUDGET = 10**6
_DENSE_EIGH_DIM = 400


@dataclass
class SpectrumResult:
    """Lowest eigenpair found by a solver.

    ``state`` is a sector vector (ED, with ``basis`` holding the integer
    basis states) or an :class:`MpsState` (DMRG).
    """

    energy: float
    state: object
    residual: float
    iterations: int
    method: str
    n_qubits: int
    basis: np.ndarray | None = None
    converged: bool = True
    energies: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_dense(self) -> np.ndarray:
        if isinstance(self.state, MpsState):
            return self.state.to_dense()
        out = np.zeros(2**self.n_qubits, dtype=complex)
        out[self.basis] = self.state
        return out

    def to_mps(self, chi_max=None) -> MpsState:
        if isinstance(self.state, MpsState):
            return self.state.copy()
        return MpsState.from_dense(self.to_dense(), chi_max)


def checkerboard_sector(model: HubbardModel) -> tuple[int, int]:
    return sector_of(checkerboard_occupation(model.geometry), model.layout())


def sector_dimension(model: HubbardModel, sector=None) -> int:
    from math import comb

    n_up, n_dn = sector or checkerboard_sector(model)
    return comb(model.n_sites, n_up) * comb(model.n_sites, n_dn)


def _as_pauli(h, layout):
    if isinstance(h, HubbardModel):
        layout = layout or h.layout()
        return jordan_wigner(h, layout), layout
    if isinstance(h, PauliSum):
        return h, layout or QubitLayout(h.n_qubits // 2)
    raise ConfigError("expected a HubbardModel or PauliSum")


def exact_ground_state(h, sector=None, layout: QubitLayout | None = None, seed=0):
    """Lowest eigenpair of ``h`` in the ``(N_up, N_down)`` sector.

    Parameters
    ----------
    h : HubbardModel or PauliSum
        The Hamiltonian.  For a model the sector defaults to the checkerboard
        filling.
    sector : tuple of int, optional
        ``(N_up, N_down)``.  ``None`` with a bare PauliSum diagonalizes the
        full space.
    layout : QubitLayout, optional
        Spin assignment of the qubits.
    seed : int
        Seed of the start vector of the iterative solver.
    """
    start = time.perf_counter()
    if sector is None and isinstance(h, HubbardModel):
        sector = checkerboard_sector(h)
    h, layout = _as_pauli(h, layout)
    n = h.n_qubits
    if n > ED_QUBIT_BUDGET:
        raise CapabilityError(f"{n} qubits exceed the ED budget of {ED_QUBIT_BUDGET}")
    if sector is None:
        basis = np.arange(2**n, dtype=np.int64)
    else:
        basis = sector_basis(
            n,
            [(layout.spin_qubits(UP), sector[0]), (layout.spin_qubits(DOWN), sector[1])],
        )
    if len(basis) == 0:
        raise ConfigError(f"sector {sector} is empty")
    mat = pauli_matrix(h, basis)
    iterations = 1
    if len(basis) <= _DENSE_EIGH_DIM:
        w, v = scipy.linalg.eigh(mat.toarray())
        energy, vec = w[0], v[:, 0]
    else:
        v0 = np.random.default_rng(seed).standard_normal(len(basis))
        w, v = spla.eigsh(mat, k=1, which="SA", v0=v0, tol=0)
        energy, vec = w[0], v[:, 0]
    vec = vec / np.linalg.norm(vec)
    residual = float(np.linalg.norm(mat @ vec - energy * vec))
    return SpectrumResult(
        float(energy),
        vec.astype(complex),
        residual,
        iterations,
        "ed",
        n,
        basis=basis,
        wall_time=time.perf_counter() - start,
    )


# ----------------------------------------------------------------------
# DMRG


def _left_env(env, a, w):
    """Grow a left environment ``(bra, mpo, ket)`` by one site."""
    tmp = np.tensordot(env, a, axes=(2, 0))  # (bra, mpo, s, ket_r)
    tmp = np.tensordot(tmp, w, axes=([1, 2], [0, 2]))  # (bra, ket_r, s', mpo_r)
    tmp = np.tensordot(a.conj(), tmp, axes=([0, 1], [0, 2]))  # (bra_r, ket_r, mpo_r)
    return tmp.transpose(0, 2, 1)


def _right_env(env, b, w):
    tmp = np.tensordot(b, env, axes=(2, 2))  # (ket_l, s, bra, mpo)
    tmp = np.tensordot(w, tmp, axes=([2, 3], [1, 3]))  # (mpo_l, s', ket_l, bra)
    tmp = np.tensordot(b.conj(), tmp, axes=([1, 2], [1, 3]))  # (bra_l, mpo_l, ket_l)
    return tmp


def _two_site_matvec(left, w1, w2, right, shape):
    def matvec(x):
        x = x.reshape(shape)
        y = np.tensordot(left, x, axes=(2, 0))  # (a, w, s1, s2, r)
        y = np.tensordot(y, w1, axes=([1, 2], [0, 2]))  # (a, s2, r, s1', w1)
        y = np.tensordot(y, w2, axes=([4, 1], [0, 2]))  # (a, r, s1', s2', w2)
        y = np.tensordot(y, right, axes=([1, 4], [2, 1]))  # (a, s1', s2', r)
        return y.reshape(-1)

    return matvec


def _lowest(matvec, v0, dim):
    if dim <= 256:
        mat = np.column_stack([matvec(e) for e in np.eye(dim, dtype=complex)])
        mat = 0.5 * (mat + mat.conj().T)
        w, v = scipy.linalg.eigh(mat, subset_by_index=[0, 0])
        return w[0], v[:, 0]
    op = spla.LinearOperator((dim, dim), matvec=matvec, dtype=complex)
    w, v = spla.eigsh(op, k=1, which="SA", v0=v0, tol=1e-13, ncv=min(dim, 20))
    return w[0], v[:, 0]


def _split(theta, chi, noise, left, w1, w2, right, to_right):
    """Split a two-site tensor, optionally with a density-matrix perturbation.

    With ``noise > 0`` the kept basis diagonalizes ``rho + noise * P P^dag``
    where ``P`` is the half-applied Hamiltonian acting on ``theta``.
    """
    dl, d1, d2, dr = theta.shape
    mat = theta.reshape(dl * d1, d2 * dr)
    if to_right:
        if noise <= 0:
            u, s, vh, lost = truncated_svd(mat, chi)
            return u.reshape(dl, d1, -1), (s[:, None] * vh).reshape(-1, d2, dr), lost
        pert = np.tensordot(left, theta, axes=(2, 0))  # (a, w, s1, s2, r)
        pert = np.tensordot(pert, w1, axes=([1, 2], [0, 2]))  # (a, s2, r, s1', w1)
        pert = pert.transpose(0, 3, 4, 1, 2).reshape(dl * d1, -1)
        u, _, _, lost = truncated_svd(np.hstack([mat, np.sqrt(noise) * pert]), chi)
        b = u.conj().T @ mat
        return u.reshape(dl, d1, -1), b.reshape(-1, d2, dr), lost
    if noise <= 0:
        u, s, vh, lost = truncated_svd(mat, chi)
        return (u * s).reshape(dl, d1, -1), vh.reshape(-1, d2, dr), lost
    pert = np.tensordot(theta, right, axes=(3, 2))  # (l, s1, s2, b, w)
    pert = np.tensordot(pert, w2, axes=([2, 4], [2, 3]))  # (l, s1, b, w2l, s2')
    pert = pert.transpose(4, 2, 0, 1, 3).reshape(d2 * dr, -1)
    mh = mat.conj().T
    u, _, _, lost = truncated_svd(np.hstack([mh, np.sqrt(noise) * pert.conj()]), chi)
    a = mat @ u
    return a.reshape(dl, d1, -1), u.conj().T.reshape(-1, d2, dr), lost


def penalized_operator(model: HubbardModel, h_mpo: MpoOperator | None = None, sector=None):
    """Hamiltonian MPO plus a spin-resolved number penalty for the sector."""
    layout = model.layout()
    n = model.n_qubits
    if h_mpo is None:
        h_mpo = mpo_from_pauli_sum(jordan_wigner(model, layout), compress=True)
    n_up, n_dn = sector or checkerboard_sector(model)
    t_max = max(abs(x) for x in model.hopping_table.values())
    mu_max = max([abs(x) for x in model.chemical_potential.values()] + [0.0])
    weight = 4 * t_max + abs(model.u) + 8 * model.v + mu_max + 1.0
    pen = number_penalty_mpo(n, layout.spin_qubits(UP), n_up, weight)
    pen = pen + number_penalty_mpo(n, layout.spin_qubits(DOWN), n_dn, weight)
    return (h_mpo + pen).compress()


def dmrg_ground_state(
    op: MpoOperator,
    initial: MpsState,
    chi: int | None = None,
    max_sweeps: int = 20,
    energy_tol: float = 1e-10,
    noise: float = 1e-8,
    chi_start: int = 16,
    report_op: MpoOperator | None = None,
    seed: int = 0,
) -> SpectrumResult:
    """Two-site DMRG.

    Parameters
    ----------
    op : MpoOperator
        Operator that is minimized, e.g. the output of
        :func:`penalized_operator`.
    initial : MpsState
        Start state; it is copied.
    chi : int, optional
        Bond-dimension cap, ``2**(n//2)`` (exact) by default.  The cap
        actually used doubles from ``chi_start`` each sweep until it is
        reached.
    max_sweeps, energy_tol : int, float
        Stop after ``max_sweeps`` full (left-right-left) sweeps or once the
        sweep energy changes by less than ``energy_tol`` at the final cap.
    noise : float
        Weight of the density-matrix perturbation; divided by 10 per sweep.
    report_op : MpoOperator, optional
        Operator whose expectation is reported as the energy (default ``op``).
    """
    start = time.perf_counter()
    n = op.n_qubits
    chi = int(chi or 2 ** (n // 2))
    state = initial.copy()
    state.chi_max = chi
    state.canonicalize(0)
    ws = op.tensors
    rng = np.random.default_rng(seed)

    rights = [None] * (n + 1)
    rights[n] = np.ones((1, 1, 1), dtype=complex)
    for k in range(n - 1, 0, -1):
        rights[k] = _right_env(rights[k + 1], state.tensors[k], ws[k])
    lefts = [None] * (n + 1)
    lefts[0] = np.ones((1, 1, 1), dtype=complex)

    energies = []
    converged = False
    sweeps = 0
    energy = np.inf

    def optimise(k, cap, eps, to_right):
        a, b = state.tensors[k], state.tensors[k + 1]
        theta = np.tensordot(a, b, axes=(2, 0))
        shape = theta.shape
        mv = _two_site_matvec(lefts[k], ws[k], ws[k + 1], rights[k + 2], shape)
        v0 = theta.reshape(-1)
        if not np.any(v0):
            v0 = rng.standard_normal(v0.size) + 0j
        e, vec = _lowest(mv, v0, v0.size)
        theta = vec.reshape(shape) / np.linalg.norm(vec)
        args = (lefts[k], ws[k], ws[k + 1], rights[k + 2])
        na, nb, _ = _split(theta, cap, eps, *args, to_right)
        if eps > 0:  # truncation of the perturbed basis loses some norm
            if to_right:
                nb = nb / np.linalg.norm(nb)
            else:
                na = na / np.linalg.norm(na)
        state.tensors[k], state.tensors[k + 1] = na, nb
        return float(e)

    for sweep in range(max_sweeps):
        cap = min(chi, chi_start * 2**sweep)
        eps = noise / 10**sweep if noise > 0 else 0.0
        if eps < 1e-15:
            eps = 0.0
        for k in range(n - 1):
            energy = optimise(k, cap, eps, True)
            lefts[k + 1] = _left_env(lefts[k], state.tensors[k], ws[k])
        for k in range(n - 2, -1, -1):
            energy = optimise(k, cap, eps, False)
            rights[k + 1] = _right_env(rights[k + 2], state.tensors[k + 1], ws[k + 1])
        state.center = 0
        sweeps = sweep + 1
        energies.append(energy)
        if cap == chi and len(energies) > 1 and abs(energies[-1] - energies[-2]) < energy_tol:
            converged = True
            break

    state.move_center(0)
    nrm = np.linalg.norm(state.tensors[0])
    state.tensors[0] = state.tensors[0] / nrm
    reported = expectation(state, report_op or op)
    variance_proxy = abs(expectation(state, op) - energies[-1])
    return SpectrumResult(
        reported,
        state,
        variance_proxy,
        sweeps,
        "dmrg",
        n,
        converged=converged,
        energies=energies,
        wall_time=time.perf_counter() - start,
    )


def dmrg_for_model(model: HubbardModel, chi=None, max_sweeps=20, energy_tol=1e-10, noise=1e-8):
    """DMRG ground state of ``model`` in its checkerboard sector."""
    h_mpo = mpo_from_pauli_sum(jordan_wigner(model), compress=True)
    op = penalized_operator(model, h_mpo)
    initial = product_state(checkerboard_occupation(model.geometry))
    return dmrg_ground_state(
        op, initial, chi, max_sweeps, energy_tol, noise, report_op=h_mpo
    )


def reference_ground_state(model: HubbardModel, policy="auto", chi=None) -> SpectrumResult:
    """ED when the sector fits :data:`ED_DIMENSION_BUDGET`, else DMRG."""
    if policy not in ("auto", "ed", "dmrg"):
        raise ConfigError(f"unknown reference policy {policy!r}")
    if policy == "auto":
        small = sector_dimension(model) <= ED_DIMENSION_BUDGET
        policy = "ed" if small and model.n_qubits <= ED_QUBIT_BUDGET else "dmrg"
    if policy == "ed":
        return exact_ground_state(model)
    return dmrg_for_model(model, chi)


# ----------------------------------------------------------------------
# persistence


def reference_key(model: HubbardModel, method: str, chi=None) -> str:
    doc = {"model": model.to_dict(), "method": method, "chi": chi}
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:24]


class ReferenceCache:
    """Directory of reference results keyed by a model-config hash.

    Each entry is an MPS checkpoint ``<key>.npz`` plus ``<key>.json`` with
    the energy and solver metadata.
    """

    def __init__(self, directory):
        self.directory = Path(directory)

    def _paths(self, key):
        return self.directory / f"{key}.npz", self.directory / f"{key}.json"

    def get(self, model: HubbardModel, policy="auto", chi=None) -> SpectrumResult:
        key = reference_key(model, policy, chi)
        npz, meta = self._paths(key)
        if npz.exists() and meta.exists():
            doc = json.loads(meta.read_text())
            state = MpsState.load(npz)
            return SpectrumResult(
                doc["energy"],
                state,
                doc["residual"],
                doc["iterations"],
                doc["method"],
                state.n_qubits,
                converged=doc["converged"],
                energies=doc["energies"],
            )
        res = reference_ground_state(model, policy, chi)
        self.directory.mkdir(parents=True, exist_ok=True)
        res.to_mps().save(npz)
        meta.write_text(
            json.dumps(
                {
                    "energy": res.energy,
                    "residual": res.residual,
                    "iterations": res.iterations,
                    "method": res.method,
                    "converged": res.converged,
                    "energies": [float(e) for e in res.energies],
                    "model": model.to_dict(),
                },
                indent=2,
            )
        )
        return res


# ----------------------------------------------------------------------
# estimators


def _check_model(model) -> HubbardModel:
    if isinstance(model, dict):
        return model_from_config(model)
    if not isinstance(model, HubbardModel):
        raise ConfigError("fit expects a HubbardModel or a model config mapping")
    return model


class ExactDiagonalization(BaseEstimator):
    """Sector-restricted ED as an estimator.

    Attributes
    ----------
    energy_ : float
    result_ : SpectrumResult
    """

    def __init__(self, sector=None, seed=0):
        self.sector = sector
        self.seed = seed

    def fit(self, model, y=None):
        model = _check_model(model)
        self.result_ = exact_ground_state(model, self.sector, seed=self.seed)
        self.energy_ = self.result_.energy
        return self

    def state(self) -> MpsState:
        check_is_fitted(self, "result_")
        return self.result_.to_mps()


class DMRG(BaseEstimator):
    """Two-site DMRG in the checkerboard sector.

    Attributes
    ----------
    energy_ : float
    energies_ : list of float
        Energy after each sweep.
    converged_ : bool
    state_ : MpsState
    """

    def __init__(self, chi=None, max_sweeps=20, energy_tol=1e-10, noise=1e-8):
        self.chi = chi
        self.max_sweeps = max_sweeps
        self.energy_tol = energy_tol
        self.noise = noise

    def fit(self, model, y=None):
        model = _check_model(model)
        if self.max_sweeps < 1 or self.energy_tol <= 0 or self.noise < 0:
            raise ConfigError("need max_sweeps >= 1, energy_tol > 0, noise >= 0")
        res = dmrg_for_model(model, self.chi, self.max_sweeps, self.energy_tol, self.noise)
        self.result_ = res
        self.energy_ = res.energy
        self.energies_ = res.energies
        self.converged_ = res.converged
        self.state_ = res.state
        return self
