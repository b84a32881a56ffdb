"""Observables of VQE and reference states.

States may be dense vectors (qubit 0 most significant) or :class:`MpsState`.
"""

from __future__ import annotations

import numpy as np

from .lattice import DOWN, UP, QubitLayout
from .mps import MpsState, expectation, inner_product, mpo_from_pauli_sum
from .pauli import PauliSum


def _occupations(n_qubits: int, qubit: int) -> np.ndarray:
    idx = np.arange(2**n_qubits, dtype=np.int64)
    return ((idx >> (n_qubits - 1 - qubit)) & 1).astype(float)


def _sz_diagonal(n_qubits: int, layout: QubitLayout, site: int) -> np.ndarray:
    up = _occupations(n_qubits, layout.qubit(site, UP))
    dn = _occupations(n_qubits, layout.qubit(site, DOWN))
    return 0.5 * (up - dn)


def _sz_terms(layout: QubitLayout, site: int):
    # S^z = (n_up - n_dn) / 2 = (Z_dn - Z_up) / 4
    return [(-0.25, layout.qubit(site, UP)), (0.25, layout.qubit(site, DOWN))]


def _z_string(n, qubits):
    chars = ["I"] * n
    for q in qubits:
        chars[q] = "Z" if chars[q] == "I" else "I"
    return "".join(chars)


def sz_operator(layout: QubitLayout, site: int) -> PauliSum:
    n = layout.n_qubits
    return PauliSum.from_terms(n, [(c, _z_string(n, [q])) for c, q in _sz_terms(layout, site)])


def szsz_operator(layout: QubitLayout, i: int, j: int) -> PauliSum:
    n = layout.n_qubits
    terms = [
        (ci * cj, _z_string(n, [qi, qj]))
        for ci, qi in _sz_terms(layout, i)
        for cj, qj in _sz_terms(layout, j)
    ]
    return PauliSum.from_terms(n, terms)


def spin_correlation(state, i: int, j: int, layout: QubitLayout | None = None) -> float:
    """Connected correlator ``<S^z_i S^z_j> - <S^z_i><S^z_j>`` (0-based sites)."""
    if isinstance(state, MpsState):
        n = state.n_qubits
        layout = layout or QubitLayout(n // 2)
        zz = expectation(state, mpo_from_pauli_sum(szsz_operator(layout, i, j)))
        zi = expectation(state, mpo_from_pauli_sum(sz_operator(layout, i)))
        zj = expectation(state, mpo_from_pauli_sum(sz_operator(layout, j)))
        norm = abs(inner_product(state, state))
        return float(zz / norm - zi * zj / norm**2)
    psi = np.asarray(state)
    n = int(round(np.log2(psi.size)))
    layout = layout or QubitLayout(n // 2)
    if not (0 <= i < layout.n_sites and 0 <= j < layout.n_sites):
        raise IndexError("site out of range")
    p = np.abs(psi) ** 2
    p = p / p.sum()
    si = _sz_diagonal(n, layout, i)
    sj = _sz_diagonal(n, layout, j)
    return float(p @ (si * sj) - (p @ si) * (p @ sj))


def correlation_matrix(state, layout: QubitLayout | None = None) -> np.ndarray:
    """All ``C_ij`` of a state on ``n_sites`` sites."""
    if isinstance(state, MpsState):
        state = state.to_dense()
    n = int(round(np.log2(np.asarray(state).size)))
    layout = layout or QubitLayout(n // 2)
    out = np.zeros((layout.n_sites, layout.n_sites))
    for i in range(layout.n_sites):
        for j in range(i, layout.n_sites):
            out[i, j] = out[j, i] = spin_correlation(state, i, j, layout)
    return out


def fidelity(a, b) -> float:
    """``|<a|b>|^2`` clipped into ``[0, 1]``."""
    if isinstance(a, MpsState) and isinstance(b, MpsState):
        amp = inner_product(a, b)
    else:
        va = a.to_dense() if isinstance(a, MpsState) else np.asarray(a)
        vb = b.to_dense() if isinstance(b, MpsState) else np.asarray(b)
        amp = np.vdot(va, vb)
    f = abs(amp) ** 2
    if f > 1 + 1e-10:
        f = 1.0 + 1e-10
    return float(min(max(f, 0.0), 1.0))


def error_per_site(e_vqe: float, e_ref: float, n_sites: int) -> float:
    """``(E_vqe - E_ref) / N``."""
    if n_sites < 1:
        raise ValueError("n_sites must be positive")
    return (e_vqe - e_ref) / n_sites
