"""Weighted Pauli strings and the Jordan-Wigner image of Hubbard models.

Basis-state integers put qubit 0 in the most significant bit, so the bitstring
``"1001"`` is the integer ``0b1001`` and matches the site order of an MPS.
A ``1`` means the spin-orbital is occupied; ``n = (I - Z) / 2``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .lattice import DOWN, UP, HubbardModel, QubitLayout

_PAULI_CHARS = frozenset("IXYZ")


@dataclass(frozen=True)
class PauliSum:
    """Real-weighted sum of Pauli strings; ``terms`` maps string -> coefficient."""

    n_qubits: int
    terms: dict

    def __post_init__(self):
        for s, c in self.terms.items():
            if len(s) != self.n_qubits or not set(s) <= _PAULI_CHARS:
                raise ValueError(f"bad Pauli string {s!r}")
            if np.iscomplexobj(c) and abs(np.imag(c)) > 0:
                raise ValueError("Pauli coefficients must be real")

    @classmethod
    def from_terms(cls, n_qubits: int, terms: Iterable[tuple[float, str]], atol=0.0):
        """Merge duplicate strings; drop coefficients with ``|c| <= atol``."""
        acc = defaultdict(float)
        for c, s in terms:
            acc[s] += float(c)
        return cls(n_qubits, {s: c for s, c in acc.items() if abs(c) > atol})

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        return PauliSum.from_terms(
            self.n_qubits,
            [(c, s) for s, c in self] + [(c, s) for s, c in other],
        )

    def scaled(self, factor: float) -> "PauliSum":
        return PauliSum(self.n_qubits, {s: factor * c for s, c in self})

    def constant(self) -> float:
        return self.terms.get("I" * self.n_qubits, 0.0)

    def to_sparse(self, basis=None) -> sp.csr_matrix:
        """Matrix of the operator, optionally restricted to ``basis``.

        ``basis`` is a sorted integer array of basis states.  Matrix elements
        leading outside the basis are dropped, which is exact for operators
        that conserve the quantity defining the basis.
        """
        return pauli_matrix(self, basis)

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def commutes_with_number(self) -> bool:
        """True when every term, grouped with its partners, conserves ``N``."""
        return pauli_sum_conserves(self, list(range(self.n_qubits)))


def _masks(string: str):
    n = len(string)
    x = y = z = 0
    for k, ch in enumerate(string):
        bit = 1 << (n - 1 - k)
        if ch == "X":
            x |= bit
        elif ch == "Y":
            y |= bit
        elif ch == "Z":
            z |= bit
    return x, y, z


def apply_pauli_string(string: str, states: np.ndarray):
    """Images of basis ``states`` under one Pauli string.

    Returns ``(targets, phases)`` with ``P|b> = phase * |target>``.
    """
    x, y, z = _masks(string)
    flip = x | y
    targets = states ^ flip
    signs = np.bitwise_count(states & (y | z)) & 1
    n_y = bin(y).count("1")
    phases = (1j**n_y) * (1 - 2 * signs.astype(np.int8))
    return targets, phases


def pauli_matrix(h: PauliSum, basis=None) -> sp.csr_matrix:
    n = h.n_qubits
    if basis is None:
        basis = np.arange(2**n, dtype=np.int64)
    basis = np.asarray(basis, dtype=np.int64)
    dim = len(basis)
    rows, cols, vals = [], [], []
    col_index = np.arange(dim)
    for string, coeff in h:
        targets, phases = apply_pauli_string(string, basis)
        pos = np.searchsorted(basis, targets)
        pos[pos == dim] = 0
        ok = basis[pos] == targets
        rows.append(pos[ok])
        cols.append(col_index[ok])
        vals.append(coeff * phases[ok])
    if not rows:
        return sp.csr_matrix((dim, dim))
    data = np.concatenate(vals)
    if np.abs(data.imag).max(initial=0.0) == 0.0:
        data = data.real
    mat = sp.coo_matrix(
        (data, (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    return mat.tocsr()


def pauli_sum_conserves(h: PauliSum, qubits: list[int]) -> bool:
    """Check that ``h`` commutes with the number operator on ``qubits``.

    A Pauli string changes the count on ``qubits`` by a fixed amount only on
    its X/Y support, so the check is done on the sum restricted to each X/Y
    support pattern: the raising and lowering parts must cancel there.
    """
    n = h.n_qubits
    groups = defaultdict(list)
    for s, c in h:
        support = tuple(k for k, ch in enumerate(s) if ch in "XY")
        groups[support].append((s, c))
    qset = set(qubits)
    for support, members in groups.items():
        if not support:
            continue
        zs = {k for st, _ in members for k, ch in enumerate(st) if ch == "Z"}
        sub = sorted(set(support) | zs)
        m = len(sub)
        patterns = np.arange(2**m)
        states = np.zeros(2**m, dtype=np.int64)
        for j, k in enumerate(sub):
            states |= ((patterns >> (m - 1 - j)) & 1) << (n - 1 - k)
        acc = defaultdict(complex)
        for s, c in members:
            targets, phases = apply_pauli_string(s, states)
            for b, tgt, ph in zip(states, targets, phases):
                acc[(int(b), int(tgt))] += c * ph
        for (b, tgt), amp in acc.items():
            if abs(amp) < 1e-14:
                continue
            before = sum((b >> (n - 1 - k)) & 1 for k in qset)
            after = sum((tgt >> (n - 1 - k)) & 1 for k in qset)
            if before != after:
                return False
    return True


def _string(n: int, ops: dict[int, str]) -> str:
    chars = ["I"] * n
    for k, ch in ops.items():
        chars[k] = ch
    return "".join(chars)


def hopping_terms(n: int, p: int, q: int, amplitude: float):
    """``amplitude * (a_p^dag a_q + a_q^dag a_p)`` as Pauli terms."""
    p, q = min(p, q), max(p, q)
    zs = {k: "Z" for k in range(p + 1, q)}
    return [
        (0.5 * amplitude, _string(n, {p: "X", **zs, q: "X"})),
        (0.5 * amplitude, _string(n, {p: "Y", **zs, q: "Y"})),
    ]


def number_terms(n: int, p: int, weight: float):
    """``weight * n_p``."""
    return [(0.5 * weight, "I" * n), (-0.5 * weight, _string(n, {p: "Z"}))]


def density_density_terms(n: int, p: int, q: int, weight: float):
    """``weight * n_p n_q`` for ``p != q``."""
    w = 0.25 * weight
    return [
        (w, "I" * n),
        (-w, _string(n, {p: "Z"})),
        (-w, _string(n, {q: "Z"})),
        (w, _string(n, {p: "Z", q: "Z"})),
    ]


def jordan_wigner(model: HubbardModel, layout: QubitLayout | None = None) -> PauliSum:
    """Qubit Hamiltonian of a realised model.

    ``H = -sum t_b (a^dag a + h.c.) + sum mu_s n_s + U sum n_up n_dn
    + V sum_bonds sum_{s,s'} n_{i s} n_{j s'}``.
    """
    layout = layout or model.layout()
    if layout.n_sites != model.n_sites:
        raise ValueError("layout does not cover the model geometry")
    n = layout.n_qubits
    terms = []
    for (i, j), tij in model.hopping_table.items():
        for spin in (UP, DOWN):
            terms += hopping_terms(n, layout.qubit(i, spin), layout.qubit(j, spin), -tij)
    for s, mu in model.chemical_potential.items():
        if mu != 0.0:
            for spin in (UP, DOWN):
                terms += number_terms(n, layout.qubit(s, spin), mu)
    if model.u != 0.0:
        for s in model.geometry.sites():
            terms += density_density_terms(
                n, layout.qubit(s, UP), layout.qubit(s, DOWN), model.u
            )
    if model.v != 0.0:
        for i, j in model.geometry.bonds:
            for si in (UP, DOWN):
                for sj in (UP, DOWN):
                    terms += density_density_terms(
                        n, layout.qubit(i, si), layout.qubit(j, sj), model.v
                    )
    return PauliSum.from_terms(n, terms)


def spin_z_terms(layout: QubitLayout, site: int) -> list[tuple[float, str]]:
    """``S^z_site = (n_up - n_dn) / 2 = (Z_dn - Z_up) / 4``."""
    n = layout.n_qubits
    return [
        (-0.25, _string(n, {layout.qubit(site, UP): "Z"})),
        (0.25, _string(n, {layout.qubit(site, DOWN): "Z"})),
    ]


def sector_basis(n_qubits: int, groups: list[tuple[list[int], int]]) -> np.ndarray:
    """Sorted basis states with a fixed particle count in each qubit group.

    ``groups`` is a list of ``(qubits, count)``; qubits not in any group are
    left free.
    """
    from itertools import combinations

    partial = np.zeros(1, dtype=np.int64)
    covered = set()
    for qubits, count in groups:
        if not 0 <= count <= len(qubits):
            return np.zeros(0, dtype=np.int64)
        choices = np.array(
            [
                sum(1 << (n_qubits - 1 - q) for q in combo)
                for combo in combinations(qubits, count)
            ],
            dtype=np.int64,
        )
        partial = (partial[:, None] | choices[None, :]).ravel()
        covered.update(qubits)
    for q in range(n_qubits):
        if q not in covered:
            bit = np.int64(1 << (n_qubits - 1 - q))
            partial = np.concatenate([partial, partial | bit])
    return np.sort(partial)


def bitstring_to_index(bits: str) -> int:
    return int(bits, 2)
