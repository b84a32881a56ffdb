"""Dense statevector execution of circuits, with adjoint gradients.

At full bond dimension an MPS simulation is exact, so this backend gives the
same states as :func:`hubbardvqe.circuits.evaluate` while avoiding SVDs.  It
is the fast path for optimisation on up to ~20 qubits and the reference
oracle in the tests.  Qubit 0 is the most significant bit of the index.
"""

from __future__ import annotations

import numpy as np

from .circuits import Circuit, GateOp


def basis_state(bits: str) -> np.ndarray:
    psi = np.zeros(2 ** len(bits), dtype=complex)
    psi[int(bits, 2)] = 1.0
    return psi


def apply_matrix(psi: np.ndarray, n: int, gate: np.ndarray, qubits) -> np.ndarray:
    """Apply a 2x2 or 4x4 matrix to arbitrary qubits (generic, slow path)."""
    k = len(qubits)
    t = psi.reshape((2,) * n)
    t = np.tensordot(gate.reshape((2,) * (2 * k)), t, axes=(list(range(k, 2 * k)), list(qubits)))
    t = np.moveaxis(t, list(range(k)), list(qubits))
    return t.reshape(-1)


def _popcount_before(states: np.ndarray, q: int, n: int) -> np.ndarray:
    """Number of occupied qubits with index ``< q`` in each state."""
    mask = ((1 << n) - 1) ^ ((1 << (n - q)) - 1)
    return np.bitwise_count(states & mask)


def excitation_pairs(occupied, virtual, n: int):
    """Basis pairs ``(x, y, sign)`` with ``a^dag_virt ... a_occ |x> = sign |y>``.

    The operator order is ``a^dag_a a^dag_b ... a_j a_i`` for
    ``occupied = (i, j, ...)`` and ``virtual = (a, b, ...)``.
    """
    states = np.arange(2**n, dtype=np.int64)
    need = sum(1 << (n - 1 - q) for q in occupied)
    empty = sum(1 << (n - 1 - q) for q in virtual)
    x = states[((states & need) == need) & ((states & empty) == 0)]
    y = x.copy()
    parity = np.zeros(len(x), dtype=np.int64)
    for q in occupied:  # a_i acts first
        parity += _popcount_before(y, q, n)
        y ^= 1 << (n - 1 - q)
    for q in reversed(virtual):  # then a^dag_b, then a^dag_a
        parity += _popcount_before(y, q, n)
        y ^= 1 << (n - 1 - q)
    sign = 1.0 - 2.0 * (parity & 1)
    return x, y, sign


def _compile(ops):
    """Fuse ``FSWAP`` routing chains around a gate into one long-range op.

    An FSWAP chain carrying mode ``a`` next to ``b``, a gate on ``(b - 1, b)``
    and the reversed chain act on modes ``a`` and ``b`` like the bare gate
    with its hopping block multiplied by the Jordan-Wigner parity of the
    qubits in between.  Returns ``(index, op, a, b)`` entries; ``a, b`` are
    ``None`` for ops that are kept as they are.
    """
    prog = []
    i = 0
    while i < len(ops):
        op = ops[i]
        if op.kind == "FSWAP":
            a = op.qubits[0]
            length = 0
            while (
                i + length < len(ops)
                and ops[i + length].kind == "FSWAP"
                and ops[i + length].qubits == (a + length, a + length + 1)
            ):
                length += 1
            end = i + length
            gate = ops[end] if end < len(ops) else None
            undo = ops[end + 1 : end + 1 + length]
            if (
                gate is not None
                and gate.kind in ("NP", "EP")
                and gate.qubits == (a + length, a + length + 1)
                and list(undo) == list(ops[i:end])[::-1]
            ):
                prog.append((end, gate, a, a + length + 1))
                i = end + 1 + length
                continue
        if op.kind in ("NP", "EP", "FSWAP"):
            prog.append((i, op, op.qubits[0], op.qubits[1]))
        else:
            prog.append((i, op, None, None))
        i += 1
    return prog


class DenseCircuit:
    """A circuit compiled for repeated dense execution."""

    def __init__(self, circuit: Circuit):
        self.circuit = circuit
        self.n = circuit.n_qubits
        self._ucc = {}
        for k, op in enumerate(circuit.ops):
            if op.kind == "UCC":
                self._ucc[k] = excitation_pairs(op.occupied, op.virtual, self.n)
        self.program = _compile(circuit.ops)
        self._parity = {}
        for _, op, a, b in self.program:
            if a is not None and b - a > 1 and (a, b) not in self._parity:
                mid = np.arange(2 ** (b - a - 1))
                sign = 1.0 - 2.0 * (np.bitwise_count(mid) & 1)
                self._parity[(a, b)] = sign[None, :, None]

    # ------------------------------------------------------------------
    def _pair_view(self, psi, a, b):
        return psi.reshape(2**a, 2, 2 ** (b - a - 1), 2, -1)

    def apply(self, entry, psi: np.ndarray, params, inverse=False):
        """Apply one program entry in place."""
        k, op, a, b = entry
        sgn = -1.0 if inverse else 1.0
        kind = op.kind
        if kind == "UCC":
            x, y, sign = self._ucc[k]
            theta = sgn * params[op.slots[0]]
            c, s = np.cos(theta), np.sin(theta)
            px, py = psi[x], psi[y]
            psi[x] = c * px - s * sign * py
            psi[y] = c * py + s * sign * px
            return psi
        if kind == "RZ":
            v = psi.reshape(2 ** op.qubits[0], 2, -1)
            theta = sgn * params[op.slots[0]]
            v[:, 0] *= np.exp(-0.5j * theta)
            v[:, 1] *= np.exp(0.5j * theta)
            return psi
        v = self._pair_view(psi, a, b)
        if kind == "FSWAP":
            tmp = v[:, 0, :, 1].copy()
            v[:, 0, :, 1] = v[:, 1, :, 0]
            v[:, 1, :, 0] = tmp
            v[:, 1, :, 1] *= -1.0
            return psi
        theta, phi = params[op.slots[0]], params[op.slots[1]]
        if kind == "EP":
            theta, phi = -0.5 * theta, -phi
        theta, phi = sgn * theta, sgn * phi
        c, s = np.cos(theta), 1j * np.sin(theta)
        if b - a > 1:
            s = s * self._parity[(a, b)]
        x01 = v[:, 0, :, 1].copy()
        x10 = v[:, 1, :, 0]
        v[:, 0, :, 1] = c * x01 + s * x10
        v[:, 1, :, 0] = s * x01 + c * x10
        v[:, 1, :, 1] *= np.exp(1j * phi)
        return psi

    def generator_overlaps(self, entry, lam, psi):
        """``[(slot, <lam|G psi>)]`` for each generator of one entry."""
        k, op, a, b = entry
        kind = op.kind
        if kind == "FSWAP":
            return []
        if kind == "UCC":
            x, y, sign = self._ucc[k]
            val = np.vdot(lam[y], sign * psi[x]) - np.vdot(lam[x], sign * psi[y])
            return [(op.slots[0], val)]
        if kind == "RZ":
            q = op.qubits[0]
            lv, pv = lam.reshape(2**q, 2, -1), psi.reshape(2**q, 2, -1)
            val = -0.5j * (np.vdot(lv[:, 0], pv[:, 0]) - np.vdot(lv[:, 1], pv[:, 1]))
            return [(op.slots[0], val)]
        lv, pv = self._pair_view(lam, a, b), self._pair_view(psi, a, b)
        p01, p10 = pv[:, 0, :, 1], pv[:, 1, :, 0]
        if b - a > 1:
            par = self._parity[(a, b)]
            p01, p10 = p01 * par, p10 * par
        hop = 1j * (np.vdot(lv[:, 0, :, 1], p10) + np.vdot(lv[:, 1, :, 0], p01))
        dbl = 1j * np.vdot(lv[:, 1, :, 1], pv[:, 1, :, 1])
        if kind == "EP":
            hop, dbl = -0.5 * hop, -dbl
        return [(op.slots[0], hop), (op.slots[1], dbl)]

    # ------------------------------------------------------------------
    def run(self, params, psi0) -> np.ndarray:
        psi = np.array(psi0, dtype=complex, copy=True)
        for entry in self.program:
            self.apply(entry, psi, params)
        return psi

    def backpropagate(self, params, psi, lam) -> np.ndarray:
        """Gradient ``2 Re <lam_k|G_k psi_k>`` by uncomputing the circuit.

        ``psi`` is the circuit output and ``lam`` the derivative of the loss
        with respect to ``<psi|``.  Both arrays are consumed.
        """
        grad = np.zeros(self.circuit.n_parameters)
        for entry in reversed(self.program):
            for slot, val in self.generator_overlaps(entry, lam, psi):
                grad[slot] += 2.0 * val.real
            self.apply(entry, psi, params, inverse=True)
            self.apply(entry, lam, params, inverse=True)
        return grad
