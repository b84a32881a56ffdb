"""Matrix product states and operators for qubit chains.

MPS tensors have shape ``(left, physical, right)``; MPO tensors have shape
``(left, out, in, right)``.  Two-qubit gates are 4x4 matrices in the basis
``|q_i q_j>`` with the first listed qubit as the most significant bit.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import NumericalConsistencyError
from .pauli import PauliSum

CHECKPOINT_VERSION = 1

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _svd(mat):
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


def fix_svd_gauge(u, s, vh):
    """Make the largest-magnitude entry of every right singular vector real positive."""
    if vh.size == 0:
        return u, s, vh
    idx = np.argmax(np.abs(vh), axis=1)
    pivot = vh[np.arange(vh.shape[0]), idx]
    phase = pivot / np.where(np.abs(pivot) > 0, np.abs(pivot), 1.0)
    vh = vh * phase.conj()[:, None]
    u = u * phase[None, :]
    return u, s, vh


def truncated_svd(mat, chi_max=None, cutoff=0.0):
    """SVD keeping ``s_k >= cutoff * s_max``, at most ``chi_max`` values.

    Kept singular values are rescaled so the Frobenius norm of ``mat`` is
    preserved.  Returns ``(u, s, vh, discarded_weight)``.
    """
    u, s, vh = _svd(mat)
    u, s, vh = fix_svd_gauge(u, s, vh)
    keep = len(s)
    if keep and cutoff > 0:
        keep = max(1, int(np.count_nonzero(s >= cutoff * s[0])))
    if chi_max is not None:
        keep = min(keep, chi_max)
    keep = max(keep, 1)
    total = float(np.sum(s**2))
    kept = float(np.sum(s[:keep] ** 2))
    s = s[:keep]
    if 0 < kept < total:
        s = s * np.sqrt(total / kept)
    return u[:, :keep], s, vh[:keep], total - kept


class MpsState:
    """Finite MPS on ``n`` qubits with a tracked orthogonality center.

    Bonds are capped at ``chi_max``; singular values below
    ``cutoff * s_max`` are dropped after every two-qubit gate.
    """

    def __init__(self, tensors, chi_max=None, cutoff=0.0, center=0):
        self.tensors = [np.asarray(t) for t in tensors]
        n = len(self.tensors)
        self.chi_max = int(chi_max) if chi_max is not None else 2 ** (n // 2)
        self.cutoff = float(cutoff)
        self.center = int(center)
        self.discarded_weight = 0.0
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")

    @property
    def n_qubits(self) -> int:
        return len(self.tensors)

    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self) -> "MpsState":
        out = MpsState(
            [t.copy() for t in self.tensors], self.chi_max, self.cutoff, self.center
        )
        out.discarded_weight = self.discarded_weight
        return out

    # ------------------------------------------------------------------
    # canonical form
    def move_center(self, site: int) -> "MpsState":
        """Shift the orthogonality center to ``site`` with QR steps."""
        if not 0 <= site < self.n_qubits:
            raise IndexError(site)
        ts = self.tensors
        while self.center < site:
            c = self.center
            dl, d, dr = ts[c].shape
            q, r = np.linalg.qr(ts[c].reshape(dl * d, dr))
            ts[c] = q.reshape(dl, d, q.shape[1])
            ts[c + 1] = np.tensordot(r, ts[c + 1], axes=(1, 0))
            self.center += 1
        while self.center > site:
            c = self.center
            dl, d, dr = ts[c].shape
            q, r = np.linalg.qr(ts[c].reshape(dl, d * dr).conj().T)
            ts[c] = q.conj().T.reshape(q.shape[1], d, dr)
            ts[c - 1] = np.tensordot(ts[c - 1], r.conj().T, axes=(2, 0))
            self.center -= 1
        return self

    def canonicalize(self, site: int = 0) -> "MpsState":
        """Bring the state into mixed-canonical form centered on ``site``."""
        self.center = self.n_qubits - 1
        self.move_center(0)
        return self.move_center(site)

    # ------------------------------------------------------------------
    # gates
    def apply_one_qubit_gate(self, qubit: int, gate, check: bool = False):
        gate = np.asarray(gate)
        if check:
            _check_unitary(gate)
        self.tensors[qubit] = np.einsum("ij,ajb->aib", gate, self.tensors[qubit])
        return self

    def apply_two_qubit_gate(self, qubits, gate, check: bool = False):
        """Apply a 4x4 gate to chain-adjacent qubits and re-split by SVD."""
        i, j = qubits
        gate = np.asarray(gate)
        if abs(i - j) != 1:
            raise ValueError(f"qubits {i}, {j} are not adjacent")
        if check:
            _check_unitary(gate)
        if i > j:
            i, j = j, i
            gate = _swap_qubits(gate)
        came_from_right = self.center > i
        if self.center < i:
            self.move_center(i)
        elif self.center > j:
            self.move_center(j)
        a, b = self.tensors[i], self.tensors[j]
        dl, dr = a.shape[0], b.shape[2]
        theta = np.tensordot(a, b, axes=(2, 0))  # (dl, 2, 2, dr)
        theta = np.tensordot(gate.reshape(2, 2, 2, 2), theta, axes=([2, 3], [1, 2]))
        theta = theta.transpose(2, 0, 1, 3).reshape(dl * 2, 2 * dr)
        u, s, vh, lost = truncated_svd(theta, self.chi_max, self.cutoff)
        self.discarded_weight += lost
        k = len(s)
        if came_from_right:
            self.tensors[i] = (u * s).reshape(dl, 2, k)
            self.tensors[j] = vh.reshape(k, 2, dr)
            self.center = i
        else:
            self.tensors[i] = u.reshape(dl, 2, k)
            self.tensors[j] = (s[:, None] * vh).reshape(k, 2, dr)
            self.center = j
        return self

    # ------------------------------------------------------------------
    # conversions
    def to_dense(self) -> np.ndarray:
        psi = self.tensors[0].reshape(2, -1)
        for t in self.tensors[1:]:
            psi = np.tensordot(psi, t, axes=(1, 0)).reshape(-1, t.shape[2])
        return psi.reshape(-1)

    @classmethod
    def from_dense(cls, vec, chi_max=None, cutoff=0.0) -> "MpsState":
        vec = np.asarray(vec)
        n = int(round(np.log2(vec.size)))
        if 2**n != vec.size:
            raise ValueError("vector length is not a power of two")
        tensors = []
        rest = vec.reshape(1, -1)
        for _ in range(n - 1):
            dl = rest.shape[0]
            u, s, vh, _ = truncated_svd(rest.reshape(dl * 2, -1), chi_max, cutoff)
            tensors.append(u.reshape(dl, 2, len(s)))
            rest = s[:, None] * vh
        tensors.append(rest.reshape(rest.shape[0], 2, 1))
        return cls(tensors, chi_max, cutoff, center=n - 1)

    def amplitude(self, bits: str) -> complex:
        env = np.ones((1,), dtype=complex)
        for t, b in zip(self.tensors, bits):
            env = env @ t[:, int(b), :]
        return complex(env[0])

    def norm(self) -> float:
        return float(np.sqrt(abs(inner_product(self, self))))

    def entanglement_entropy(self, cut: int) -> float:
        """Von Neumann entropy between qubits ``< cut`` and ``>= cut``."""
        if not 0 < cut < self.n_qubits:
            return 0.0
        tmp = self.copy().move_center(cut - 1)
        t = tmp.tensors[cut - 1]
        s = np.linalg.svd(t.reshape(-1, t.shape[2]), compute_uv=False)
        p = s**2 / np.sum(s**2)
        p = p[p > 1e-300]
        return float(-np.sum(p * np.log(p)))

    # ------------------------------------------------------------------
    # persistence
    def save(self, path) -> None:
        arrays = {f"t{k}": t for k, t in enumerate(self.tensors)}
        np.savez(
            path,
            version=CHECKPOINT_VERSION,
            n_qubits=self.n_qubits,
            chi_max=self.chi_max,
            cutoff=self.cutoff,
            center=self.center,
            **arrays,
        )

    @classmethod
    def load(cls, path) -> "MpsState":
        with np.load(Path(path), allow_pickle=False) as data:
            if int(data["version"]) != CHECKPOINT_VERSION:
                raise ValueError("unsupported checkpoint version")
            n = int(data["n_qubits"])
            tensors = [data[f"t{k}"] for k in range(n)]
            return cls(
                tensors, int(data["chi_max"]), float(data["cutoff"]), int(data["center"])
            )


def _check_unitary(gate, atol=1e-12):
    if not np.allclose(gate.conj().T @ gate, np.eye(gate.shape[0]), atol=atol):
        raise ValueError("gate is not unitary")


def _swap_qubits(gate):
    return gate.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)


def product_state(occupations: str, chi_max=None, cutoff=0.0, dtype=complex) -> MpsState:
    """Computational basis state, ``occupations[k]`` giving qubit ``k``."""
    tensors = []
    for b in occupations:
        if b not in "01":
            raise ValueError(f"bad occupation bitstring {occupations!r}")
        t = np.zeros((1, 2, 1), dtype=dtype)
        t[0, int(b), 0] = 1.0
        tensors.append(t)
    return MpsState(tensors, chi_max, cutoff, center=0)


def apply_one_qubit_gate(state: MpsState, qubit: int, gate, check=False) -> MpsState:
    return state.apply_one_qubit_gate(qubit, gate, check)


def apply_two_qubit_gate(state: MpsState, qubits, gate, check=False) -> MpsState:
    return state.apply_two_qubit_gate(qubits, gate, check)


def inner_product(a: MpsState, b: MpsState, insert=None) -> complex:
    """``<a|b>``, optionally with a local operator ``insert = (sites, matrix)``.

    ``sites`` is ``(k,)`` for a 2x2 matrix or ``(k, k + 1)`` for a 4x4 one.
    """
    if a.n_qubits != b.n_qubits:
        raise ValueError("states have different qubit counts")
    sites, op = insert if insert is not None else ((), None)
    env = np.ones((1, 1), dtype=complex)
    k = 0
    n = a.n_qubits
    while k < n:
        if sites and k == sites[0] and len(sites) == 2:
            ka = np.tensordot(a.tensors[k], a.tensors[k + 1], axes=(2, 0))
            kb = np.tensordot(b.tensors[k], b.tensors[k + 1], axes=(2, 0))
            kb = np.tensordot(op.reshape(2, 2, 2, 2), kb, axes=([2, 3], [1, 2]))
            kb = kb.transpose(2, 0, 1, 3)
            tmp = np.tensordot(env, kb, axes=(1, 0))  # (a_bra, s1, s2, b_r)
            env = np.tensordot(ka.conj(), tmp, axes=([0, 1, 2], [0, 1, 2]))
            k += 2
            continue
        tb = b.tensors[k]
        if sites and k == sites[0]:
            tb = np.einsum("ij,ajb->aib", op, tb)
        tmp = np.tensordot(env, tb, axes=(1, 0))  # (a_bra, s, b_r)
        env = np.tensordot(a.tensors[k].conj(), tmp, axes=([0, 1], [0, 1]))
        k += 1
    return complex(env[0, 0])


class MpoOperator:
    """Matrix product operator with tensors ``(left, out, in, right)``."""

    def __init__(self, tensors):
        self.tensors = [np.asarray(t) for t in tensors]
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[3] != 1:
            raise ValueError("boundary MPO bonds must have dimension 1")

    @property
    def n_qubits(self) -> int:
        return len(self.tensors)

    def bond_dims(self) -> list[int]:
        return [w.shape[3] for w in self.tensors[:-1]]

    def to_dense(self) -> np.ndarray:
        op = self.tensors[0][0]  # (out, in, r)
        d = 2
        for w in self.tensors[1:]:
            op = np.tensordot(op, w, axes=(2, 0))  # (O, I, o, i, r)
            o, i = op.shape[0], op.shape[1]
            op = op.transpose(0, 2, 1, 3, 4).reshape(o * 2, i * 2, -1)
            d *= 2
        return op[:, :, 0]

    def __add__(self, other: "MpoOperator") -> "MpoOperator":
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        n = self.n_qubits
        out = []
        for k, (a, b) in enumerate(zip(self.tensors, other.tensors)):
            la = 1 if k == 0 else a.shape[0] + b.shape[0]
            ra = 1 if k == n - 1 else a.shape[3] + b.shape[3]
            w = np.zeros((la, 2, 2, ra), dtype=np.result_type(a, b))
            lo = 0 if k == 0 else a.shape[0]
            ro = 0 if k == n - 1 else a.shape[3]
            if n == 1:
                w = a + b
            elif k == 0:
                w[:, :, :, : a.shape[3]] = a
                w[:, :, :, ro:] = b
            elif k == n - 1:
                w[: a.shape[0]] = a
                w[lo:] = b
            else:
                w[: a.shape[0], :, :, : a.shape[3]] = a
                w[lo:, :, :, ro:] = b
            out.append(w)
        return MpoOperator(out)

    def compress(self, cutoff: float = 1e-13) -> "MpoOperator":
        """Return an equivalent MPO with numerically redundant channels removed."""
        ts = [w.copy() for w in self.tensors]
        n = len(ts)
        for k in range(n - 1):
            dl = ts[k].shape[0]
            q, r = np.linalg.qr(ts[k].reshape(dl * 4, -1))
            ts[k] = q.reshape(dl, 2, 2, q.shape[1])
            ts[k + 1] = np.tensordot(r, ts[k + 1], axes=(1, 0))
        for k in range(n - 1, 0, -1):
            dr = ts[k].shape[3]
            mat = ts[k].reshape(ts[k].shape[0], 4 * dr)
            u, s, vh, _ = truncated_svd(mat, None, cutoff)
            ts[k] = vh.reshape(len(s), 2, 2, dr)
            ts[k - 1] = np.tensordot(ts[k - 1], u * s, axes=(3, 0))
        return MpoOperator(ts)


def mpo_from_pauli_sum(h: PauliSum, compress: bool = False) -> MpoOperator:
    """Exact MPO of a Pauli sum via a prefix-sharing finite-state machine.

    Channel ``start`` carries identities before a term begins and ``done``
    carries identities after it ends; open terms travel on channels keyed by
    their starting site and the Pauli prefix placed so far, so terms with a
    common prefix share a channel.  The coefficient is attached at the last
    non-identity site.
    """
    n = h.n_qubits
    if n == 1:
        w = sum(c * PAULI[s] for s, c in h).reshape(1, 2, 2, 1)
        return MpoOperator([w])
    channels = [dict() for _ in range(n + 1)]
    channels[0]["start"] = 0
    channels[n]["done"] = 0
    for k in range(1, n):
        channels[k]["start"] = 0
        channels[k]["done"] = 1
    moves = [[] for _ in range(n)]  # (in_key, out_key, op, coeff)

    def key_index(bond, key):
        table = channels[bond]
        if key not in table:
            table[key] = len(table)
        return key

    for string, coeff in h:
        support = [k for k, ch in enumerate(string) if ch != "I"]
        if not support:
            moves[0].append(("start", "done", "I", coeff))
            continue
        a, b = support[0], support[-1]
        if a == b:
            moves[a].append(("start", "done", string[a], coeff))
            continue
        prev = "start"
        for k in range(a, b):
            cur = key_index(k + 1, ("open", a, string[a : k + 1]))
            moves[k].append((prev, cur, string[k], 1.0))
            prev = cur
        moves[b].append((prev, "done", string[b], coeff))
    tensors = []
    for k in range(n):
        left, right = channels[k], channels[k + 1]
        w = np.zeros((len(left), 2, 2, len(right)), dtype=complex)
        if "start" in left and "start" in right:
            w[left["start"], :, :, right["start"]] += PAULI["I"]
        if "done" in left and "done" in right:
            w[left["done"], :, :, right["done"]] += PAULI["I"]
        seen = set()
        for src, dst, ch, c in moves[k]:
            if isinstance(dst, tuple):
                if (src, dst) in seen:
                    continue
                seen.add((src, dst))
            w[left[src], :, :, right[dst]] += c * PAULI[ch]
        tensors.append(w)
    mpo = MpoOperator(tensors)
    return mpo.compress() if compress else mpo


def number_penalty_mpo(n: int, qubits, target: int, weight: float) -> MpoOperator:
    """MPO of ``weight * (sum_{k in qubits} n_k - target)**2`` with bond dimension 3."""
    num = np.diag([0.0, 1.0]).astype(complex)
    eye = np.eye(2, dtype=complex)
    qubits = set(qubits)
    tensors = []
    for k in range(n):
        w = np.zeros((3, 2, 2, 3), dtype=complex)
        w[0, :, :, 0] = eye
        w[1, :, :, 1] = eye
        w[2, :, :, 2] = eye
        if k in qubits:
            w[0, :, :, 1] = num
            w[0, :, :, 2] = (1 - 2 * target) * weight * num
            w[1, :, :, 2] = 2 * weight * num
        if k == 0:
            w[0, :, :, 2] += weight * target**2 * eye
            w = w[:1]
        if k == n - 1:
            w = w[:, :, :, 2:]
        tensors.append(w)
    return MpoOperator(tensors)


def expectation(state: MpsState, op: MpoOperator, atol_imag: float = 1e-9) -> float:
    """Real ``<psi|O|psi>``; raises if the raw contraction is not real."""
    value = mpo_braket(state, op, state)
    if abs(value.imag) > atol_imag:
        raise NumericalConsistencyError(
            f"expectation has imaginary part {value.imag:.3e}"
        )
    return float(value.real)


def mpo_braket(a: MpsState, op: MpoOperator, b: MpsState) -> complex:
    """``<a|O|b>`` by left-to-right environment contraction."""
    if not a.n_qubits == b.n_qubits == op.n_qubits:
        raise ValueError("size mismatch between states and operator")
    env = np.ones((1, 1, 1), dtype=complex)  # (bra, mpo, ket)
    for ta, w, tb in zip(a.tensors, op.tensors, b.tensors):
        tmp = np.tensordot(env, tb, axes=(2, 0))  # (bra, mpo, s_in, ket_r)
        tmp = np.tensordot(tmp, w, axes=([1, 2], [0, 2]))  # (bra, ket_r, s_out, mpo_r)
        env = np.tensordot(ta.conj(), tmp, axes=([0, 1], [0, 2]))  # (bra_r, ket_r, mpo_r)
        env = env.transpose(0, 2, 1)
    return complex(env[0, 0, 0])


def apply_mpo(op: MpoOperator, state: MpsState, chi_max=None, cutoff=0.0) -> MpsState:
    """``O|psi>`` as an MPS, compressed back to ``chi_max`` by SVD sweeps."""
    tensors = []
    for w, t in zip(op.tensors, state.tensors):
        x = np.tensordot(w, t, axes=(2, 1))  # (wl, s_out, wr, tl, tr)
        x = x.transpose(0, 3, 1, 2, 4)
        wl, tl, d, wr, tr = x.shape
        tensors.append(x.reshape(wl * tl, d, wr * tr))
    out = MpsState(tensors, chi_max or state.chi_max, cutoff, center=0)
    out.center = out.n_qubits - 1
    out.move_center(0)
    # Right-to-left QR leaves a right-canonical chain; truncate left to right.
    ts = out.tensors
    for k in range(out.n_qubits - 1):
        dl, d, dr = ts[k].shape
        u, s, vh, lost = truncated_svd(ts[k].reshape(dl * d, dr), out.chi_max, cutoff)
        out.discarded_weight += lost
        ts[k] = u.reshape(dl, d, len(s))
        ts[k + 1] = np.tensordot(s[:, None] * vh, ts[k + 1], axes=(1, 0))
    out.center = out.n_qubits - 1
    return out
