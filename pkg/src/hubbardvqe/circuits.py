"""Gate matrices and the NP, EP and UCCSD parameterised circuits.

Every parameterised gate is ``exp(theta * G)`` for a fixed anti-Hermitian
generator ``G`` (or a product of two commuting such exponentials), which is
what the gradient code relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import CapabilityError, ConfigError
from .lattice import DOWN, UP, LatticeGeometry, QubitLayout, checkerboard_occupation
from .mps import MpsState

GATE_KINDS = ("RZ", "NP", "EP", "FSWAP", "UCC")
N_SLOTS = {"RZ": 1, "NP": 2, "EP": 2, "FSWAP": 0, "UCC": 1}

#: Largest register the dense UCC path accepts (2x4 lattice).
DENSE_QUBIT_BUDGET = 16


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def np_gate(theta: float, phi: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [1, 0, 0, 0],
            [0, c, 1j * s, 0],
            [0, 1j * s, c, 0],
            [0, 0, 0, np.exp(1j * phi)],
        ],
        dtype=complex,
    )


def ep_gate(theta: float, phi: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array(
        [
            [1, 0, 0, 0],
            [0, c, -1j * s, 0],
            [0, -1j * s, c, 0],
            [0, 0, 0, np.exp(-1j * phi)],
        ],
        dtype=complex,
    )


def fswap() -> np.ndarray:
    return np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, -1]], dtype=complex
    )


@dataclass(frozen=True)
class GateOp:
    """One gate of a circuit.

    ``slots`` index the global parameter vector.  UCC factors carry the
    occupied and virtual spin-orbitals of their excitation instead of a
    fixed qubit pair.
    """

    kind: str
    qubits: tuple
    slots: tuple = ()
    occupied: tuple = ()
    virtual: tuple = ()
    tag: str = ""

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigError(f"unknown gate kind {self.kind}")
        if len(self.slots) != N_SLOTS[self.kind]:
            raise ConfigError(f"{self.kind} needs {N_SLOTS[self.kind]} parameter slots")

    def matrix(self, params) -> np.ndarray:
        vals = [params[s] for s in self.slots]
        if self.kind == "RZ":
            return rz(*vals)
        if self.kind == "NP":
            return np_gate(*vals)
        if self.kind == "EP":
            return ep_gate(*vals)
        if self.kind == "FSWAP":
            return fswap()
        raise CapabilityError("UCC factors have no fixed-size matrix")

    def to_text(self) -> str:
        fields = [self.kind]
        if self.kind == "UCC":
            fields.append("occ=" + ",".join(map(str, self.occupied)))
            fields.append("vir=" + ",".join(map(str, self.virtual)))
        else:
            fields.append("q=" + ",".join(map(str, self.qubits)))
        fields.append("slots=" + ",".join(map(str, self.slots)))
        if self.tag:
            fields.append("tag=" + self.tag)
        return "\t".join(fields)

    @classmethod
    def from_text(cls, line: str) -> "GateOp":
        kind, *rest = line.split("\t")
        kv = dict(item.split("=", 1) for item in rest)

        def ints(key):
            raw = kv.get(key, "")
            return tuple(int(v) for v in raw.split(",") if v)

        occ, vir = ints("occ"), ints("vir")
        qubits = tuple(sorted(occ + vir)) if kind == "UCC" else ints("q")
        return cls(kind, qubits, ints("slots"), occ, vir, kv.get("tag", ""))


@dataclass(frozen=True)
class Circuit:
    """Ordered gates on ``n_qubits`` with ``n_parameters`` free angles."""

    n_qubits: int
    ops: tuple
    n_parameters: int
    family: str = "custom"
    layers: int | None = None
    lattice: tuple | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def validate(self) -> "Circuit":
        used = set()
        for op in self.ops:
            for q in op.qubits:
                if not 0 <= q < self.n_qubits:
                    raise ConfigError(f"{op.kind} acts outside the register")
            if op.kind in ("NP", "EP", "FSWAP"):
                a, b = op.qubits
                if abs(a - b) != 1:
                    raise ConfigError(f"{op.kind} on non-adjacent qubits {a}, {b}")
            for s in op.slots:
                if not 0 <= s < self.n_parameters:
                    raise ConfigError(f"slot {s} out of range")
                used.add(s)
        if len(used) != self.n_parameters:
            raise ConfigError("some parameter slots are never used")
        return self

    @property
    def n_gates(self) -> int:
        return len(self.ops)

    def count(self, kind: str) -> int:
        return sum(op.kind == kind for op in self.ops)

    def to_text(self) -> str:
        head = (
            f"# family={self.family} layers={self.layers} n_qubits={self.n_qubits}"
            f" n_parameters={self.n_parameters}"
        )
        if self.lattice:
            head += f" lattice={self.lattice[0]}x{self.lattice[1]}"
        return "\n".join([head] + [op.to_text() for op in self.ops]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Circuit":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = dict(item.split("=", 1) for item in lines[0].lstrip("# ").split())
        lattice = None
        if "lattice" in head:
            lattice = tuple(int(v) for v in head["lattice"].split("x"))
        layers = None if head["layers"] == "None" else int(head["layers"])
        ops = tuple(GateOp.from_text(ln) for ln in lines[1:])
        return cls(
            int(head["n_qubits"]),
            ops,
            int(head["n_parameters"]),
            head["family"],
            layers,
            lattice,
        ).validate()


class _Slots:
    def __init__(self):
        self.n = 0

    def take(self, k: int) -> tuple:
        out = tuple(range(self.n, self.n + k))
        self.n += k
        return out


def routed_gate(kind: str, a: int, b: int, slots: tuple, tag: str = "") -> list[GateOp]:
    """Apply ``kind`` between distant qubits via a fermionic-SWAP chain.

    The mode on the lower qubit is carried up to ``b - 1``, the gate acts on
    ``(b - 1, b)`` and the chain is undone in reverse order.
    """
    a, b = min(a, b), max(a, b)
    route = [GateOp("FSWAP", (k, k + 1), tag=tag) for k in range(a, b - 1)]
    return route + [GateOp(kind, (b - 1, b), slots, tag=tag)] + route[::-1]


def np_parameter_count(nx: int, ny: int, layers: int) -> int:
    n = nx * ny
    return 2 * n + layers * (10 * n - 4 * nx - 4 * ny)


def ep_parameter_count(nx: int, ny: int, layers: int) -> int:
    nq = 2 * nx * ny
    return 2 * nq + layers * 2 * (nq - 1)


def build_np_ansatz(
    geometry: LatticeGeometry, layers: int, layout: QubitLayout | None = None
) -> Circuit:
    """Rz on every qubit, then ``layers`` NP layers in the order o, h1, v1, h2, v2.

    Each on-site pair and each same-spin hopping pair gets its own NP gate
    with independent ``(theta, phi)``.
    """
    if layers < 1:
        raise ConfigError("the NP ansatz needs at least one layer")
    layout = layout or QubitLayout.for_geometry(geometry)
    slots = _Slots()
    ops = [GateOp("RZ", (q,), slots.take(1), tag="rz") for q in range(layout.n_qubits)]
    parts = geometry.bond_partitions()
    for _ in range(layers):
        for s in geometry.sites():
            a, b = layout.qubit(s, UP), layout.qubit(s, DOWN)
            ops += routed_gate("NP", a, b, slots.take(2), tag="o")
        for name in ("h1", "v1", "h2", "v2"):
            for i, j in parts[name]:
                for spin in (UP, DOWN):
                    a, b = layout.qubit(i, spin), layout.qubit(j, spin)
                    ops += routed_gate("NP", a, b, slots.take(2), tag=name)
    circuit = Circuit(
        layout.n_qubits,
        tuple(ops),
        slots.n,
        "np",
        layers,
        (geometry.nx, geometry.ny),
    )
    return circuit.validate()


def build_ep_ansatz(geometry: LatticeGeometry, layers: int) -> Circuit:
    """Rz layer, ``layers`` sweeps of EP gates on neighbouring qubits, Rz layer."""
    if layers < 1:
        raise ConfigError("the EP ansatz needs at least one layer")
    n = geometry.n_qubits
    slots = _Slots()
    ops = [GateOp("RZ", (q,), slots.take(1), tag="rz") for q in range(n)]
    for _ in range(layers):
        ops += [GateOp("EP", (q, q + 1), slots.take(2), tag="ep") for q in range(n - 1)]
    ops += [GateOp("RZ", (q,), slots.take(1), tag="rz") for q in range(n)]
    circuit = Circuit(n, tuple(ops), slots.n, "ep", layers, (geometry.nx, geometry.ny))
    return circuit.validate()


def uccsd_excitations(occupation: str, layout: QubitLayout):
    """Spin-conserving single and double excitations out of ``occupation``.

    Returns a list of ``(occupied, virtual)`` tuples of spin-orbital qubits:
    singles first, then doubles, each in lexicographic order.
    """
    occ = [q for q, b in enumerate(occupation) if b == "1"]
    vir = [q for q, b in enumerate(occupation) if b == "0"]

    def spin(q):
        return layout.mode(q)[1]

    singles = [((i,), (a,)) for i in occ for a in vir if spin(i) == spin(a)]
    doubles = [
        ((i, j), (a, b))
        for i, j in combinations(occ, 2)
        for a, b in combinations(vir, 2)
        if sorted((spin(i), spin(j))) == sorted((spin(a), spin(b)))
    ]
    return singles + doubles


def build_uccsd_ansatz(
    geometry: LatticeGeometry,
    occupation: str | None = None,
    layout: QubitLayout | None = None,
) -> Circuit:
    """Factorised UCCSD: one exactly exponentiated factor per excitation."""
    layout = layout or QubitLayout.for_geometry(geometry)
    occupation = occupation or checkerboard_occupation(geometry, layout)
    if len(occupation) != layout.n_qubits:
        raise ConfigError("reference occupation has the wrong length")
    if layout.n_qubits > DENSE_QUBIT_BUDGET:
        raise CapabilityError(
            f"UCCSD runs on the dense backend, limited to {DENSE_QUBIT_BUDGET} qubits"
        )
    ops = []
    for k, (occ, vir) in enumerate(uccsd_excitations(occupation, layout)):
        ops.append(GateOp("UCC", tuple(sorted(occ + vir)), (k,), occ, vir, tag="ucc"))
    circuit = Circuit(
        layout.n_qubits, tuple(ops), len(ops), "uccsd", None, (geometry.nx, geometry.ny)
    )
    return circuit.validate()


def build_ansatz(family: str, geometry: LatticeGeometry, layers: int | None = None):
    family = family.lower()
    if family == "np":
        return build_np_ansatz(geometry, layers)
    if family == "ep":
        return build_ep_ansatz(geometry, layers)
    if family in ("uccsd", "ucc"):
        return build_uccsd_ansatz(geometry)
    raise ConfigError(f"unknown ansatz family {family!r}")


def evaluate(circuit: Circuit, params, initial: MpsState) -> MpsState:
    """Apply the circuit gate by gate to a copy of ``initial``.

    UCC factors are not local two-qubit gates; circuits containing them are
    run on the dense backend and converted back to an MPS.
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (circuit.n_parameters,):
        raise ConfigError(
            f"expected {circuit.n_parameters} parameters, got {params.shape}"
        )
    if initial.n_qubits != circuit.n_qubits:
        raise ConfigError("initial state and circuit sizes differ")
    if any(op.kind == "UCC" for op in circuit.ops):
        from .statevector import DenseCircuit

        psi = DenseCircuit(circuit).run(params, initial.to_dense())
        return MpsState.from_dense(psi, initial.chi_max, initial.cutoff)
    state = initial.copy()
    for op in circuit.ops:
        gate = op.matrix(params)
        if len(op.qubits) == 1:
            state.apply_one_qubit_gate(op.qubits[0], gate)
        else:
            state.apply_two_qubit_gate(op.qubits, gate)
    return state
