"""Square-lattice Hubbard models with open boundaries.

Sites are labelled by 1-based coordinates ``(x, y)`` with ``1 <= x <= nx`` and
``1 <= y <= ny`` and linearised as ``(x - 1) * ny + y``.  Bonds along ``y``
connect consecutive linear indices ("horizontal"); bonds along ``x`` connect
indices ``ny`` apart ("vertical").
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError

UP, DOWN = 0, 1

#: Bit generator used for disorder draws. Changing it breaks seed replay.
GENERATOR_ID = f"numpy.random.PCG64/numpy-{np.__version__}"


def site_index(x: int, y: int, ny: int) -> int:
    """Return the 1-based linear index of site ``(x, y)``.

    >>> site_index(2, 3, 3)
    6
    """
    if ny < 1 or x < 1 or not 1 <= y <= ny:
        raise ConfigError(f"site ({x}, {y}) out of range for ny={ny}")
    return (x - 1) * ny + y


@dataclass(frozen=True)
class LatticeGeometry:
    """Open-boundary ``nx`` by ``ny`` square lattice."""

    nx: int
    ny: int
    boundary: str = "open"

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ConfigError("lattice dimensions must be integers")
        if self.nx < 1 or self.ny < 1 or self.nx * self.ny < 2:
            raise ConfigError(f"lattice {self.nx}x{self.ny} needs at least two sites")
        if self.boundary != "open":
            raise ConfigError("only open boundary conditions are supported")

    @property
    def n_sites(self) -> int:
        return self.nx * self.ny

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_sites

    def coords(self, site: int) -> tuple[int, int]:
        """1-based coordinates of the 0-based linear site index ``site``."""
        return site // self.ny + 1, site % self.ny + 1

    def sites(self) -> Iterator[int]:
        return iter(range(self.n_sites))

    @cached_property
    def bonds(self) -> tuple[tuple[int, int], ...]:
        """Nearest-neighbour pairs ``(i, j)``, ``i < j``, 0-based, sorted."""
        out = []
        for s in range(self.n_sites):
            x, y = self.coords(s)
            if y < self.ny:
                out.append((s, s + 1))
            if x < self.nx:
                out.append((s, s + self.ny))
        return tuple(out)

    def is_horizontal(self, bond: tuple[int, int]) -> bool:
        i, j = bond
        return j - i == 1 and self.coords(i)[0] == self.coords(j)[0]

    def bond_partitions(self) -> dict[str, list[tuple[int, int]]]:
        """Split the bonds into the four matchings ``h1, h2, v1, v2``.

        Horizontal bonds are coloured by the parity of their left ``y``,
        vertical bonds by the parity of their upper ``x``.  Bonds inside one
        group share no site, so their hopping terms commute.
        """
        parts = {"h1": [], "h2": [], "v1": [], "v2": []}
        for b in self.bonds:
            x, y = self.coords(b[0])
            if self.is_horizontal(b):
                parts["h1" if y % 2 else "h2"].append(b)
            else:
                parts["v1" if x % 2 else "v2"].append(b)
        return parts

    def label(self) -> str:
        return f"{self.nx}x{self.ny}"


@dataclass(frozen=True)
class QubitLayout:
    """Map ``(site, spin)`` to qubits.

    The default ``"interleaved"`` order puts site ``s`` on qubits ``2s`` (up)
    and ``2s + 1`` (down).  ``"blocked"`` puts all up orbitals first; it is
    only used to check layout independence of spectra.
    """

    n_sites: int
    order: str = "interleaved"

    def __post_init__(self):
        if self.order not in ("interleaved", "blocked"):
            raise ConfigError(f"unknown layout order {self.order!r}")

    def qubit(self, site: int, spin: int) -> int:
        if not 0 <= site < self.n_sites or spin not in (UP, DOWN):
            raise ConfigError(f"no qubit for site {site}, spin {spin}")
        if self.order == "blocked":
            return spin * self.n_sites + site
        return 2 * site + spin

    def mode(self, qubit: int) -> tuple[int, int]:
        """Inverse of :meth:`qubit`."""
        if self.order == "blocked":
            spin, site = divmod(qubit, self.n_sites)
            return site, spin
        return divmod(qubit, 2)

    @property
    def n_qubits(self) -> int:
        return 2 * self.n_sites

    def spin_qubits(self, spin: int) -> list[int]:
        return [self.qubit(s, spin) for s in range(self.n_sites)]

    @classmethod
    def for_geometry(cls, geometry: LatticeGeometry) -> "QubitLayout":
        return cls(geometry.n_sites)


@dataclass(frozen=True)
class HubbardModel:
    """A realised model: uniform parameters plus the drawn coupling tables.

    ``hopping_table`` holds hopping magnitudes; the Hamiltonian carries an
    explicit minus sign in front of them.
    """

    geometry: LatticeGeometry
    t: float
    u: float
    v: float = 0.0
    disorder_d: float = 0.0
    rng_seed: int = 0
    hopping_table: dict = field(default_factory=dict, compare=False)
    chemical_potential: dict = field(default_factory=dict, compare=False)

    @property
    def n_sites(self) -> int:
        return self.geometry.n_sites

    @property
    def n_qubits(self) -> int:
        return self.geometry.n_qubits

    def layout(self) -> QubitLayout:
        return QubitLayout.for_geometry(self.geometry)

    def non_interacting(self) -> "HubbardModel":
        """Same lattice with uniform hopping ``t`` and ``U = V = d = 0``."""
        return realize_model(self.geometry, self.t, 0.0, 0.0, 0.0, self.rng_seed)

    def config(self) -> dict:
        return {
            "nx": self.geometry.nx,
            "ny": self.geometry.ny,
            "t": self.t,
            "u": self.u,
            "v": self.v,
            "d": self.disorder_d,
            "seed": self.rng_seed,
        }

    def to_dict(self) -> dict:
        """JSON-ready document sufficient for exact replay."""
        return {
            **self.config(),
            "generator": GENERATOR_ID,
            "bonds": [list(b) for b in self.geometry.bonds],
            "hopping": [self.hopping_table[b] for b in self.geometry.bonds],
            "chemical_potential": [
                self.chemical_potential[s] for s in self.geometry.sites()
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HubbardModel":
        geometry = LatticeGeometry(int(doc["nx"]), int(doc["ny"]))
        bonds = [tuple(b) for b in doc["bonds"]]
        if bonds != list(geometry.bonds):
            raise ConfigError("bond list does not match the geometry")
        return cls(
            geometry,
            float(doc["t"]),
            float(doc["u"]),
            float(doc.get("v", 0.0)),
            float(doc.get("d", 0.0)),
            int(doc.get("seed", 0)),
            dict(zip(bonds, map(float, doc["hopping"]))),
            dict(enumerate(map(float, doc["chemical_potential"]))),
        )


def realize_model(
    geometry: LatticeGeometry,
    t: float,
    u: float,
    v: float = 0.0,
    d: float = 0.0,
    seed: int = 0,
) -> HubbardModel:
    """Draw the disorder realisation and return the model.

    With ``d > 0`` the standard normals are taken from ``PCG64(seed)`` in a
    fixed order: one per bond in ``geometry.bonds`` order, then one per site
    in linear order.  Hoppings become ``t + d*g`` and on-site energies
    ``d*g``.  No draws happen when ``d == 0``.
    """
    if not isinstance(geometry, LatticeGeometry):
        raise ConfigError("geometry must be a LatticeGeometry")
    if not t > 0:
        raise ConfigError("hopping t sets the energy unit and must be positive")
    if d < 0 or v < 0:
        raise ConfigError("disorder d and repulsion V must be non-negative")
    bonds = geometry.bonds
    if d == 0:
        hopping = {b: float(t) for b in bonds}
        mu = {s: 0.0 for s in geometry.sites()}
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        g = rng.standard_normal(len(bonds) + geometry.n_sites)
        hopping = {b: float(t + d * g[k]) for k, b in enumerate(bonds)}
        mu = {s: float(d * g[len(bonds) + s]) for s in geometry.sites()}
    return HubbardModel(
        geometry, float(t), float(u), float(v), float(d), int(seed), hopping, mu
    )


def checkerboard_occupation(
    geometry: LatticeGeometry, layout: QubitLayout | None = None
) -> str:
    """Half-filled Neel product state as a bitstring, qubit 0 first.

    Sites with even ``x + y`` hold an up electron, the rest a down electron.
    """
    layout = layout or QubitLayout.for_geometry(geometry)
    bits = ["0"] * layout.n_qubits
    for s in geometry.sites():
        x, y = geometry.coords(s)
        bits[layout.qubit(s, UP if (x + y) % 2 == 0 else DOWN)] = "1"
    return "".join(bits)


def sector_of(occupation: str, layout: QubitLayout) -> tuple[int, int]:
    """``(N_up, N_down)`` of an occupation bitstring."""
    n_up = sum(occupation[q] == "1" for q in layout.spin_qubits(UP))
    n_dn = sum(occupation[q] == "1" for q in layout.spin_qubits(DOWN))
    return n_up, n_dn


_CONFIG_DEFAULTS = {"t": 1.0, "u": 2.0, "v": 0.0, "d": 0.0, "seed": 0}


def validate_config(doc: dict) -> dict:
    unknown = set(doc) - {"nx", "ny", *_CONFIG_DEFAULTS}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "nx" not in doc or "ny" not in doc:
        raise ConfigError("config needs nx and ny")
    cfg = {**_CONFIG_DEFAULTS, **doc}
    try:
        out = {
            "nx": int(cfg["nx"]),
            "ny": int(cfg["ny"]),
            "t": float(cfg["t"]),
            "u": float(cfg["u"]),
            "v": float(cfg["v"]),
            "d": float(cfg["d"]),
            "seed": int(cfg["seed"]),
        }
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return out


def load_model_config(path: str | Path) -> dict:
    """Read a YAML or JSON model config and check its keys."""
    import yaml

    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    return validate_config(doc)


def model_from_config(cfg: dict) -> HubbardModel:
    cfg = validate_config(cfg)
    geometry = LatticeGeometry(cfg["nx"], cfg["ny"])
    return realize_model(geometry, cfg["t"], cfg["u"], cfg["v"], cfg["d"], cfg["seed"])


def save_model(model: HubbardModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2))
