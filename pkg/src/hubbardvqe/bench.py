"""Experiment sweeps, record tables and scaling fits."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from pathlib import Path

import numpy as np

from .circuits import build_ansatz
from .errors import ConfigError
from .lattice import LatticeGeometry, realize_model
from .observables import error_per_site
from .solvers import ReferenceCache, reference_ground_state
from .vqe import OptimizationConfig, run_vqe

log = logging.getLogger(__name__)

#: Large-scale targets, checked only in heavy mode.
HEAVY_TARGETS = {
    "exponent_2d_u2": 2.13,
    "exponent_2d": 2.18,
    "exponent_1d": 1.61,
    "energy_4x4_vqe": -15.1312,
    "energy_4x4_dmrg": -15.4634,
}
EXPONENT_RTOL = 0.15
ENERGY_RTOL = 0.005


@dataclass
class BenchRecord:
    """One restart of one grid point.  Field order is the CSV column order."""

    nx: int
    ny: int
    u_over_t: float
    v: float
    d: float
    family: str
    layers: int
    n_parameters: int
    restart: int
    energy: float
    reference_energy: float
    delta: float
    fidelity: float
    seed: int
    wall_time: float
    reason: str
    reference_method: str = ""

    @property
    def lattice(self) -> tuple[int, int]:
        return self.nx, self.ny


COLUMNS = [f.name for f in fields(BenchRecord)]
_FLOATS = {"u_over_t", "v", "d", "energy", "reference_energy", "delta", "fidelity", "wall_time"}
_INTS = {"nx", "ny", "layers", "n_parameters", "restart", "seed"}


@dataclass
class SweepPlan:
    """Grid of lattices x U/t x d x V x ansatz x layers.

    ``seed`` is the master seed of every VQE; ``disorder_seed`` is shared by
    all grid points of a lattice so VQE and reference see one realisation.
    """

    lattices: list = field(default_factory=list)
    u_values: list = field(default_factory=lambda: [2.0])
    d_values: list = field(default_factory=lambda: [0.0])
    v_values: list = field(default_factory=lambda: [0.0])
    families: list = field(default_factory=lambda: ["np"])
    layers: list = field(default_factory=lambda: [1])
    restarts: int = 10
    seed: int = 0
    disorder_seed: int = 0
    t: float = 1.0
    loss: str = "energy"
    chi: int | None = None
    reference_policy: str = "auto"
    max_steps: int = 1000

    def __post_init__(self):
        self.lattices = [tuple(int(v) for v in lat) for lat in self.lattices]
        self.layers = [int(v) for v in self.layers]
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if self.loss not in ("energy", "overlap"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        for nx, ny in self.lattices:
            LatticeGeometry(nx, ny)

    def grid(self) -> list[dict]:
        out = []
        for (nx, ny), u, d, v, fam in product(
            self.lattices, self.u_values, self.d_values, self.v_values, self.families
        ):
            layer_list = [None] if fam == "uccsd" else self.layers
            for layers in layer_list:
                out.append(
                    {"nx": nx, "ny": ny, "u": float(u), "d": float(d), "v": float(v),
                     "family": fam, "layers": layers}
                )
        return out

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["lattices"] = [list(lat) for lat in self.lattices]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepPlan":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def content_hash(self) -> str:
        return _hash(self.to_dict())

    def point_key(self, point: dict) -> str:
        doc = {k: v for k, v in self.to_dict().items() if k not in
               ("lattices", "u_values", "d_values", "v_values", "families", "layers")}
        return _hash({"point": point, "settings": doc})


def _hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:20]


@dataclass
class SweepResult:
    records: list
    failures: list
    computed: int
    cached: int

    def tables(self) -> dict:
        return summary_tables(self.records)


def _run_point(args):
    plan, point, cache_dir = args
    geometry = LatticeGeometry(point["nx"], point["ny"])
    model = realize_model(geometry, plan.t, point["u"], point["v"], point["d"],
                          plan.disorder_seed)
    if cache_dir is not None:
        ref = ReferenceCache(Path(cache_dir) / "references").get(
            model, plan.reference_policy, plan.chi)
    else:
        ref = reference_ground_state(model, plan.reference_policy, plan.chi)
    circuit = build_ansatz(point["family"], geometry, point["layers"])
    config = OptimizationConfig(loss=plan.loss, restarts=plan.restarts, seed=plan.seed,
                                chi=plan.chi, max_steps=plan.max_steps)
    reference = ref.to_dense() if circuit.n_qubits <= 20 else ref.to_mps()
    result = run_vqe(model, circuit, config, reference)
    return [
        BenchRecord(
            point["nx"], point["ny"], point["u"] / plan.t, point["v"], point["d"],
            point["family"], point["layers"] or 0, circuit.n_parameters, rec.index,
            rec.energy, ref.energy, error_per_site(rec.energy, ref.energy, model.n_sites),
            rec.fidelity if rec.fidelity is not None else float("nan"), rec.seed,
            rec.wall_time, rec.reason, ref.method,
        )
        for rec in result.restarts
    ]


def run_sweep(plan: SweepPlan, cache_dir=None, workers: int = 1) -> SweepResult:
    """Run every grid point of ``plan``.

    With ``cache_dir`` the records of each grid point are stored under a
    content hash of the point and the plan settings; a rerun loads them
    instead of recomputing.  Failing grid points are logged and skipped.
    Records come back ordered by grid point, then restart.
    """
    grid = plan.grid()
    cache = Path(cache_dir) / "points" if cache_dir is not None else None
    done, todo = {}, []
    for point in grid:
        key = plan.point_key(point)
        path = cache / f"{key}.csv" if cache else None
        if path is not None and path.exists():
            done[key] = read_csv(path)
        else:
            todo.append((key, point))
    failures = []
    jobs = [(plan, point, cache_dir) for _, point in todo]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_point, job) for job in jobs]
            outcomes = []
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - recorded and skipped
                    outcomes.append(exc)
    else:
        outcomes = []
        for job in jobs:
            try:
                outcomes.append(_run_point(job))
            except Exception as exc:  # noqa: BLE001
                outcomes.append(exc)
    for (key, point), out in zip(todo, outcomes):
        if isinstance(out, Exception):
            log.warning("grid point %s failed: %s", point, out)
            failures.append({"point": point, "error": repr(out)})
            continue
        done[key] = out
        if cache is not None:
            cache.mkdir(parents=True, exist_ok=True)
            write_csv(out, cache / f"{key}.csv")
    records = []
    for point in grid:
        records += done.get(plan.point_key(point), [])
    return SweepResult(records, failures, len(todo) - len(failures), len(grid) - len(todo))


# ----------------------------------------------------------------------
# persistence


def _fmt(name, value):
    if name in _FLOATS:
        return "%.17g" % value
    return str(value)


def write_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([_fmt(c, getattr(r, c)) for c in COLUMNS])


def read_csv(path) -> list[BenchRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for c in COLUMNS:
                raw = row.get(c, "")
                vals[c] = float(raw) if c in _FLOATS else int(raw) if c in _INTS else raw
            out.append(BenchRecord(**vals))
    return out


def write_json(records, path) -> None:
    with open(path, "w") as fh:
        json.dump([asdict(r) for r in records], fh, indent=2)


# ----------------------------------------------------------------------
# tables and fits


def summary_tables(records) -> dict:
    """Group records into tables of sorted restart energies.

    Keys are ``(nx, ny, u_over_t, v, d, family)``; values are dicts with
    ``rows`` (``(n_parameters, energies ascending)``) and ``reference``.
    """
    groups = {}
    for r in records:
        key = (r.nx, r.ny, r.u_over_t, r.v, r.d, r.family)
        g = groups.setdefault(key, {"rows": {}, "reference": r.reference_energy})
        g["rows"].setdefault(r.n_parameters, []).append(r.energy)
    for g in groups.values():
        g["rows"] = [(n, sorted(e)) for n, e in sorted(g["rows"].items())]
    return groups


def format_table(key, table) -> str:
    nx, ny, u, v, d, fam = key
    lines = [f"{fam.upper()} ansatz, {nx}x{ny}, U/t={u:g}, V={v:g}, d={d:g}"]
    for n, energies in table["rows"]:
        lines.append(f"{n:>6} " + " ".join(f"{e:.4f}" for e in energies))
    lines.append(f"reference energy: {table['reference']:.4f}")
    return "\n".join(lines)


def min_params_for_delta(records, threshold: float):
    """Smallest ``n_parameters`` whose best restart has ``delta <= threshold``.

    Returns ``None`` when no tabulated parameter count reaches the threshold.
    """
    best = {}
    for r in records:
        best[r.n_parameters] = min(best.get(r.n_parameters, np.inf), r.delta)
    for n in sorted(best):
        if best[n] <= threshold:
            return n
    return None


@dataclass
class PowerLawFit:
    exponent: float
    prefactor: float
    residual: float


def power_law_fit(points) -> PowerLawFit:
    """Least-squares fit of ``p = a * N**n`` on log-log axes.

    Parameters
    ----------
    points : iterable of (N, p)
        At least two points, all positive.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ConfigError("need at least two (N, p) points")
    if np.any(pts <= 0):
        raise ConfigError("power-law fit needs positive data")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(x) == 0:
        raise ConfigError("need at least two distinct N values")
    a = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = float(np.sqrt(np.mean((a @ [slope, intercept] - y) ** 2)))
    return PowerLawFit(float(slope), float(np.exp(intercept)), resid)

