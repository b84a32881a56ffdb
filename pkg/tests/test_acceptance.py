"""Acceptance criteria.

Every test carries a ``criterion`` marker; ``conftest.py`` turns the outcome
into one PASS/FAIL line printed at the end of the run.  Large-scale targets
run only with ``--heavy``.
"""

import json
import time
from functools import reduce
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from hubbardvqe.bench import (
    ENERGY_RTOL,
    EXPONENT_RTOL,
    HEAVY_TARGETS,
    SweepPlan,
    min_params_for_delta,
    power_law_fit,
    run_sweep,
)
from hubbardvqe.circuits import (
    build_ansatz,
    ep_parameter_count,
    evaluate,
    np_parameter_count,
)
from hubbardvqe.lattice import LatticeGeometry, checkerboard_occupation, realize_model
from hubbardvqe.mps import product_state
from hubbardvqe.observables import correlation_matrix, error_per_site
from hubbardvqe.pauli import jordan_wigner
from hubbardvqe.solvers import dmrg_for_model, exact_ground_state
from hubbardvqe.statevector import DenseCircuit, apply_matrix, basis_state
from hubbardvqe.vqe import (
    EnergyObjective,
    OptimizationConfig,
    OverlapObjective,
    gradient,
    log_infidelity,
    run_vqe,
)

COUNTS = json.loads((Path(__file__).parent / "data" / "tabulated_counts.json").read_text())

FOOTERS = {
    ((1, 3), 2.0): -1.8201, ((1, 4), 2.0): -2.8759, ((1, 6), 2.0): -4.5463,
    ((2, 2), 2.0): -2.8284, ((2, 3), 2.0): -5.1592,
    ((1, 3), 8.0): -0.7077, ((1, 4), 8.0): -1.1172, ((1, 6), 8.0): -1.7681,
    ((2, 2), 8.0): -1.3202, ((2, 3), 8.0): -2.1778,
}


def model(nx, ny, u):
    return realize_model(LatticeGeometry(nx, ny), 1.0, u)


def detail(record_property, text):
    record_property("detail", text)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


_RUNS = {}


def vqe_run(nx, ny, u, family, layers, loss="energy", reference=None):
    """Ten-restart runs shared between criteria (seed 0)."""
    key = (nx, ny, u, family, layers, loss)
    if key not in _RUNS:
        start = time.perf_counter()
        res = run_vqe(model(nx, ny, u), (family, layers),
                      OptimizationConfig(loss=loss, restarts=10, seed=0), reference)
        _RUNS[key] = (res, time.perf_counter() - start)
    return _RUNS[key]


# ----------------------------------------------------------------------
# 1


@pytest.mark.criterion("C1", "dimer exactness")
def test_c1_dimer(record_property):
    with Timer() as clock:
        found = {}
        for u in (2.0, 8.0):
            found[u] = exact_ground_state(model(1, 2, u)).energy
    exact = {u: (u - np.sqrt(u**2 + 16)) / 2 for u in found}
    detail(record_property, f"E(U=2)={found[2.0]:.10f}, E(U=8)={found[8.0]:.10f}, "
                            f"{clock.seconds:.3f} s")
    for u in found:
        assert abs(found[u] - exact[u]) < 1e-10
    assert round(found[2.0], 4) == -1.2361
    assert round(found[8.0], 4) == -0.4721
    assert clock.seconds < 1.0


# ----------------------------------------------------------------------
# 2


@pytest.mark.criterion("C2", "DMRG vs ED and reference footers")
def test_c2_reference_agreement(record_property):
    worst = 0.0
    mismatched = []
    with Timer() as clock:
        for ((nx, ny), u), footer in FOOTERS.items():
            m = model(nx, ny, u)
            ed = exact_ground_state(m).energy
            dm = dmrg_for_model(m).energy
            worst = max(worst, abs(ed - dm))
            if round(ed, 4) != footer or round(dm, 4) != footer:
                mismatched.append(f"{nx}x{ny} U={u:g}: {ed:.6f}")
    detail(record_property, f"max |E_dmrg - E_ed| = {worst:.1e}, "
                            f"{10 - len(mismatched)}/10 footers, {clock.seconds:.0f} s")
    assert worst < 1e-8
    assert not mismatched, mismatched
    assert clock.seconds < 300


# ----------------------------------------------------------------------
# 3


@pytest.mark.criterion("C3", "small VQE convergence (NP 1x2)")
def test_c3_dimer_vqe(record_property):
    with Timer() as clock:
        two, _ = vqe_run(1, 2, 2.0, "np", 2)
        one, _ = vqe_run(1, 2, 2.0, "np", 1)
    err = np.max(np.abs(two.energies - (1 - np.sqrt(5))))
    detail(record_property, f"l=2 max error {err:.1e}, l=1 best {one.best_energy:.4f}, "
                            f"{clock.seconds:.1f} s")
    assert err < 1e-4
    assert abs(one.best_energy) < 5e-5
    assert clock.seconds < 60


@pytest.mark.criterion("C3b", "trapped restart above the l=1 minimum")
@pytest.mark.xfail(strict=True, reason="the l=1 energy has no stationary value near 0.65; "
                                       "every restart starts at the global minimum")
def test_c3_trapped_restart(record_property):
    one, _ = vqe_run(1, 2, 2.0, "np", 1)
    detail(record_property, "l=1 restart energies " + " ".join(f"{e:.4f}" for e in sorted(one.energies)))
    assert np.max(one.energies) > one.best_energy + 1e-3


# ----------------------------------------------------------------------
# 4 and 5


@pytest.mark.criterion("C4a", "2x2 NP reaches -2.8284 within 152 parameters")
def test_c4_2x2(record_property):
    target = -2.8284
    reached = None
    best = {}
    with Timer() as clock:
        for layers in range(1, 7):
            n_params = np_parameter_count(2, 2, layers)
            if n_params > 152:
                break
            res, _ = vqe_run(2, 2, 2.0, "np", layers)
            best[n_params] = res.best_energy
            if abs(res.best_energy - target) < 1e-4:
                reached = n_params
                break
    detail(record_property, f"reached at {reached} parameters, best energies "
                            + ", ".join(f"{n}: {e:.5f}" for n, e in best.items())
                            + f", {clock.seconds:.0f} s")
    assert reached is not None and reached <= 152


@pytest.mark.criterion("C4b", "2x3 NP l=12 best-of-10 within 1e-3 of -5.1592")
def test_c4_2x3(record_property):
    res, seconds = vqe_run(2, 3, 2.0, "np", 12)
    assert res.circuit["n_parameters"] == 492
    err = abs(res.best_energy - (-5.1592))
    detail(record_property, f"best {res.best_energy:.5f} (error {err:.1e}), "
                            f"reasons {sorted(set(r.reason for r in res.restarts))}, {seconds:.0f} s")
    assert err < 1e-3


@pytest.mark.criterion("C5", "NP beats EP on 2x3 at >= 300 parameters")
def test_c5_ranking(record_property):
    np_res, _ = vqe_run(2, 3, 2.0, "np", 12)
    ep_res, seconds = vqe_run(2, 3, 2.0, "ep", 13)
    assert ep_res.circuit["n_parameters"] == 310
    ref = exact_ground_state(model(2, 3, 2.0)).energy
    d_np = error_per_site(np_res.best_energy, ref, 6)
    d_ep = error_per_site(ep_res.best_energy, ref, 6)
    seeds_match = [r.seed for r in np_res.restarts] == [r.seed for r in ep_res.restarts]
    detail(record_property, f"delta NP(492)={d_np:.2e}, EP(310)={d_ep:.2e}, EP run {seconds:.0f} s")
    assert seeds_match
    assert d_np < d_ep


# ----------------------------------------------------------------------
# 6


@pytest.mark.criterion("C6", "parameter-count formulas")
def test_c6_counts(record_property):
    with Timer() as clock:
        bad = []
        checked = 0
        for key, values in COUNTS.items():
            family, shape = key.split()
            nx, ny = map(int, shape.split("x"))
            layers = [12] if key == "np 4x4" else range(1, len(values) + 1)
            for ell, expect in zip(layers, values):
                geo = LatticeGeometry(nx, ny)
                built = build_ansatz(family, geo, ell).n_parameters
                formula = (np_parameter_count if family == "np" else ep_parameter_count)(nx, ny, ell)
                checked += 1
                if not built == formula == expect:
                    bad.append((key, ell, built, expect))
    detail(record_property, f"{checked} tabulated pairs, {len(bad)} mismatches, {clock.seconds:.2f} s")
    assert not bad
    assert clock.seconds < 1.0


# ----------------------------------------------------------------------
# 7


@pytest.mark.criterion("C7", "strong coupling is harder (1x4, l=3)")
def test_c7_strong_coupling(record_property):
    deltas = {}
    with Timer() as clock:
        for u in (2.0, 8.0):
            res, _ = vqe_run(1, 4, u, "np", 3)
            ref = exact_ground_state(model(1, 4, u))
            assert ref.method == "ed"
            deltas[u] = error_per_site(res.best_energy, ref.energy, 4)
    detail(record_property, f"delta(U=2)={deltas[2.0]:.2e}, delta(U=8)={deltas[8.0]:.2e}, "
                            f"{clock.seconds:.0f} s")
    assert deltas[8.0] > deltas[2.0]
    assert clock.seconds < 600


# ----------------------------------------------------------------------
# 8


@pytest.mark.criterion("C8", "overlap loss converges fidelity faster (2x2, U=8)")
def test_c8_overlap(record_property):
    assert log_infidelity(0.99) == -2.0
    m = model(2, 2, 8.0)
    ref = dmrg_for_model(m).to_dense()
    found = None
    history = []
    with Timer() as clock:
        for layers in range(1, 5):
            over, _ = vqe_run(2, 2, 8.0, "np", layers, "overlap", ref)
            ener, _ = vqe_run(2, 2, 8.0, "np", layers, "energy", ref)
            f_over = max(r.fidelity for r in over.restarts)
            f_ener = max(r.fidelity for r in ener.restarts)
            history.append(f"l={layers}: overlap {f_over:.6f} energy {f_ener:.6f}")
            if f_over >= 0.999:
                found = (layers, f_over, f_ener)
                break
    detail(record_property, "; ".join(history) + f", {clock.seconds:.0f} s")
    assert found is not None
    _, f_over, f_ener = found
    assert f_ener < f_over
    assert clock.seconds < 1800


# ----------------------------------------------------------------------
# 9

_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]])


def _annihilator(n, p):
    return reduce(np.kron, [np.diag([1.0, -1.0])] * p + [_LOWER] + [np.eye(2)] * (n - p - 1))


def _oracle_state(circuit, params, occ):
    """Gate-by-gate dense application; UCC factors by matrix exponential."""
    n = circuit.n_qubits
    psi = basis_state(occ)
    a = [_annihilator(n, p) for p in range(n)]
    for op in circuit.ops:
        if op.kind == "UCC":
            t = reduce(np.matmul, [a[q].T for q in op.virtual] + [a[q] for q in reversed(op.occupied)])
            psi = expm(params[op.slots[0]] * (t - t.T)) @ psi
        else:
            psi = apply_matrix(psi, n, op.matrix(params), list(op.qubits))
    return psi


def _corpus():
    for shape in ((1, 2), (1, 3)):
        geo = LatticeGeometry(*shape)
        for family in ("np", "ep"):
            for layers in (1, 2, 3):
                yield shape, build_ansatz(family, geo, layers)
        yield shape, build_ansatz("uccsd", geo)


@pytest.mark.criterion("C9", "property suite")
def test_c9_properties(record_property):
    rng = np.random.default_rng(2024)
    worst_state = worst_norm = worst_bound = 0.0
    n_grad = 0
    with Timer() as clock:
        for shape, circuit in _corpus():
            m = realize_model(LatticeGeometry(*shape), 1.0, 4.0, 0.3, 0.5, seed=1)
            occ = checkerboard_occupation(m.geometry)
            h = jordan_wigner(m)
            e0 = np.linalg.eigvalsh(h.to_dense())[0]
            number = sum(_annihilator(circuit.n_qubits, p).T @ _annihilator(circuit.n_qubits, p)
                         for p in range(circuit.n_qubits))
            energy = EnergyObjective(circuit, h, occ, "mps" if circuit.family != "uccsd" else "dense")
            overlap = OverlapObjective(circuit, exact_ground_state(m).to_dense(), occ)
            for _ in range(3):
                x = rng.normal(scale=0.7, size=circuit.n_parameters)
                oracle = _oracle_state(circuit, x, occ)
                mps = evaluate(circuit, x, product_state(occ)).to_dense()
                dense = DenseCircuit(circuit).run(x, basis_state(occ))
                worst_state = max(worst_state, np.max(np.abs(mps - oracle)),
                                  np.max(np.abs(dense - oracle)))
                worst_norm = max(worst_norm, abs(np.vdot(oracle, number @ oracle).real - len(occ) // 2))
                worst_bound = max(worst_bound, e0 - energy(x))
                gradient(energy, x, check=True, rtol=1e-5, atol=1e-8)
                gradient(overlap, x, check=True, rtol=1e-5, atol=1e-8)
                n_grad += 2
    detail(record_property, f"state dev {worst_state:.1e}, number dev {worst_norm:.1e}, "
                            f"bound violation {max(worst_bound, 0):.1e}, {n_grad} gradient probes, "
                            f"{clock.seconds:.0f} s")
    assert worst_state < 1e-10
    assert worst_norm < 1e-10
    assert worst_bound < 1e-9
    assert clock.seconds < 300


# ----------------------------------------------------------------------
# 10


@pytest.mark.criterion("C10", "power-law fit recovers a synthetic exponent")
def test_c10_fit(record_property):
    fit = power_law_fit([(n, 3.0 * n**2) for n in (2, 4, 6, 9)])
    detail(record_property, f"exponent {fit.exponent!r}")
    assert abs(fit.exponent - 2.0) < 1e-9


def _exponent(lattices, u, layers):
    plan = SweepPlan(lattices=lattices, u_values=[u], layers=list(layers), restarts=10,
                     chi=512, reference_policy="auto")
    records = run_sweep(plan, Path("heavy-cache")).records
    points = []
    for nx, ny in lattices:
        recs = [r for r in records if (r.nx, r.ny) == (nx, ny)]
        p = min_params_for_delta(recs, 0.01)
        if p is not None:
            points.append((nx * ny, p))
    return power_law_fit(points).exponent


@pytest.mark.heavy
@pytest.mark.criterion("C10a", "2D exponent at U/t=2 (heavy)")
def test_c10_exponent_2d_u2(record_property):
    n = _exponent([(2, 2), (2, 3), (3, 3), (3, 4), (4, 4)], 2.0, range(1, 14))
    target = HEAVY_TARGETS["exponent_2d_u2"]
    detail(record_property, f"n={n:.3f} vs {target}")
    assert abs(n - target) <= EXPONENT_RTOL * target


@pytest.mark.heavy
@pytest.mark.criterion("C10b", "2D and 1D exponents (heavy)")
def test_c10_exponent_1d_2d(record_property):
    n2 = _exponent([(2, 2), (2, 3), (3, 3), (3, 4), (4, 4)], 8.0, range(1, 14))
    n1 = _exponent([(1, 2), (1, 4), (1, 6), (1, 8), (1, 10), (1, 12)], 8.0, range(1, 14))
    detail(record_property, f"n_2d={n2:.3f}, n_1d={n1:.3f}")
    assert abs(n2 - HEAVY_TARGETS["exponent_2d"]) <= EXPONENT_RTOL * HEAVY_TARGETS["exponent_2d"]
    assert abs(n1 - HEAVY_TARGETS["exponent_1d"]) <= EXPONENT_RTOL * HEAVY_TARGETS["exponent_1d"]


@pytest.mark.heavy
@pytest.mark.criterion("C10c", "4x4 chi=512 energies (heavy)")
def test_c10_4x4(record_property):
    m = model(4, 4, 2.0)
    ref = dmrg_for_model(m, chi=512)
    res = run_vqe(m, ("np", 12), OptimizationConfig(restarts=10, chi=512))
    detail(record_property, f"VQE {res.best_energy:.4f}, DMRG {ref.energy:.4f}")
    for value, key in ((res.best_energy, "energy_4x4_vqe"), (ref.energy, "energy_4x4_dmrg")):
        target = HEAVY_TARGETS[key]
        assert abs(value - target) <= ENERGY_RTOL * abs(target)


@pytest.mark.heavy
@pytest.mark.criterion("C10d", "1x12 spin correlations at l=13 (heavy)")
def test_c10_1x12_correlations(record_property):
    m = model(1, 12, 8.0)
    ref = dmrg_for_model(m, chi=512)
    res = run_vqe(m, ("np", 13), OptimizationConfig(restarts=10, chi=512))
    circuit = build_ansatz("np", m.geometry, 13)
    state = evaluate(circuit, res.best_params, product_state(checkerboard_occupation(m.geometry), 512))
    c_vqe = correlation_matrix(state, m.layout())
    c_ref = correlation_matrix(ref.state, m.layout())
    dev = np.max(np.abs(c_vqe - c_ref))
    detail(record_property, f"max |C_vqe - C_dmrg| = {dev:.3f}")
    assert_allclose(np.sign(c_vqe[0, 1:]), np.sign(c_ref[0, 1:]))
