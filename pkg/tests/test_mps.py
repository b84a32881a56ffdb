import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import unitary_group

from hubbardvqe.errors import NumericalConsistencyError
from hubbardvqe.lattice import LatticeGeometry, realize_model
from hubbardvqe.mps import (
    MpsState,
    apply_mpo,
    expectation,
    fix_svd_gauge,
    inner_product,
    mpo_braket,
    mpo_from_pauli_sum,
    number_penalty_mpo,
    product_state,
    truncated_svd,
)
from hubbardvqe.pauli import PauliSum, jordan_wigner
from hubbardvqe.statevector import apply_matrix


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return v / np.linalg.norm(v)


class TestSvd:
    def test_gauge_is_deterministic(self):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(6, 4)) + 1j * rng.normal(size=(6, 4))
        u, s, vh = np.linalg.svd(m, full_matrices=False)
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
        a = fix_svd_gauge(u, s, vh)
        b = fix_svd_gauge(u * phases, s, vh * phases.conj()[:, None])
        for x, y in zip(a, b):
            assert_allclose(x, y, atol=1e-12)
        assert_allclose((a[0] * a[1]) @ a[2], m, atol=1e-12)

    def test_truncation_preserves_norm(self):
        rng = np.random.default_rng(1)
        m = rng.normal(size=(8, 8))
        u, s, vh, lost = truncated_svd(m, chi_max=3)
        assert len(s) == 3
        assert lost > 0
        assert_allclose(np.sum(s**2), np.sum(m**2), rtol=1e-12)

    def test_cutoff(self):
        m = np.diag([1.0, 1e-3, 1e-5])
        _, s, _, lost = truncated_svd(m, cutoff=1e-4)
        assert len(s) == 2
        assert_allclose(lost, 1e-10, rtol=1e-4)


class TestMpsState:
    def test_dense_round_trip(self):
        psi = random_state(6, 3)
        mps = MpsState.from_dense(psi)
        assert_allclose(mps.to_dense(), psi, atol=1e-12)
        assert_allclose(mps.norm(), 1.0, atol=1e-12)
        assert_allclose(mps.amplitude("010110"), psi[0b010110], atol=1e-12)

    def test_product_state(self):
        mps = product_state("1001")
        vec = mps.to_dense()
        assert vec[0b1001] == 1.0
        assert_allclose(np.linalg.norm(vec), 1.0)
        with pytest.raises(ValueError):
            product_state("10a1")

    @pytest.mark.parametrize("center", [0, 2, 5])
    def test_move_center_keeps_state(self, center):
        psi = random_state(6, 4)
        mps = MpsState.from_dense(psi).move_center(center)
        assert mps.center == center
        assert_allclose(mps.to_dense(), psi, atol=1e-12)
        # tensors left of the center are left-isometries
        for t in mps.tensors[:center]:
            m = t.reshape(-1, t.shape[2])
            assert_allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=1e-12)

    def test_gates_match_dense(self):
        n = 5
        psi = random_state(n, 5)
        mps = MpsState.from_dense(psi)
        for k, (q, g) in enumerate([((1, 2), 0), ((3, 2), 1), ((0, 1), 2), ((3, 4), 3)]):
            u = unitary_group.rvs(4, random_state=10 + g)
            mps.apply_two_qubit_gate(q, u, check=True)
            psi = apply_matrix(psi, n, u, list(q))
            one = unitary_group.rvs(2, random_state=20 + k)
            mps.apply_one_qubit_gate(k, one)
            psi = apply_matrix(psi, n, one, [k])
        assert_allclose(mps.to_dense(), psi, atol=1e-11)

    def test_rejects_non_adjacent_and_non_unitary(self):
        mps = product_state("0000")
        with pytest.raises(ValueError):
            mps.apply_two_qubit_gate((0, 2), np.eye(4))
        with pytest.raises(ValueError):
            mps.apply_two_qubit_gate((0, 1), 2 * np.eye(4), check=True)

    def test_truncation_bounds_bond(self):
        mps = MpsState.from_dense(random_state(8, 6), chi_max=4)
        assert max(mps.bond_dims()) <= 4
        mps.apply_two_qubit_gate((3, 4), unitary_group.rvs(4, random_state=1))
        assert max(mps.bond_dims()) <= 4

    def test_bell_entropy(self):
        psi = np.zeros(4)
        psi[0] = psi[3] = 1 / np.sqrt(2)
        assert_allclose(MpsState.from_dense(psi).entanglement_entropy(1), np.log(2), atol=1e-12)
        assert product_state("0110").entanglement_entropy(2) == 0.0

    def test_inner_product_with_insert(self):
        n = 4
        a, b = random_state(n, 7), random_state(n, 8)
        ma, mb = MpsState.from_dense(a), MpsState.from_dense(b)
        assert_allclose(inner_product(ma, mb), np.vdot(a, b), atol=1e-12)
        z = np.diag([1.0, -1.0])
        assert_allclose(
            inner_product(ma, mb, insert=((2,), z)),
            np.vdot(a, apply_matrix(b, n, z, [2])), atol=1e-12,
        )
        g = unitary_group.rvs(4, random_state=3)
        assert_allclose(
            inner_product(ma, mb, insert=((1, 2), g)),
            np.vdot(a, apply_matrix(b, n, g, [1, 2])), atol=1e-12,
        )

    def test_save_load(self, tmp_path):
        mps = MpsState.from_dense(random_state(5, 9), chi_max=8)
        mps.save(tmp_path / "s.npz")
        back = MpsState.load(tmp_path / "s.npz")
        assert back.chi_max == 8
        assert back.center == mps.center
        assert_allclose(back.to_dense(), mps.to_dense(), atol=0)


class TestMpo:
    def test_hubbard_mpo_matches_dense(self):
        model = realize_model(LatticeGeometry(2, 2), 1.0, 4.0, 0.3, 0.5, seed=2)
        h = jordan_wigner(model)
        mpo = mpo_from_pauli_sum(h)
        assert_allclose(mpo.to_dense(), h.to_dense(), atol=1e-12)
        small = mpo.compress()
        assert sum(small.bond_dims()) <= sum(mpo.bond_dims())
        assert_allclose(small.to_dense(), h.to_dense(), atol=1e-10)

    def test_sum_of_mpos(self):
        a = PauliSum.from_terms(3, [(0.5, "XZX"), (1.0, "IIZ")])
        b = PauliSum.from_terms(3, [(-2.0, "YIY")])
        total = mpo_from_pauli_sum(a) + mpo_from_pauli_sum(b)
        assert_allclose(total.to_dense(), (a + b).to_dense(), atol=1e-12)

    def test_number_penalty(self):
        n = 4
        mpo = number_penalty_mpo(n, [0, 2], 1, 3.0)
        diag = np.diag(mpo.to_dense()).real
        for k in range(2**n):
            count = ((k >> 3) & 1) + ((k >> 1) & 1)
            assert_allclose(diag[k], 3.0 * (count - 1) ** 2, atol=1e-12)
        assert_allclose(mpo.to_dense() - np.diag(diag), 0, atol=1e-14)

    def test_expectation_and_apply(self):
        model = realize_model(LatticeGeometry(1, 3), 1.0, 2.0)
        h = jordan_wigner(model)
        mpo = mpo_from_pauli_sum(h)
        psi = random_state(6, 11)
        mps = MpsState.from_dense(psi)
        dense = h.to_dense()
        assert_allclose(expectation(mps, mpo), np.vdot(psi, dense @ psi).real, atol=1e-12)
        phi = MpsState.from_dense(random_state(6, 12))
        assert_allclose(
            mpo_braket(phi, mpo, mps), np.vdot(phi.to_dense(), dense @ psi), atol=1e-12
        )
        assert_allclose(apply_mpo(mpo, mps).to_dense(), dense @ psi, atol=1e-11)

    def test_non_hermitian_expectation_raises(self):
        from hubbardvqe.mps import MpoOperator

        w = np.zeros((1, 2, 2, 1), dtype=complex)
        w[0, :, :, 0] = [[0, 1j], [0, 0]]
        op = MpoOperator([w])
        psi = MpsState.from_dense(np.array([1, 1]) / np.sqrt(2))
        with pytest.raises(NumericalConsistencyError):
            expectation(psi, op)
