import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_gate_list, ref_depolarize, ref_pauli, ref_run, ref_unitary
from qaslab.errors import CapabilityError
from qaslab.sim import (
    Hamiltonian,
    MixedState,
    NoiseModel,
    PauliString,
    PureState,
    apply_depolarizing,
    apply_gate,
    basis_state,
    exact_ground_energy,
    expectation,
    gate_matrix,
    maximally_mixed,
    to_mixed,
    zero_state,
)
from qaslab.tasks import h2_hamiltonian, projector_last_zero


def random_pure(rng, n):
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return PureState(n, psi / np.linalg.norm(psi))


def random_mixed(rng, n, rank=3):
    A = rng.normal(size=(2**n, rank)) + 1j * rng.normal(size=(2**n, rank))
    rho = A @ A.conj().T
    return MixedState(n, rho / np.trace(rho))


def z_on(n, q):
    return Hamiltonian.single(n, "Z", q)


class TestConventions:
    def test_qubit_zero_is_most_significant(self):
        psi = basis_state("10")
        assert psi.amplitudes[2] == 1.0
        assert expectation(psi, z_on(2, 0)) == -1.0
        assert expectation(psi, z_on(2, 1)) == 1.0

    def test_ry_pi_flips(self):
        out = apply_gate(zero_state(1), "RY", (0,), np.pi)
        np.testing.assert_allclose(np.abs(out.amplitudes), [0, 1], atol=1e-12)
        assert expectation(out, z_on(1, 0)) == pytest.approx(-1.0, abs=1e-12)

    def test_cnot_truth_table(self):
        for bits, want in [("00", "00"), ("01", "01"), ("10", "11"), ("11", "10")]:
            out = apply_gate(basis_state(bits), "CNOT", (0, 1))
            np.testing.assert_array_equal(out.amplitudes, basis_state(want).amplitudes)

    def test_identity_bit_exact(self):
        rng = np.random.default_rng(0)
        psi = random_pure(rng, 3)
        out = apply_gate(psi, "I", (1,))
        np.testing.assert_array_equal(out.amplitudes, psi.amplitudes)
        rho = random_mixed(rng, 2)
        np.testing.assert_array_equal(apply_gate(rho, "I", (0,)).matrix, rho.matrix)

    @pytest.mark.parametrize("kind", ["RX", "RY", "RZ"])
    def test_rotation_matrix_convention(self, kind):
        theta = 0.731
        P = {"RX": "X", "RY": "Y", "RZ": "Z"}[kind]
        want = np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * ref_pauli(P)
        np.testing.assert_allclose(gate_matrix(kind, theta), want, atol=1e-14)

    def test_t_gate(self):
        np.testing.assert_allclose(gate_matrix("T"), np.diag([1, np.exp(1j * np.pi / 4)]))


class TestGateErrors:
    def test_out_of_range_qubit(self):
        with pytest.raises(IndexError):
            apply_gate(zero_state(2), "RX", (2,), 0.1)
        with pytest.raises(IndexError):
            apply_gate(zero_state(2), "CNOT", (0, 5))

    def test_missing_and_extra_angle(self):
        with pytest.raises(ValueError):
            apply_gate(zero_state(1), "RY", (0,))
        with pytest.raises(ValueError):
            apply_gate(zero_state(2), "CNOT", (0, 1), 0.3)

    def test_repeated_qubit_and_unknown_kind(self):
        with pytest.raises(ValueError):
            apply_gate(zero_state(2), "CNOT", (1, 1))
        with pytest.raises(ValueError):
            apply_gate(zero_state(1), "H", (0,))


class TestAgainstDenseOracle:
    def test_pure_evolution_matches_unitaries(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(1, 5))
            psi = random_pure(rng, n)
            ref = psi.amplitudes.copy()
            for kind, qubits, angle in random_gate_list(rng, n, 6):
                psi = apply_gate(psi, kind, qubits, angle)
                ref = ref_unitary(n, kind, qubits, angle) @ ref
            np.testing.assert_allclose(psi.amplitudes, ref, atol=1e-12)

    def test_mixed_matches_pure_on_random_circuits(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(1, 5))
            H = Hamiltonian(n, tuple(PauliString(float(rng.normal()), "".join(rng.choice(list("IXYZ"), n))) for _ in range(4)))
            psi, rho = zero_state(n), zero_state(n, mixed=True)
            for kind, qubits, angle in random_gate_list(rng, n, int(rng.integers(1, 7))):
                psi = apply_gate(psi, kind, qubits, angle)
                rho = apply_gate(rho, kind, qubits, angle)
            assert expectation(rho, H) == pytest.approx(expectation(psi, H), abs=1e-9)

    def test_noisy_evolution_matches_kraus_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            n = int(rng.integers(2, 4))
            gates = random_gate_list(rng, n, 6)
            rho = zero_state(n, mixed=True)
            for kind, qubits, angle in gates:
                rho = apply_gate(rho, kind, qubits, angle)
                p = 0.0 if kind == "I" else (0.2 if kind == "CNOT" else 0.05)
                rho = apply_depolarizing(rho, qubits, p)
            ref = ref_run(n, [(k, q, a, True) for k, q, a in gates], 0.05, 0.2)
            np.testing.assert_allclose(rho.matrix, ref, atol=1e-12)

    def test_batched_angles_match_loop(self):
        rng = np.random.default_rng(4)
        angles = rng.uniform(0, 2 * np.pi, 7)
        state = apply_gate(basis_state("01"), "RX", (1,), 0.3)
        batched = apply_gate(state, "RY", (0,), angles)
        for i, a in enumerate(angles):
            single = apply_gate(state, "RY", (0,), a)
            np.testing.assert_allclose(batched.amplitudes[i], single.amplitudes, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    n=st.integers(1, 4),
    kind=st.sampled_from(["RX", "RY", "RZ", "T", "CNOT", "I"]),
)
def test_norm_and_trace_preserved(seed, n, kind):
    rng = np.random.default_rng(seed)
    if kind == "CNOT":
        if n == 1:
            return
        qubits = tuple(int(q) for q in rng.choice(n, size=2, replace=False))
    else:
        qubits = (int(rng.integers(n)),)
    angle = float(rng.uniform(-10, 10)) if kind.startswith("R") else None
    psi = apply_gate(random_pure(rng, n), kind, qubits, angle)
    assert psi.norm() == pytest.approx(1.0, abs=1e-10)
    rho = apply_gate(random_mixed(rng, n), kind, qubits, angle)
    assert rho.trace() == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(rho.matrix, rho.matrix.conj().T, atol=1e-10)


class TestDepolarizing:
    def test_z_shrinks_by_one_minus_p(self):
        rho = apply_depolarizing(zero_state(1, mixed=True), (0,), 0.05)
        assert expectation(rho, z_on(1, 0)) == pytest.approx(0.95, abs=1e-12)

    def test_zero_probability_is_identity(self):
        rho = random_mixed(np.random.default_rng(0), 3)
        np.testing.assert_array_equal(apply_depolarizing(rho, (0, 2), 0.0).matrix, rho.matrix)

    def test_full_probability_on_all_qubits(self):
        rho = random_mixed(np.random.default_rng(1), 3)
        out = apply_depolarizing(rho, (0, 1, 2), 1.0)
        np.testing.assert_allclose(out.matrix, maximally_mixed(3).matrix, atol=1e-12)

    @pytest.mark.parametrize("qubits", [(0,), (2,), (0, 1), (2, 0)])
    def test_matches_pauli_kraus_form(self, qubits):
        rho = random_mixed(np.random.default_rng(7), 3)
        out = apply_depolarizing(rho, qubits, 0.37)
        np.testing.assert_allclose(out.matrix, ref_depolarize(rho.matrix, 3, qubits, 0.37), atol=1e-12)

    def test_linear_trace_preserving_positive(self):
        rng = np.random.default_rng(8)
        a, b = random_mixed(rng, 2), random_mixed(rng, 2)
        mix = MixedState(2, 0.3 * a.matrix + 0.7 * b.matrix)
        lhs = apply_depolarizing(mix, (0, 1), 0.2).matrix
        rhs = 0.3 * apply_depolarizing(a, (0, 1), 0.2).matrix + 0.7 * apply_depolarizing(b, (0, 1), 0.2).matrix
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)
        assert np.trace(lhs).real == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(lhs, lhs.conj().T, atol=1e-12)
        assert np.linalg.eigvalsh(lhs).min() >= -1e-8

    def test_errors(self):
        with pytest.raises(ValueError):
            apply_depolarizing(zero_state(1, mixed=True), (0,), 1.5)
        with pytest.raises(TypeError):
            apply_depolarizing(zero_state(1), (0,), 0.1)
        with pytest.raises(ValueError):
            NoiseModel(p1=-0.1)

    def test_noise_model_probabilities(self):
        noise = NoiseModel.depolarizing()
        assert (noise.prob_for("RY"), noise.prob_for("T"), noise.prob_for("CNOT"), noise.prob_for("I")) == (0.05, 0.05, 0.2, 0.0)
        assert NoiseModel.off().prob_for("CNOT") == 0.0
        assert not NoiseModel(0.1, 0.1, enabled=False).active


class TestExpectation:
    def test_examples(self):
        assert expectation(zero_state(1), z_on(1, 0)) == 1.0
        assert expectation(zero_state(3), projector_last_zero(3)) == pytest.approx(1.0)
        assert expectation(zero_state(4), h2_hamiltonian()) == pytest.approx(0.757, abs=1e-12)

    def test_matches_dense_trace(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            n = int(rng.integers(1, 5))
            terms = tuple(PauliString(float(rng.normal()), "".join(rng.choice(list("IXYZ"), n))) for _ in range(5))
            H = Hamiltonian(n, terms)
            dense = sum(t.coefficient * ref_pauli(t.letters) for t in terms)
            rho = random_mixed(rng, n)
            assert expectation(rho, H) == pytest.approx(np.trace(dense @ rho.matrix).real, abs=1e-9)
            psi = random_pure(rng, n)
            want = (psi.amplitudes.conj() @ dense @ psi.amplitudes).real
            assert expectation(psi, H) == pytest.approx(want, abs=1e-9)
            assert expectation(to_mixed(psi), H) == pytest.approx(want, abs=1e-9)

    def test_qubit_mismatch(self):
        with pytest.raises(ValueError):
            expectation(zero_state(2), z_on(3, 0))


class TestGroundEnergy:
    def test_small_examples(self):
        assert exact_ground_energy(z_on(1, 0)) == pytest.approx(-1.0)
        assert exact_ground_energy(Hamiltonian.from_pairs([(0.5, "ZZ")])) == pytest.approx(-0.5)

    def test_h2(self):
        assert exact_ground_energy(h2_hamiltonian()) == pytest.approx(-1.136, abs=0.01)

    def test_rayleigh_quotients_bound_from_above(self):
        H = h2_hamiltonian().to_matrix()
        e0 = exact_ground_energy(h2_hamiltonian())
        rng = np.random.default_rng(0)
        v = rng.normal(size=(1000, 16)) + 1j * rng.normal(size=(1000, 16))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        rq = np.einsum("bi,ij,bj->b", v.conj(), H, v).real
        assert rq.min() >= e0 - 1e-12

    def test_too_many_qubits(self):
        with pytest.raises(CapabilityError):
            exact_ground_energy(z_on(7, 0))


class TestHamiltonianText:
    def test_round_trip(self):
        h = h2_hamiltonian()
        back = Hamiltonian.from_text(h.to_text())
        assert back == h
        assert len(back.terms) == 15

    def test_bad_letters(self):
        with pytest.raises(ValueError):
            PauliString(1.0, "ZQ")
        with pytest.raises(ValueError):
            Hamiltonian(2, (PauliString(1.0, "ZZZ"),))
