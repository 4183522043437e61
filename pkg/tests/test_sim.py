import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from dense_oracle import P0, circuit_matrix, op_matrix, pauli_string, rot
from qmlbench.sim import (
    Angle,
    Circuit,
    DensityMatrix,
    Observable,
    SimulationError,
    StateVector,
    amplitude_embed,
    apply_circuit,
    build_template,
    circuit_unitary,
    expectation,
    gate,
    gibbs_state,
    most_probable_bitstring,
    reduced_density_matrix,
    sample_bitstrings,
    simulate,
    state_overlap,
)


def random_state(rng, n):
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return StateVector(n, v / np.linalg.norm(v))


def random_gate(rng, n):
    kinds = ["RX", "RY", "RZ", "Rot", "H", "X"] + (["CNOT", "CZ", "CRX", "CRY", "CRZ", "CRot", "PPR"] if n > 1 else [])
    kind = kinds[rng.integers(len(kinds))]
    if kind in ("CNOT", "CZ", "CRX", "CRY", "CRZ", "CRot"):
        wires = tuple(rng.choice(n, 2, replace=False))
    elif kind == "PPR":
        k = int(rng.integers(1, n + 1))
        wires = tuple(rng.choice(n, k, replace=False))
        return gate("PPR", wires, rng.uniform(-np.pi, np.pi), pauli="".join(rng.choice(list("XYZ"), k)))
    else:
        wires = (int(rng.integers(n)),)
    n_angles = {"Rot": 3, "CRot": 3}.get(kind, 1 if kind.startswith(("R", "CR")) else 0)
    return gate(kind, wires, *rng.uniform(-np.pi, np.pi, n_angles))


class TestApplyCircuit:
    def test_empty_circuit_is_ground_state(self):
        assert np.allclose(apply_circuit(Circuit(2)).amplitudes, [1, 0, 0, 0])

    def test_hadamard(self):
        psi = apply_circuit(Circuit(1, [gate("H", 0)]))
        assert np.allclose(psi.amplitudes, [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-15)

    def test_random_gates_match_dense_product(self, rng):
        for _ in range(20):
            circ = Circuit(3, [random_gate(rng, 3) for _ in range(5)])
            psi = apply_circuit(circ).amplitudes
            ref = circuit_matrix(circ)[:, 0]
            assert np.max(np.abs(psi - ref)) < 1e-12

    def test_bound_angles_match_dense(self, rng):
        ops = [gate("RX", 0, Angle.feat(0, 0.5)),
               gate("RY", 1, Angle(feature=0, feature2=1, coeff=2.0)),
               gate("RZ", 0, Angle(feature=1, scale=0, param=1)),
               gate("CRY", (0, 1), Angle(const=0.3, param=2)),
               gate("PPR", (0, 1), Angle.par(0), pauli="XY")]
        circ = Circuit(2, ops, n_params=3, n_features=2)
        x, theta = rng.normal(size=2), rng.normal(size=3)
        psi = apply_circuit(circ, x, theta).amplitudes
        assert np.max(np.abs(psi - circuit_matrix(circ, x, theta)[:, 0])) < 1e-12

    def test_batched_simulation_matches_rows(self, rng):
        circ = build_template("iqp_embedding", 3, 2)
        X = rng.normal(size=(4, 3))
        batch = simulate(circ, X)
        for row, x in zip(batch, X):
            assert np.allclose(row, apply_circuit(circ, x).amplitudes, atol=1e-13)

    def test_dimension_mismatch_names_sizes(self):
        circ = Circuit(1, [gate("RX", 0, Angle.feat(0))], n_features=1)
        with pytest.raises(SimulationError, match="1"):
            apply_circuit(circ, [0.1, 0.2])

    def test_rejects_bad_wires(self):
        with pytest.raises(SimulationError):
            Circuit(2, [gate("CNOT", (0, 2))])
        with pytest.raises(SimulationError):
            gate("CNOT", (1, 1))
        with pytest.raises(SimulationError):
            gate("PPR", (0, 1), 0.1, pauli="X")

    def test_rejects_out_of_range_parameter(self):
        with pytest.raises(SimulationError):
            Circuit(1, [gate("RX", 0, Angle.par(2))], n_params=2)


class TestGateProperties:
    @pytest.mark.parametrize("kind", ["RX", "RY", "RZ", "Rot", "H", "X", "CNOT", "CZ", "CRX", "CRY", "CRZ",
                                      "CRot", "PPR"])
    def test_norm_preserved_on_random_states(self, kind, rng):
        n = 3
        for _ in range(100):
            while True:
                g = random_gate(rng, n)
                if g.kind == kind:
                    break
            init = random_state(rng, n)
            out = apply_circuit(Circuit(n, [g]), initial=init).amplitudes
            assert abs(np.linalg.norm(out) - 1) < 1e-10

    def test_rotation_convention(self):
        a = 0.7
        U = circuit_unitary(Circuit(1, [gate("RX", 0, a)]))
        assert np.allclose(U, [[np.cos(a / 2), -1j * np.sin(a / 2)], [-1j * np.sin(a / 2), np.cos(a / 2)]])

    def test_wire_zero_is_most_significant(self):
        psi = apply_circuit(Circuit(2, [gate("X", 0)])).amplitudes
        assert np.allclose(psi, [0, 0, 1, 0])

    @given(st.integers(1, 3), st.integers(0, 10**6))
    def test_circuits_are_unitary(self, n, seed):
        rng = np.random.default_rng(seed)
        circ = Circuit(n, [random_gate(rng, n) for _ in range(6)])
        U = circuit_unitary(circ)
        assert np.max(np.abs(U.conj().T @ U - np.eye(2**n))) < 1e-10
        assert np.max(np.abs(U - circuit_matrix(circ))) < 1e-12

    def test_ppr_matches_matrix_exponential(self):
        a = 1.1
        U = circuit_unitary(Circuit(2, [gate("PPR", (0, 1), a, pauli="ZX")]))
        assert np.allclose(U, expm(-0.5j * a * pauli_string("ZX")), atol=1e-12)

    def test_controlled_rotation_blocks(self):
        a = 0.4
        U = circuit_unitary(Circuit(2, [gate("CRY", (0, 1), a)]))
        assert np.allclose(U[:2, :2], np.eye(2))
        assert np.allclose(U[2:, 2:], rot(np.array([[0, -1j], [1j, 0]]), a))


class TestExpectation:
    def test_ground_state_z(self):
        assert expectation(StateVector(1, np.array([1, 0])), Observable.z(0, 1)) == pytest.approx(1.0)

    def test_plus_state_z(self):
        psi = StateVector(1, np.array([1, 1]) / np.sqrt(2))
        assert abs(expectation(psi, Observable.z(0, 1))) < 1e-12

    def test_dense_observable(self, rng):
        psi = random_state(rng, 3)
        obs = Observable([(0.5, "ZIZ"), (0.2, "XXI")])
        M = 0.5 * pauli_string("ZIZ") + 0.2 * pauli_string("XXI")
        ref = np.real(psi.amplitudes.conj() @ M @ psi.amplitudes)
        value = expectation(psi, obs)
        assert value == pytest.approx(ref, abs=1e-12)
        assert abs(value) <= obs.bound()

    def test_mismatched_register(self, rng):
        with pytest.raises(SimulationError):
            expectation(random_state(rng, 2), Observable.z(0, 3))

    def test_bad_observables(self):
        with pytest.raises(SimulationError):
            Observable([(1.0, "ZZ"), (1.0, "Z")])
        with pytest.raises(SimulationError):
            Observable([(np.inf, "Z")])

    @given(st.integers(0, 10**6))
    def test_separable_circuit_factorises(self, seed):
        rng = np.random.default_rng(seed)
        n = 3
        ops = [g for g in (random_gate(rng, 1) for _ in range(8))]
        per_wire = [[gate(g.kind, w, *[a.const for a in g.angles]) for g in ops[w::n]] for w in range(n)]
        full = Circuit(n, [g for w in range(n) for g in per_wire[w]])
        word = "".join(rng.choice(list("XYZ"), n))
        joint = expectation(apply_circuit(full), Observable([(1.0, word)]))
        prod = 1.0
        for w in range(n):
            single = Circuit(1, [gate(g.kind, 0, *[a.const for a in g.angles]) for g in per_wire[w]])
            prod *= expectation(apply_circuit(single), Observable([(1.0, word[w])]))
        assert joint == pytest.approx(prod, abs=1e-12)


class TestOverlap:
    def test_self_overlap(self, rng):
        a = random_state(rng, 2)
        assert state_overlap(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert state_overlap(StateVector(1, np.array([1, 0])), StateVector(1, np.array([0, 1]))) == 0.0

    def test_explicit_sum(self, rng):
        a, b = random_state(rng, 2), random_state(rng, 2)
        ref = abs(sum(np.conj(a.amplitudes[i]) * b.amplitudes[i] for i in range(4))) ** 2
        assert state_overlap(a, b) == pytest.approx(ref, abs=1e-14)

    @given(st.integers(0, 10**6))
    def test_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        a, b = random_state(rng, 2), random_state(rng, 2)
        assert state_overlap(a, b) == state_overlap(b, a)

    def test_size_mismatch(self, rng):
        with pytest.raises(SimulationError):
            state_overlap(random_state(rng, 1), random_state(rng, 2))


class TestAmplitudeEmbedding:
    def test_exact_fit(self):
        assert np.allclose(amplitude_embed([1, 0, 0, 0], 2).amplitudes, [1, 0, 0, 0])

    def test_padding(self):
        v = np.array([3, 4, 0.25, 0.25]) / np.sqrt(25 + 0.125)
        assert np.allclose(amplitude_embed([3, 4], 2).amplitudes, v, atol=1e-15)

    def test_errors(self):
        with pytest.raises(SimulationError):
            amplitude_embed([], 1)
        with pytest.raises(SimulationError):
            amplitude_embed([1, 2, 3], 1)


class TestTemplates:
    def test_iqp_single_qubit(self):
        circ = build_template("iqp_embedding", 1, 1)
        assert [op.kind for op in circ.ops] == ["H", "RZ"]

    def test_strongly_entangling_count(self):
        assert build_template("strongly_entangling", 4, 3).n_params == 36

    def test_qaoa_register(self):
        assert build_template("qaoa_embedding", n_features=4).n_qubits == 5

    def test_random_layers_deterministic(self):
        a = build_template("random_layers", 3, 2, seed=7)
        b = build_template("random_layers", 3, 2, seed=7)
        assert a.ops == b.ops and len(a.ops) == 6

    def test_unknown_kind(self):
        with pytest.raises(SimulationError):
            build_template("brickwork", 2)

    def test_iqp_zz_matches_exponential(self, rng):
        x = rng.normal(size=2)
        U = circuit_unitary(build_template("iqp_embedding", 2, 1), x)
        HH = np.kron(*[np.array([[1, 1], [1, -1]]) / np.sqrt(2)] * 2)
        D = expm(-0.5j * (x[0] * pauli_string("ZI") + x[1] * pauli_string("IZ") + x[0] * x[1] * pauli_string("ZZ")))
        assert np.allclose(U, D @ HH, atol=1e-12)


class TestSampling:
    def test_deterministic_state(self):
        assert sample_bitstrings(StateVector(2, np.array([1, 0, 0, 0])), 5, seed=0) == ["00"] * 5

    def test_plus_state_frequency(self):
        shots = sample_bitstrings(StateVector(1, np.array([1, 1]) / np.sqrt(2)), 100_000, seed=3)
        assert abs(shots.count("1") / 1e5 - 0.5) < 0.01

    def test_seeded(self, rng):
        s = random_state(rng, 3)
        assert sample_bitstrings(s, 50, seed=9) == sample_bitstrings(s, 50, seed=9)

    def test_most_probable(self, rng):
        assert most_probable_bitstring(StateVector(2, np.array([0, 0, 1, 0]))) == "10"
        assert most_probable_bitstring(StateVector(1, np.array([1, 1]) / np.sqrt(2))) == "0"
        s = random_state(rng, 3)
        p = np.abs(s.amplitudes) ** 2
        assert most_probable_bitstring(s) == format(int(np.argmax(p)), "03b")


class TestDensityMatrices:
    def test_zero_hamiltonian(self):
        rho = gibbs_state(Observable([(0.0, "ZZ")]), 1.0)
        assert np.allclose(rho.matrix, np.eye(4) / 4)

    def test_high_temperature(self):
        rho = gibbs_state(Observable([(1.0, "Z")]), 100.0)
        assert np.allclose(np.diag(rho.matrix).real, 0.5, atol=0.01)

    def test_closed_form(self):
        rho = gibbs_state(Observable([(1.0, "Z")]), 1.0)
        z = np.exp(-1) + np.exp(1)
        assert np.allclose(np.diag(rho.matrix).real, [np.exp(-1) / z, np.exp(1) / z], atol=1e-14)

    def test_against_expm(self):
        obs = Observable([(0.7, "XZ"), (-0.3, "YY"), (0.2, "ZI")])
        rho = gibbs_state(obs, 0.8)
        ref = expm(-obs.matrix() / 0.8)
        assert np.allclose(rho.matrix, ref / np.trace(ref), atol=1e-12)
        assert np.max(np.abs(rho.matrix @ obs.matrix() - obs.matrix() @ rho.matrix)) < 1e-10
        assert abs(np.trace(rho.matrix) - 1) < 1e-10

    def test_errors(self):
        with pytest.raises(SimulationError):
            gibbs_state(Observable([(1.0, "Z")]), 0.0)
        with pytest.raises(SimulationError):
            gibbs_state(Observable([(1.0, "Z" * 13)]), 1.0)

    def test_reduced_product_state(self):
        psi = StateVector(2, np.kron([1, 0], [1, 1]) / np.sqrt(2))
        assert np.allclose(reduced_density_matrix(psi, 1).matrix, np.full((2, 2), 0.5))

    def test_reduced_bell_state(self):
        bell = StateVector(2, np.array([1, 0, 0, 1]) / np.sqrt(2))
        assert np.allclose(reduced_density_matrix(bell, 0).matrix, np.eye(2) / 2)

    def test_reduced_matches_index_sum(self, rng):
        s = random_state(rng, 3)
        t = s.amplitudes.reshape(2, 2, 2)
        ref = np.zeros((2, 2), dtype=complex)
        for a in range(2):
            for b in range(2):
                for i in range(2):
                    for j in range(2):
                        ref[i, j] += t[a, b, i] * np.conj(t[a, b, j])
        rho = reduced_density_matrix(s, 2)
        assert np.max(np.abs(rho.matrix - ref)) < 1e-12
        with pytest.raises(SimulationError):
            reduced_density_matrix(s, 3)

    def test_density_matrix_validation(self):
        with pytest.raises(SimulationError):
            DensityMatrix(1, np.array([[1, 0], [0, 1]]))

    def test_controlled_gate_projectors(self):
        # the oracle's controlled form reduces to the identity block when the control is |0>
        M = op_matrix("CRX", (0, 1), [0.3], None, 2)
        assert np.allclose(M[:2, :2], np.eye(2)) and np.allclose(np.kron(P0, np.eye(2)) @ M @ np.kron(P0, np.eye(2)),
                                                                  np.kron(P0, np.eye(2)))
