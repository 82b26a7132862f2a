import numpy as np
import pytest

from divbound.qsim import (Circuit, Gate, NoiseModel, apply_gate,
                           build_circuit, default_machines, run_ideal,
                           run_noisy, simulate_statevector)
from divbound.sampleset import empirical_distribution


def _dagger(gate):
    if gate.name in ("RY", "RZ"):
        return Gate(gate.name, gate.qubits, angle=-gate.angle)
    return gate  # H, X, CNOT, CZ, TOFFOLI are self-inverse


class TestGateAndCircuit:
    def test_unknown_gate(self):
        with pytest.raises(ValueError):
            Gate("SWAP", (0, 1))

    def test_wrong_arity(self):
        with pytest.raises(ValueError):
            Gate("CNOT", (0,))

    def test_duplicate_qubits(self):
        with pytest.raises(ValueError):
            Gate("CNOT", (1, 1))

    def test_qubit_out_of_range(self):
        with pytest.raises(ValueError):
            Circuit(1, (Gate("H", (1,)),), (0,))

    def test_qubit_cap(self):
        with pytest.raises(ValueError):
            Circuit(17, (), (0,))

    def test_measured_required(self):
        with pytest.raises(ValueError):
            Circuit(2, (), ())


class TestNoiseModel:
    def test_ranges(self):
        with pytest.raises(ValueError):
            NoiseModel(depolarizing_1q=1.5)
        with pytest.raises(ValueError):
            NoiseModel(readout_flip=0.6)

    def test_default_machines_gradient(self):
        machines = default_machines()
        assert len(machines) == 5
        p2 = [m.depolarizing_2q for m in machines]
        assert p2 == sorted(p2)
        assert machines[2].depolarizing_1q == pytest.approx(0.001)
        assert machines[2].readout_flip == pytest.approx(0.02)


class TestBuildCircuit:
    def test_walker_structure(self):
        c = build_circuit("walker", 3)
        assert c.n_qubits == 4
        assert c.measured_qubits == (2, 3)
        names = [g.name for g in c.gates]
        block = ["H", "H", "CNOT", "CNOT", "TOFFOLI"]
        assert names == block * 3

    def test_ghz_structure(self):
        c = build_circuit("ghz", 3)
        assert [g.name for g in c.gates] == ["H", "CNOT", "CNOT"]
        assert c.measured_qubits == (0, 1, 2)

    def test_random_deterministic(self):
        a = build_circuit("random", 5, seed=11)
        b = build_circuit("random", 5, seed=11)
        assert a.gates == b.gates

    def test_deep_random_depth(self):
        c = build_circuit("deep_random", 4, seed=0)
        assert c.depth == 12

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            build_circuit("qft", 4)


class TestStatevector:
    def test_norm_preserved_after_every_gate(self):
        for fam, p in (("walker", 4), ("ghz", 6), ("graph", 5),
                       ("random", 5), ("deep_random", 4)):
            c = build_circuit(fam, p, seed=2)
            state = np.zeros(1 << c.n_qubits, dtype=np.complex128)
            state[0] = 1.0
            for g in c.gates:
                apply_gate(state, c.n_qubits, g)
                assert abs(np.linalg.norm(state) - 1.0) < 1e-10

    def test_gates_unitary(self, rng):
        gates = [Gate("H", (0,)), Gate("X", (1,)), Gate("CNOT", (0, 2)),
                 Gate("CZ", (1, 2)), Gate("TOFFOLI", (0, 1, 2)),
                 Gate("RY", (2,), angle=0.7), Gate("RZ", (0,), angle=-1.3)]
        state = rng.normal(size=8) + 1j * rng.normal(size=8)
        state /= np.linalg.norm(state)
        for g in gates:
            before = state.copy()
            apply_gate(state, 3, g)
            apply_gate(state, 3, _dagger(g))
            assert np.allclose(state, before, atol=1e-10)

    def test_ghz_statevector(self):
        state = simulate_statevector(build_circuit("ghz", 3))
        expected = np.zeros(8, dtype=np.complex128)
        expected[0] = expected[7] = 1.0 / np.sqrt(2.0)
        assert np.allclose(state, expected, atol=1e-12)


class TestRunIdeal:
    def test_hadamard_coin(self):
        c = Circuit(1, (Gate("H", (0,)),), (0,))
        sm = run_ideal(c, 10000, seed=5)
        p0 = 1.0 - sm.bits.mean()
        assert abs(p0 - 0.5) < 0.02

    def test_x_deterministic(self):
        c = Circuit(1, (Gate("X", (0,)),), (0,))
        sm = run_ideal(c, 100, seed=0)
        assert np.all(sm.bits == 1)

    def test_ghz_support(self):
        sm = run_ideal(build_circuit("ghz", 3), 5000, seed=1)
        d = empirical_distribution(sm)
        assert set(d.probs) <= {"000", "111"}

    def test_determinism(self):
        c = build_circuit("random", 4, seed=3)
        a = run_ideal(c, 200, seed=8)
        b = run_ideal(c, 200, seed=8)
        assert np.array_equal(a.bits, b.bits)


class TestRunNoisy:
    def test_zero_noise_identical_to_ideal(self):
        c = build_circuit("walker", 4)
        nm = NoiseModel()
        ideal = run_ideal(c, 500, seed=21)
        noisy = run_noisy(c, nm, 500, seed=21)
        assert np.array_equal(ideal.bits, noisy.bits)

    def test_readout_half_is_uniform(self):
        c = Circuit(1, (Gate("X", (0,)),), (0,))
        nm = NoiseModel(readout_flip=0.5)
        sm = run_noisy(c, nm, 10000, seed=2)
        # P(1) = 0.5 exactly; binomial 4-sigma band
        assert abs(sm.bits.mean() - 0.5) < 0.02

    def test_repeated_full_depolarizing_mixes(self):
        # products of >= 4 uniform random Paulis flip the bit with
        # probability 0.5 up to ~6e-3, so the marginal is near-uniform
        c = Circuit(1, tuple(Gate("X", (0,)) for _ in range(5)), (0,))
        nm = NoiseModel(depolarizing_1q=1.0)
        sm = run_noisy(c, nm, 10000, seed=3)
        assert abs(sm.bits.mean() - 0.5) < 0.03

    def test_determinism(self):
        c = build_circuit("ghz", 4)
        nm = default_machines()[2]
        a = run_noisy(c, nm, 300, seed=6)
        b = run_noisy(c, nm, 300, seed=6)
        assert np.array_equal(a.bits, b.bits)

    def test_noise_perturbs_output(self):
        c = build_circuit("ghz", 4)
        nm = NoiseModel(depolarizing_1q=0.05, depolarizing_2q=0.2,
                        readout_flip=0.1)
        ideal = run_ideal(c, 1000, seed=9)
        noisy = run_noisy(c, nm, 1000, seed=9)
        assert not np.array_equal(ideal.bits, noisy.bits)
