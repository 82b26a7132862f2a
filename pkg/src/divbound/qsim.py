"""Dense statevector simulator with Pauli-trajectory noise.

Small circuit families paired with a parametric noise model produce the
ideal/noisy shot-matrix pairs that the estimation and conformal layers
consume. Noise is trajectory-sampled: after each gate, each touched
qubit suffers a uniformly random Pauli with the channel probability, and
measured bits are flipped independently afterwards. One trajectory per
shot, so the output plugs straight into a ShotMatrix.

Qubit 0 is the most significant bit of a basis-state index, matching
the canonical bitstring keys used elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .sampleset import ShotMatrix

MAX_QUBITS = 16

FAMILIES = ("walker", "ghz", "graph", "random", "deep_random")

_OPCODES = {"H": 0, "X": 1, "CNOT": 2, "CZ": 3, "TOFFOLI": 4, "RY": 5, "RZ": 6}
_N_TOUCHED = {0: 1, 1: 1, 2: 2, 3: 2, 4: 3, 5: 1, 6: 1}

_SQRT2INV = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple
    angle: float = 0.0

    def __post_init__(self):
        if self.name not in _OPCODES:
            raise ValueError(f"unknown gate {self.name!r}")
        expected = _N_TOUCHED[_OPCODES[self.name]]
        if len(self.qubits) != expected:
            raise ValueError(f"{self.name} takes {expected} qubits")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("gate qubits must be distinct")


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple
    measured_qubits: tuple
    family: str = "random"
    depth: int = 0

    def __post_init__(self):
        if self.n_qubits > MAX_QUBITS:
            raise ValueError(f"n_qubits {self.n_qubits} exceeds {MAX_QUBITS}")
        if not self.measured_qubits:
            raise ValueError("measured_qubits must be nonempty")
        if len(set(self.measured_qubits)) != len(self.measured_qubits):
            raise ValueError("measured_qubits must be duplicate-free")
        for g in self.gates:
            if any(q >= self.n_qubits for q in g.qubits):
                raise ValueError(f"gate {g} addresses qubit >= {self.n_qubits}")
        if any(q >= self.n_qubits for q in self.measured_qubits):
            raise ValueError("measured qubit out of range")


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing probabilities per gate plus readout flip per bit."""

    depolarizing_1q: float = 0.0
    depolarizing_2q: float = 0.0
    readout_flip: float = 0.0
    machine_id: str = "ideal"

    def __post_init__(self):
        if not 0.0 <= self.depolarizing_1q <= 1.0:
            raise ValueError("depolarizing_1q outside [0, 1]")
        if not 0.0 <= self.depolarizing_2q <= 1.0:
            raise ValueError("depolarizing_2q outside [0, 1]")
        if not 0.0 <= self.readout_flip <= 0.5:
            raise ValueError("readout_flip outside [0, 0.5]")


def default_machines() -> list:
    """Five machines on a noise gradient, multiplier k in 0.5 .. 1.5."""
    machines = []
    for i, k in enumerate((0.5, 0.75, 1.0, 1.25, 1.5)):
        machines.append(NoiseModel(
            depolarizing_1q=0.001 * k,
            depolarizing_2q=0.01 * k,
            readout_flip=0.02 * k,
            machine_id=f"machine_{i}",
        ))
    return machines


# ---------------------------------------------------------------------------
# circuit families


def build_circuit(family: str, param: int, seed: int = 0) -> Circuit:
    """Deterministic circuit for a (family, size-or-depth, seed) triple.

    walker: 4 qubits, `param` repetitions of the two-CNOT + Toffoli
    block with Hadamards refreshing the unmeasured pair; measures
    qubits 2 and 3. ghz/graph/random: `param` qubits; random uses depth
    = size and deep_random depth = 3 * size, one rotation plus one
    entangling gate per depth unit.
    """
    if family not in FAMILIES:
        raise ValueError(f"unsupported family {family!r}")
    if param < 1:
        raise ValueError("size/depth parameter must be >= 1")
    if family == "walker":
        gates = []
        for _ in range(param):
            gates.append(Gate("H", (0,)))
            gates.append(Gate("H", (1,)))
            gates.append(Gate("CNOT", (0, 2)))
            gates.append(Gate("CNOT", (1, 3)))
            gates.append(Gate("TOFFOLI", (0, 1, 2)))
        return Circuit(4, tuple(gates), (2, 3), family="walker", depth=param)
    if family == "ghz":
        s = param
        gates = [Gate("H", (0,))]
        gates += [Gate("CNOT", (i, i + 1)) for i in range(s - 1)]
        return Circuit(s, tuple(gates), tuple(range(s)), family="ghz", depth=s)
    if family == "graph":
        s = param
        gates = [Gate("H", (i,)) for i in range(s)]
        if s >= 2:
            # ring topology; at s == 2 the ring degenerates to one edge
            edges = [(i, (i + 1) % s) for i in range(s if s > 2 else 1)]
            gates += [Gate("CZ", e) for e in edges]
        return Circuit(s, tuple(gates), tuple(range(s)), family="graph", depth=s)
    # random / deep_random
    s = param
    depth = s if family == "random" else 3 * s
    rng = np.random.default_rng(seed)
    gates = []
    for _ in range(depth):
        q = int(rng.integers(s))
        kind = "RY" if rng.random() < 0.5 else "RZ"
        gates.append(Gate(kind, (q,), angle=float(rng.normal(0.0, 0.5))))
        if s >= 2:
            pair = rng.choice(s, size=2, replace=False)
            kind2 = "CNOT" if rng.random() < 0.5 else "CZ"
            gates.append(Gate(kind2, (int(pair[0]), int(pair[1]))))
    return Circuit(s, tuple(gates), tuple(range(s)), family=family, depth=depth)


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _apply_1q(state, n, q, u00, u01, u10, u11):
    stride = 1 << (n - 1 - q)
    size = state.size
    i = 0
    while i < size:
        for j in range(i, i + stride):
            a = state[j]
            b = state[j + stride]
            state[j] = u00 * a + u01 * b
            state[j + stride] = u10 * a + u11 * b
        i += 2 * stride


@njit(cache=True)
def _apply_cnot(state, n, c, t):
    mc = 1 << (n - 1 - c)
    mt = 1 << (n - 1 - t)
    for i in range(state.size):
        if (i & mc) and not (i & mt):
            j = i | mt
            state[i], state[j] = state[j], state[i]


@njit(cache=True)
def _apply_cz(state, n, c, t):
    mc = 1 << (n - 1 - c)
    mt = 1 << (n - 1 - t)
    for i in range(state.size):
        if (i & mc) and (i & mt):
            state[i] = -state[i]


@njit(cache=True)
def _apply_toffoli(state, n, c1, c2, t):
    m1 = 1 << (n - 1 - c1)
    m2 = 1 << (n - 1 - c2)
    mt = 1 << (n - 1 - t)
    for i in range(state.size):
        if (i & m1) and (i & m2) and not (i & mt):
            j = i | mt
            state[i], state[j] = state[j], state[i]


@njit(cache=True)
def _apply_pauli(state, n, q, which):
    m = 1 << (n - 1 - q)
    if which == 2:  # Z
        for i in range(state.size):
            if i & m:
                state[i] = -state[i]
    elif which == 0:  # X
        for i in range(state.size):
            if not (i & m):
                j = i | m
                state[i], state[j] = state[j], state[i]
    else:  # Y
        for i in range(state.size):
            if not (i & m):
                j = i | m
                a = state[i]
                b = state[j]
                state[i] = -1j * b
                state[j] = 1j * a


@njit(cache=True)
def _apply_op(state, n, op, q0, q1, q2, angle):
    if op == 0:
        _apply_1q(state, n, q0, _SQRT2INV + 0j, _SQRT2INV + 0j,
                  _SQRT2INV + 0j, -_SQRT2INV + 0j)
    elif op == 1:
        _apply_pauli(state, n, q0, 0)
    elif op == 2:
        _apply_cnot(state, n, q0, q1)
    elif op == 3:
        _apply_cz(state, n, q0, q1)
    elif op == 4:
        _apply_toffoli(state, n, q0, q1, q2)
    elif op == 5:
        c = np.cos(angle / 2.0)
        s = np.sin(angle / 2.0)
        _apply_1q(state, n, q0, c + 0j, -s + 0j, s + 0j, c + 0j)
    else:
        e0 = np.exp(-0.5j * angle)
        e1 = np.exp(0.5j * angle)
        _apply_1q(state, n, q0, e0, 0j, 0j, e1)


@njit(cache=True)
def _noisy_trajectory(state, n, ops, gq, angles, touched, p1, p2, u):
    """One shot: gates with stochastic Pauli errors, then a basis draw.

    Consumes two uniforms per touched qubit per gate (error? / which
    Pauli) and one for the measurement, in a fixed order so that the
    zero-noise path reproduces the ideal sampler exactly.
    """
    state[:] = 0
    state[0] = 1
    k = 0
    for g in range(ops.size):
        _apply_op(state, n, ops[g], gq[g, 0], gq[g, 1], gq[g, 2], angles[g])
        nt = touched[g]
        p = p1 if nt == 1 else p2
        for t in range(nt):
            if u[k] < p:
                which = int(u[k + 1] * 3)
                if which > 2:
                    which = 2
                _apply_pauli(state, n, gq[g, t], which)
            k += 2
    r = u[k]
    acc = 0.0
    idx = state.size - 1
    for i in range(state.size):
        a = state[i]
        acc += a.real * a.real + a.imag * a.imag
        if r < acc:
            idx = i
            break
    return idx


def _encode(circuit: Circuit):
    g_count = len(circuit.gates)
    ops = np.empty(g_count, dtype=np.int64)
    gq = np.zeros((g_count, 3), dtype=np.int64)
    angles = np.zeros(g_count, dtype=np.float64)
    touched = np.empty(g_count, dtype=np.int64)
    for i, g in enumerate(circuit.gates):
        ops[i] = _OPCODES[g.name]
        for j, q in enumerate(g.qubits):
            gq[i, j] = q
        angles[i] = g.angle
        touched[i] = len(g.qubits)
    return ops, gq, angles, touched


def _rand_width(circuit: Circuit) -> tuple:
    gate_cols = 2 * sum(len(g.qubits) for g in circuit.gates)
    return gate_cols, gate_cols + 1 + len(circuit.measured_qubits)


def simulate_statevector(circuit: Circuit) -> np.ndarray:
    """Exact final state from |0...0>, as a dense 2^n complex vector."""
    n = circuit.n_qubits
    state = np.zeros(1 << n, dtype=np.complex128)
    state[0] = 1.0
    ops, gq, angles, _ = _encode(circuit)
    for g in range(ops.size):
        _apply_op(state, n, ops[g], gq[g, 0], gq[g, 1], gq[g, 2], angles[g])
    return state


def apply_gate(state: np.ndarray, n: int, gate: Gate) -> None:
    """Apply one gate in place (exposed for unitarity checks)."""
    q = gate.qubits
    _apply_op(state, n, _OPCODES[gate.name], q[0],
              q[1] if len(q) > 1 else 0, q[2] if len(q) > 2 else 0, gate.angle)


def _indices_to_bits(indices: np.ndarray, n: int, measured: tuple) -> np.ndarray:
    bits = np.empty((indices.size, len(measured)), dtype=np.uint8)
    for j, q in enumerate(measured):
        bits[:, j] = (indices >> (n - 1 - q)) & 1
    return bits


def run_ideal(circuit: Circuit, m: int, seed: int = 0,
              circuit_id: str = "", machine_id: str = "simulator") -> ShotMatrix:
    """Sample m measurement outcomes from the exact output distribution.

    Draws follow the same uniform-stream layout as run_noisy, so a
    zero-noise run with the same seed yields the identical matrix.
    """
    if m < 1:
        raise ValueError("need m >= 1")
    state = simulate_statevector(circuit)
    cdf = np.cumsum(np.abs(state) ** 2)
    gate_cols, total = _rand_width(circuit)
    u = np.random.default_rng(seed).random((m, total))
    indices = np.searchsorted(cdf, u[:, gate_cols], side="right")
    indices = np.minimum(indices, state.size - 1)
    bits = _indices_to_bits(indices.astype(np.int64), circuit.n_qubits,
                            circuit.measured_qubits)
    return ShotMatrix(bits, circuit_id=circuit_id, machine_id=machine_id)


def run_noisy(circuit: Circuit, nm: NoiseModel, m: int, seed: int = 0,
              circuit_id: str = "") -> ShotMatrix:
    """Monte-Carlo trajectory simulation, one trajectory per shot."""
    if m < 1:
        raise ValueError("need m >= 1")
    n = circuit.n_qubits
    ops, gq, angles, touched = _encode(circuit)
    gate_cols, total = _rand_width(circuit)
    u = np.random.default_rng(seed).random((m, total))
    state = np.empty(1 << n, dtype=np.complex128)
    indices = np.empty(m, dtype=np.int64)
    for shot in range(m):
        indices[shot] = _noisy_trajectory(
            state, n, ops, gq, angles, touched,
            nm.depolarizing_1q, nm.depolarizing_2q, u[shot])
    bits = _indices_to_bits(indices, n, circuit.measured_qubits)
    if nm.readout_flip > 0.0:
        flips = u[:, gate_cols + 1:] < nm.readout_flip
        bits = bits ^ flips.astype(np.uint8)
    return ShotMatrix(bits, circuit_id=circuit_id, machine_id=nm.machine_id)
