"""Dense statevector simulation.

States are complex arrays whose first axis is the basis integer, with qubit
``q`` at bit ``q``; an optional trailing axis holds independent trajectories. Bitstrings put
qubit 0 in the rightmost character.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Iterable

import numpy as np

from .errors import EngineError
from .ir import Gate, GateKind, QuantumCircuit

MAX_QUBITS = 12

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]], dtype=complex)
_CX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_Z = np.diag([1, -1]).astype(complex)


def rz_matrix(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rx_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def rzx_matrix(theta: float) -> np.ndarray:
    """exp(-i theta/2 Z(x)X), Z on the first (control) qubit."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return c * np.eye(4, dtype=complex) - 1j * s * np.kron(_Z, _X)


def gate_matrix(g: Gate) -> np.ndarray | None:
    """Unitary of ``g`` (2x2 or 4x4, first listed qubit most significant); None for identity."""
    k = g.kind
    if k is GateKind.X:
        return _X
    if k is GateKind.SX:
        return _SX
    if k is GateKind.RZ:
        return rz_matrix(g.angle)
    if k is GateKind.RX:
        return rx_matrix(g.angle)
    if k is GateKind.CX:
        return _CX
    if k is GateKind.RZX:
        return rzx_matrix(g.angle)
    if k in (GateKind.DELAY, GateKind.BARRIER, GateKind.MEASURE):
        return None
    raise EngineError(f"no unitary for {k.value}")


def apply_1q(state: np.ndarray, mat: np.ndarray, q: int, n: int) -> np.ndarray:
    v = state.reshape(1 << (n - 1 - q), 2, -1)
    return np.matmul(mat, v).reshape(state.shape)


def apply_2q(state: np.ndarray, mat: np.ndarray, a: int, b: int, n: int) -> np.ndarray:
    """``mat`` acts on (a, b) with ``a`` as the high bit of its 4x4 index."""
    hi, lo = max(a, b), min(a, b)
    v = state.reshape(1 << (n - 1 - hi), 2, 1 << (hi - lo - 1), 2, -1)
    out = np.empty_like(v)

    def part(bit_a, bit_b):
        bh, bl = (bit_a, bit_b) if a == hi else (bit_b, bit_a)
        return (slice(None), bh, slice(None), bl, slice(None))

    idx = [part(r >> 1, r & 1) for r in range(4)]
    for r in range(4):
        terms = [mat[r, c] * v[idx[c]] for c in range(4) if mat[r, c] != 0]
        out[idx[r]] = sum(terms[1:], terms[0])
    return out.reshape(state.shape)


def apply_gate(state: np.ndarray, g: Gate, n: int) -> np.ndarray:
    mat = gate_matrix(g)
    if mat is None:
        return state
    if len(g.qubits) == 1:
        return apply_1q(state, mat, g.qubits[0], n)
    return apply_2q(state, mat, g.qubits[0], g.qubits[1], n)


def zero_state(n: int, batch: int | None = None) -> np.ndarray:
    if n > MAX_QUBITS:
        raise EngineError(f"{n} qubits exceeds the simulator limit of {MAX_QUBITS}")
    shape = (1 << n,) if batch is None else (1 << n, batch)
    state = np.zeros(shape, dtype=complex)
    state[0] = 1.0
    return state


def statevector(gates: Iterable[Gate], n_qubits: int) -> np.ndarray:
    state = zero_state(n_qubits)
    for g in gates:
        state = apply_gate(state, g, n_qubits)
    return state


def marginal_probabilities(probs: np.ndarray, measured: Iterable[int]) -> np.ndarray:
    """Fold ``probs`` so that unmeasured qubits read as 0."""
    mask = sum(1 << q for q in measured)
    idx = np.arange(probs.shape[-1]) & mask
    return np.bincount(idx, weights=probs, minlength=probs.shape[-1])


def to_distribution(probs: np.ndarray, n: int, cutoff: float = 0.0) -> dict[str, float]:
    return {format(i, f"0{n}b"): float(p) for i, p in enumerate(probs) if p > cutoff}


def measured_or_all(circuit: QuantumCircuit) -> frozenset[int]:
    return circuit.measured_qubits or frozenset(range(circuit.n_qubits))


def simulate_exact(circuit: QuantumCircuit | Iterable[Gate], n_qubits: int | None = None) -> dict[str, float]:
    """Exact output distribution from |0...0>.

    For a :class:`QuantumCircuit` the measured qubits are reported and the others
    read as 0; a bare gate sequence (``n_qubits`` required) reports every qubit.
    """
    if isinstance(circuit, QuantumCircuit):
        n = circuit.n_qubits
        measured = measured_or_all(circuit)
        gates = circuit.gates
    else:
        if n_qubits is None:
            raise EngineError("n_qubits is required for a bare gate sequence")
        n, gates, measured = n_qubits, list(circuit), range(n_qubits)
    probs = np.abs(statevector(gates, n)) ** 2
    return to_distribution(marginal_probabilities(probs, measured), n)


# Pauli errors on batched trajectories. Y is applied as Z then X; the global
# phase is irrelevant per trajectory.

@lru_cache(maxsize=None)
def _flip(n: int, q: int) -> np.ndarray:
    return np.arange(1 << n) ^ (1 << q)


@lru_cache(maxsize=None)
def _sign(n: int, q: int) -> np.ndarray:
    return 1 - 2 * ((np.arange(1 << n) >> q) & 1).astype(float)


def apply_pauli_rows(state: np.ndarray, rows: np.ndarray, paulis: np.ndarray, q: int, n: int) -> None:
    """In place: Pauli ``paulis[i]`` (1=X, 2=Y, 3=Z) on qubit ``q`` of trajectory ``rows[i]``."""
    for p in (1, 2, 3):
        sel = rows[paulis == p]
        if not sel.size:
            continue
        sub = state[:, sel]
        if p in (2, 3):
            sub = sub * _sign(n, q)[:, None]
        if p in (1, 2):
            sub = sub[_flip(n, q)]
        state[:, sel] = sub


def sample_indices(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One basis index per row of ``probs`` (shape (B, 2^n))."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=1), probs.shape[1] - 1)
