"""Bundled benchmark circuits and a random circuit generator."""
from __future__ import annotations

import math
from importlib import resources

import numpy as np

from .backend import BackendDescriptor
from .errors import CircuitError
from .ir import Gate, QuantumCircuit, cx, measure, rz, sx, x
from .qasm import parse_qasm

_PACKAGE = "decoyq.data.benchmarks"


def list_benchmarks() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(_PACKAGE).iterdir() if p.name.endswith(".qasm"))


def benchmark_text(name: str) -> str:
    path = resources.files(_PACKAGE).joinpath(f"{name}.qasm")
    if not path.is_file():
        raise CircuitError(f"no bundled benchmark named {name!r}")
    return path.read_text(encoding="utf-8")


def load_benchmark(name: str) -> QuantumCircuit:
    return parse_qasm(benchmark_text(name))


def random_circuit(n_qubits: int, n_gates: int, backend: BackendDescriptor,
                   rng: np.random.Generator, measure_all: bool = True) -> QuantumCircuit:
    """Uniform mix of X, SX, RZ and coupled CX on the first ``n_qubits`` qubits."""
    if not 1 <= n_qubits <= backend.n_qubits:
        raise CircuitError(f"cannot place {n_qubits} qubits on {backend.name}")
    pairs = [c for c in backend.couplings if max(c) < n_qubits]
    gates: list[Gate] = []
    for _ in range(n_gates):
        kind = int(rng.integers(4 if pairs else 3))
        if kind == 3:
            a, b = pairs[int(rng.integers(len(pairs)))]
            gates.append(cx(a, b) if rng.integers(2) else cx(b, a))
            continue
        q = int(rng.integers(n_qubits))
        if kind == 0:
            gates.append(x(q))
        elif kind == 1:
            gates.append(sx(q))
        else:
            gates.append(rz(float(rng.uniform(-math.pi, math.pi)), q))
    if measure_all:
        gates.extend(measure(q) for q in range(n_qubits))
    return QuantumCircuit(n_qubits, tuple(gates))
