"""Gate-level circuit representation.

Gates are immutable values. A circuit is an ordered tuple of gates; the
per-qubit order of that tuple is the execution order. Scheduling lives in
:mod:`decoyq.schedule`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import CircuitError


class GateKind(str, Enum):
    X = "x"
    SX = "sx"
    RZ = "rz"
    CX = "cx"
    DELAY = "delay"
    MEASURE = "measure"
    BARRIER = "barrier"
    # Only produced by the backend when it models partially attenuated pulses.
    RX = "rx"
    RZX = "rzx"


class Origin(str, Enum):
    USER = "user"
    DECOY = "decoy"
    RANDOMIZE_OUTPUT = "randomize_output"


SINGLE_PULSE = frozenset({GateKind.X, GateKind.SX})
_ANGLED = frozenset({GateKind.RZ, GateKind.RX, GateKind.RZX})
_ARITY = {
    GateKind.X: 1, GateKind.SX: 1, GateKind.RZ: 1, GateKind.RX: 1,
    GateKind.DELAY: 1, GateKind.MEASURE: 1,
    GateKind.CX: 2, GateKind.RZX: 2,
}


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    qubits: tuple[int, ...]
    angle: float | None = None
    duration: int | None = None
    origin: Origin = Origin.USER
    clbit: int | None = None

    def __post_init__(self):
        if not isinstance(self.qubits, tuple):
            object.__setattr__(self, "qubits", tuple(self.qubits))
        arity = _ARITY.get(self.kind)
        if arity is not None and len(self.qubits) != arity:
            raise CircuitError(f"{self.kind.value} takes {arity} qubit(s), got {self.qubits}")
        if self.kind is GateKind.BARRIER and not self.qubits:
            raise CircuitError("barrier needs at least one qubit")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"repeated qubit in {self.kind.value} {self.qubits}")
        if self.kind in _ANGLED and self.angle is None:
            raise CircuitError(f"{self.kind.value} requires an angle")
        if self.kind not in _ANGLED and self.angle is not None:
            raise CircuitError(f"{self.kind.value} takes no angle")
        if self.kind is GateKind.DELAY:
            if self.duration is None or self.duration < 0:
                raise CircuitError("delay duration must be a non-negative integer")
        elif self.duration is not None:
            raise CircuitError(f"{self.kind.value} takes no duration")

    @property
    def decoy(self) -> bool:
        return self.origin is Origin.DECOY

    def with_origin(self, origin: Origin) -> Gate:
        return replace(self, origin=origin)

    def __repr__(self) -> str:
        args = ""
        if self.angle is not None:
            args = f"({self.angle:.6g})"
        elif self.duration is not None:
            args = f"({self.duration})"
        tag = "" if self.origin is Origin.USER else f" [{self.origin.value}]"
        return f"{self.kind.value}{args} {','.join(f'q{q}' for q in self.qubits)}{tag}"


# Convenience constructors.

def x(q: int, origin: Origin = Origin.USER) -> Gate:
    return Gate(GateKind.X, (q,), origin=origin)


def sx(q: int, origin: Origin = Origin.USER) -> Gate:
    return Gate(GateKind.SX, (q,), origin=origin)


def rz(theta: float, q: int, origin: Origin = Origin.USER) -> Gate:
    return Gate(GateKind.RZ, (q,), angle=float(theta), origin=origin)


def cx(control: int, target: int, origin: Origin = Origin.USER) -> Gate:
    return Gate(GateKind.CX, (control, target), origin=origin)


def delay(duration: int, q: int, origin: Origin = Origin.USER) -> Gate:
    return Gate(GateKind.DELAY, (q,), duration=int(duration), origin=origin)


def measure(q: int, clbit: int | None = None) -> Gate:
    return Gate(GateKind.MEASURE, (q,), clbit=q if clbit is None else clbit)


def barrier(*qubits: int) -> Gate:
    return Gate(GateKind.BARRIER, tuple(qubits))


@dataclass(frozen=True)
class QuantumCircuit:
    n_qubits: int
    gates: tuple[Gate, ...] = ()
    n_clbits: int | None = field(default=None)

    def __post_init__(self):
        if not isinstance(self.gates, tuple):
            object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 0:
            raise CircuitError("n_qubits must be non-negative")
        measured: set[int] = set()
        max_clbit = -1
        for g in self.gates:
            for q in g.qubits:
                if not 0 <= q < self.n_qubits:
                    raise CircuitError(f"qubit index {q} out of range for {self.n_qubits} qubits")
            if g.kind is GateKind.MEASURE:
                measured.add(g.qubits[0])
                max_clbit = max(max_clbit, g.clbit if g.clbit is not None else -1)
            elif g.kind is not GateKind.BARRIER and measured.intersection(g.qubits):
                raise CircuitError(f"{g!r} follows a measurement on the same qubit")
        if self.n_clbits is None:
            object.__setattr__(self, "n_clbits", max(self.n_qubits, max_clbit + 1))
        elif max_clbit >= self.n_clbits:
            raise CircuitError(f"clbit {max_clbit} out of range for {self.n_clbits} clbits")

    @property
    def measured_qubits(self) -> frozenset[int]:
        return frozenset(g.qubits[0] for g in self.gates if g.kind is GateKind.MEASURE)

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    def append(self, *gates: Gate) -> QuantumCircuit:
        return replace(self, gates=self.gates + gates)

    def without(self, *kinds: GateKind) -> QuantumCircuit:
        return replace(self, gates=tuple(g for g in self.gates if g.kind not in kinds))

    def widened(self, n_qubits: int) -> QuantumCircuit:
        if n_qubits < self.n_qubits:
            raise CircuitError("cannot narrow a circuit")
        return QuantumCircuit(n_qubits, self.gates, max(self.n_clbits, n_qubits))

    def with_measure_all(self) -> QuantumCircuit:
        """Measure every qubit into the same-index clbit when nothing is measured yet."""
        if self.measured_qubits:
            return self
        return self.append(*(measure(q) for q in range(self.n_qubits)))
