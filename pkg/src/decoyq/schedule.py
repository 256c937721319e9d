"""ASAP scheduling onto the backend's dt grid."""
from __future__ import annotations

from dataclasses import dataclass

from .backend import BackendDescriptor, validate_against_backend
from .ir import Gate, GateKind, QuantumCircuit

# Pulsed gates begin on sub-slot boundaries so that one attenuation bit per
# channel per sub-slot covers every pulse.
_GRID_ALIGNED = frozenset({GateKind.X, GateKind.SX, GateKind.CX})


def gate_duration(gate: Gate, backend: BackendDescriptor) -> int:
    if gate.kind in (GateKind.X, GateKind.SX, GateKind.RX):
        return backend.sq_dur
    if gate.kind in (GateKind.CX, GateKind.RZX):
        return backend.cx_duration(*gate.qubits)
    if gate.kind is GateKind.DELAY:
        return gate.duration
    return 0


@dataclass(frozen=True)
class ScheduledCircuit:
    circuit: QuantumCircuit
    backend: BackendDescriptor
    start_times: tuple[int, ...]
    duration: int

    def durations(self) -> tuple[int, ...]:
        return tuple(gate_duration(g, self.backend) for g in self.circuit.gates)

    def timed(self):
        """Yield ``(gate, start, duration)`` in circuit order."""
        for g, t in zip(self.circuit.gates, self.start_times):
            yield g, t, gate_duration(g, self.backend)


def _ceil_to(t: int, grid: int) -> int:
    return -(-t // grid) * grid


def schedule_asap(circuit: QuantumCircuit, backend: BackendDescriptor,
                  validate: bool = True) -> ScheduledCircuit:
    if validate:
        validate_against_backend(circuit, backend)
    frontier = [0] * circuit.n_qubits
    starts = []
    end = 0
    for g in circuit.gates:
        qs = g.qubits
        t = max((frontier[q] for q in qs), default=0)
        if g.kind is GateKind.BARRIER:
            for q in qs:
                frontier[q] = t
            starts.append(t)
            continue
        if g.kind in _GRID_ALIGNED:
            t = _ceil_to(t, backend.sq_dur)
        d = gate_duration(g, backend)
        if d or g.kind in _GRID_ALIGNED:
            for q in qs:
                frontier[q] = t + d
        starts.append(t)
        end = max(end, t + d)
    return ScheduledCircuit(circuit, backend, tuple(starts), end)


def circuit_duration(sched: ScheduledCircuit) -> int:
    return sched.duration
