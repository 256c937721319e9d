"""Backend descriptors: topology, gate durations and the dt grid."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ValidationError
from .ir import GateKind, QuantumCircuit

ALLOWED_BASIS = frozenset({"cx", "i", "rz", "sx", "x"})
_KIND_TO_BASIS = {GateKind.CX: "cx", GateKind.RZ: "rz", GateKind.SX: "sx", GateKind.X: "x"}
_ALWAYS_ALLOWED = frozenset({GateKind.DELAY, GateKind.BARRIER, GateKind.MEASURE})


def pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    n_qubits: int
    couplings: tuple[tuple[int, int], ...]
    sq_dur: int
    cx_dur: dict[tuple[int, int], int]
    dt_ns: float
    basis_gates: frozenset[str] = field(default=ALLOWED_BASIS)

    def __post_init__(self):
        couplings = tuple(sorted({pair(a, b) for a, b in self.couplings}))
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "cx_dur", {pair(*k): int(v) for k, v in self.cx_dur.items()})
        object.__setattr__(self, "basis_gates", frozenset(g.lower() for g in self.basis_gates))
        if self.n_qubits <= 0:
            raise ValidationError("backend needs at least one qubit")
        for a, b in couplings:
            if a == b:
                raise ValidationError(f"self-coupling ({a},{b})")
            if not (0 <= a < self.n_qubits and 0 <= b < self.n_qubits):
                raise ValidationError(f"coupling ({a},{b}) outside {self.n_qubits} qubits")
            if (a, b) not in self.cx_dur:
                raise ValidationError(f"no CX duration for coupling ({a},{b})")
        if set(self.cx_dur) - set(couplings):
            raise ValidationError("cx_dur lists pairs that are not couplings")
        if self.sq_dur <= 0 or self.dt_ns <= 0:
            raise ValidationError("sq_dur and dt_ns must be positive")
        if any(d <= 0 for d in self.cx_dur.values()):
            raise ValidationError("CX durations must be positive")
        if not self.basis_gates <= ALLOWED_BASIS:
            raise ValidationError(f"unsupported basis gates {sorted(self.basis_gates - ALLOWED_BASIS)}")

    def __hash__(self):
        return hash((self.name, self.n_qubits, self.couplings, self.sq_dur))

    def is_coupled(self, a: int, b: int) -> bool:
        return pair(a, b) in self.cx_dur

    def cx_duration(self, a: int, b: int) -> int:
        return self.cx_dur[pair(a, b)]

    @property
    def n_channels(self) -> int:
        return self.n_qubits + len(self.couplings)

    @classmethod
    def from_dict(cls, data: dict) -> BackendDescriptor:
        try:
            cx_dur = {}
            for key, value in data["cx_dur"].items():
                a, b = (int(s) for s in key.split("-"))
                cx_dur[(a, b)] = value
            return cls(
                name=data["name"],
                n_qubits=int(data["n_qubits"]),
                couplings=tuple(tuple(c) for c in data["couplings"]),
                sq_dur=int(data["sq_dur"]),
                cx_dur=cx_dur,
                dt_ns=float(data["dt_ns"]),
                basis_gates=frozenset(data.get("basis_gates", ALLOWED_BASIS)),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ValidationError(f"malformed backend descriptor: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_qubits": self.n_qubits,
            "couplings": [list(c) for c in self.couplings],
            "sq_dur": self.sq_dur,
            "cx_dur": {f"{a}-{b}": d for (a, b), d in sorted(self.cx_dur.items())},
            "dt_ns": self.dt_ns,
            "basis_gates": sorted(g.upper() for g in self.basis_gates),
        }


def load_backend(path: str | Path) -> BackendDescriptor:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read backend file {path}: {exc.strerror}") from exc
    return BackendDescriptor.from_dict(json.loads(text))


def sample_backend(name: str = "ibm_perth") -> BackendDescriptor:
    data = resources.files("decoyq.data.backends").joinpath(f"{name}.json").read_text()
    return BackendDescriptor.from_dict(json.loads(data))


def validate_against_backend(circuit: QuantumCircuit, backend: BackendDescriptor) -> None:
    """Raise :class:`ValidationError` unless ``circuit`` can run on ``backend`` as written."""
    if circuit.n_qubits > backend.n_qubits:
        raise ValidationError(
            f"circuit uses {circuit.n_qubits} qubits, backend {backend.name} has {backend.n_qubits}")
    for i, g in enumerate(circuit.gates):
        if g.kind in _ALWAYS_ALLOWED:
            continue
        basis = _KIND_TO_BASIS.get(g.kind)
        if basis is None or basis not in backend.basis_gates:
            raise ValidationError(f"gate #{i} '{g.kind.value}' is not in the backend basis")
        if g.kind is GateKind.CX and not backend.is_coupled(*g.qubits):
            raise ValidationError(f"gate #{i} cx on uncoupled pair {g.qubits}")
