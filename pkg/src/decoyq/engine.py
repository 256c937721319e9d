"""Trusted-side execution: bitmap memory, switch ticks, TRNG and the shot executor.

The engine sees only what the provider forwards: the obfuscated circuit (no
decoy annotations) and the sealed input bitmap. Each pulse is mapped to its
channel and sub-slot from the circuit's ASAP schedule, and the bitmap decides
whether the switch on that channel passes or attenuates it.
"""
from __future__ import annotations

import base64
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import simulator as sim
from .backend import BackendDescriptor
from .bitmap import ChannelLayout, Control, InputBitmap, OutputBitmap, channel_index, deserialize, serialize
from .envelope import (Envelope, KeyPair, deserialize_envelope, open_envelope, seal,
                       serialize_envelope)
from .errors import BitmapError, DimensionMismatchError, EngineError, TamperedError
from .ir import Gate, GateKind, QuantumCircuit, delay
from .schedule import schedule_asap


class Setting(str, Enum):
    PASS = "pass"
    ATTENUATE = "attenuate"


@dataclass(frozen=True)
class SwitchModel:
    """RF switch: off-state isolation and on-state insertion loss, both in dB."""

    isolation_db: float = math.inf
    insertion_loss_db: float = 1.5
    scale_pass: bool = False

    def __post_init__(self):
        if not self.isolation_db >= 0 or not self.insertion_loss_db >= 0:
            raise EngineError("switch isolation and insertion loss must be >= 0 dB")

    @property
    def epsilon(self) -> float:
        """Amplitude fraction that leaks through an attenuating switch."""
        if math.isinf(self.isolation_db):
            return 0.0
        return 10.0 ** (-self.isolation_db / 20.0)

    @property
    def pass_gain(self) -> float:
        return 10.0 ** (-self.insertion_loss_db / 20.0) if self.scale_pass else 1.0

    @property
    def ideal(self) -> bool:
        return self.epsilon == 0.0

    @classmethod
    def from_epsilon(cls, eps: float) -> SwitchModel:
        if not 0 <= eps <= 1:
            raise EngineError("epsilon must lie in [0, 1]")
        return cls(math.inf if eps == 0 else -20.0 * math.log10(eps))

    @classmethod
    def parse(cls, text: str) -> SwitchModel:
        return cls() if text.strip().lower() == "ideal" else cls(float(text))


@dataclass(frozen=True)
class NoiseModel:
    """Stochastic Pauli noise: depolarizing per 1q gate, per CX, and per idle sub-slot."""

    p1: float = 0.0
    p2: float = 0.0
    p_idle: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2", "p_idle"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise EngineError(f"noise probability {name} must lie in [0, 1]")

    @property
    def noiseless(self) -> bool:
        return self.p1 == self.p2 == self.p_idle == 0.0

    @classmethod
    def parse(cls, text: str) -> NoiseModel:
        parts = [float(s) for s in text.split(",")]
        if len(parts) != 3:
            raise EngineError("noise must be given as p1,p2,p_idle")
        return cls(*parts)


class Trng:
    """Deterministic stand-in for the hardware TRNG: SHA-256 in counter mode."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._key = hashlib.sha256(b"decoyq/trng" + self.seed.to_bytes(16, "little", signed=False)).digest()
        self._counter = 0
        self._buf = b""

    def bytes(self, n: int) -> bytes:
        while len(self._buf) < n:
            self._buf += hashlib.sha256(self._key + self._counter.to_bytes(8, "little")).digest()
            self._counter += 1
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    __call__ = bytes

    def bits(self, n: int) -> np.ndarray:
        raw = np.frombuffer(self.bytes(-(-n // 8)), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[:n].astype(bool)


ZEROIZED = "ZEROIZED"


class HardwareSecurityEngine:
    """Input bitmap memory plus the per-sub-slot switch state machine."""

    def __init__(self, backend: BackendDescriptor, keys: KeyPair):
        self.backend = backend
        self.layout = ChannelLayout.for_backend(backend)
        self._keys = keys
        self.bitmap_memory: InputBitmap | str | None = None
        self.user_public: KeyPair | None = None
        self.session: bytes | None = None
        self.tick_index = 0
        self.tampered = False

    def __repr__(self):
        state = "tampered" if self.tampered else ("loaded" if self.loaded else "empty")
        return f"HardwareSecurityEngine({self.backend.name}, {state}, tick={self.tick_index})"

    @property
    def loaded(self) -> bool:
        return isinstance(self.bitmap_memory, InputBitmap)

    def _check(self) -> None:
        if self.tampered:
            raise TamperedError("engine was zeroized after a tamper event")

    def load_input_bitmap(self, envelope: Envelope, user_public: KeyPair) -> None:
        """Decrypt, verify and store an input bitmap. Memory is untouched on failure."""
        self._check()
        plaintext = open_envelope(envelope, self._keys, user_public)
        try:
            bitmap = deserialize(plaintext)
        except BitmapError as exc:
            raise EngineError(f"sealed payload is not a bitmap: {exc}") from exc
        if not isinstance(bitmap, InputBitmap):
            raise EngineError("sealed payload is not an input bitmap")
        if bitmap.m != self.layout.m:
            raise DimensionMismatchError(
                f"bitmap has {bitmap.m} channel rows, backend has {self.layout.m} channels")
        self.bitmap_memory = bitmap
        self.user_public = user_public
        self.session = hashlib.sha256(envelope.kem_ciphertext).digest()
        self.tick_index = 0

    def tick(self, sub_slot: int, final_layer: bool = False, trng: Trng | None = None):
        """Switch settings for every channel during ``sub_slot``.

        Returns a tuple of :class:`Setting` in channel order. In the final
        randomize-output layer it returns ``(settings, drive_bits)`` where
        ``drive_bits[q]`` is the TRNG bit that decided drive channel ``q``.
        """
        self._check()
        bitmap = self.bitmap_memory
        if not isinstance(bitmap, InputBitmap):
            raise EngineError("no input bitmap loaded")
        if not 0 <= sub_slot < bitmap.n:
            raise EngineError(f"sub-slot {sub_slot} out of range 0..{bitmap.n - 1}")
        self.tick_index = sub_slot + 1
        if not final_layer:
            return tuple(Setting.ATTENUATE if b else Setting.PASS for b in bitmap.bits[:, sub_slot])
        if trng is None:
            raise EngineError("final layer needs a TRNG")
        drive = trng.bits(self.layout.n_qubits)
        settings = tuple(Setting.PASS if b else Setting.ATTENUATE for b in drive)
        settings += (Setting.ATTENUATE,) * len(self.layout.couplings)
        return settings, drive

    def tamper_event(self) -> None:
        self.bitmap_memory = ZEROIZED
        self.session = None
        self.user_public = None
        self.tampered = True

    def seal_output(self, bitmap: OutputBitmap, rng) -> Envelope:
        self._check()
        if self.user_public is None:
            raise EngineError("no user key on record")
        return seal(serialize(bitmap), self.user_public, self._keys, rng)


def effective_gate(gate: Gate, setting: Setting, switch: SwitchModel,
                   duration: int = 160) -> tuple[Gate, ...]:
    """What actually reaches the qubits for a pulse gate behind a switch.

    ``duration`` (dt) sizes the DELAY that replaces a fully blocked pulse.
    """
    if gate.kind not in (GateKind.X, GateKind.SX, GateKind.CX):
        raise EngineError(f"{gate.kind.value} is not a switched pulse")
    if setting is Setting.PASS:
        if switch.scale_pass and gate.kind is not GateKind.CX:
            angle = math.pi if gate.kind is GateKind.X else math.pi / 2
            return (Gate(GateKind.RX, gate.qubits, angle=angle * switch.pass_gain),)
        return (gate,)
    eps = switch.epsilon
    if eps == 0.0:
        return tuple(delay(duration, q) for q in gate.qubits)
    if gate.kind is GateKind.X:
        return (Gate(GateKind.RX, gate.qubits, angle=eps * math.pi),)
    if gate.kind is GateKind.SX:
        return (Gate(GateKind.RX, gate.qubits, angle=eps * math.pi / 2),)
    return (Gate(GateKind.RZX, gate.qubits, angle=eps * math.pi / 2),)


# Compiled programs ----------------------------------------------------------

_IDLE, _GATE1, _GATE2 = 0, 1, 2


@dataclass
class _Op:
    matrix: np.ndarray | None
    qubits: tuple[int, ...]
    noise: int  # _IDLE, _GATE1 or _GATE2
    weight: float = 1.0  # idle sub-slots covered


@dataclass
class _Program:
    n_qubits: int
    ops: list[_Op]
    final: list[int]  # qubits carrying a final-layer X
    measured_mask: int
    sub_slots: int


def _depolarizing_after(p: float, k: float) -> float:
    """Error probability of ``k`` chained single-qubit depolarizing steps."""
    if p == 0 or k <= 0:
        return 0.0
    return 0.75 * (1.0 - (1.0 - 4.0 * p / 3.0) ** k)


def compile_program(circuit: QuantumCircuit, engine: HardwareSecurityEngine,
                    switch: SwitchModel) -> _Program:
    """Map every pulse to its channel/sub-slot and fold in the engine's settings."""
    engine._check()
    bitmap = engine.bitmap_memory
    if not isinstance(bitmap, InputBitmap):
        raise EngineError("no input bitmap loaded")
    backend = engine.backend
    if circuit.n_qubits != backend.n_qubits:
        raise DimensionMismatchError(
            f"circuit has {circuit.n_qubits} qubits, backend {backend.name} has {backend.n_qubits}")
    sub = backend.sq_dur
    sched = schedule_asap(circuit, backend, validate=False)
    if sched.duration != bitmap.n * sub:
        raise DimensionMismatchError(
            f"circuit spans {sched.duration / sub:g} sub-slots, bitmap has {bitmap.n} columns")
    final_col = bitmap.n - 1 if bitmap.randomize_output else None
    settings = [engine.tick(j) for j in range(bitmap.n if final_col is None else final_col)]
    ops: list[_Op] = []
    final: list[int] = []
    for g, start, dur in sched.timed():
        k = g.kind
        if k in (GateKind.BARRIER, GateKind.MEASURE):
            continue
        if k is GateKind.RZ:
            ops.append(_Op(sim.gate_matrix(g), g.qubits, _IDLE, 0.0))
            continue
        if k is GateKind.DELAY:
            ops.append(_Op(None, g.qubits, _IDLE, dur / sub))
            continue
        if k not in (GateKind.X, GateKind.SX, GateKind.CX):
            raise EngineError(f"unexpected {k.value} in provider circuit")
        if start % sub:
            raise DimensionMismatchError(f"pulse at {start}dt is off the sub-slot grid")
        col = start // sub
        if col == final_col:
            if k is not GateKind.X:
                raise DimensionMismatchError("final layer may only hold X gates")
            final.append(g.qubits[0])
            continue
        if k is GateKind.CX:
            row = channel_index(engine.layout, Control(*g.qubits))
        else:
            row = g.qubits[0]
        span = max(1, -(-dur // sub))
        cols = range(col, min(col + span, len(settings)))
        states = {settings[j][row] for j in cols}
        if len(states) != 1:
            raise DimensionMismatchError(f"switch setting changes inside {g!r}")
        setting = states.pop()
        for eg in effective_gate(g, setting, switch, dur):
            if eg.kind is GateKind.DELAY:
                ops.append(_Op(None, eg.qubits, _IDLE, dur / sub))
            elif setting is Setting.ATTENUATE:
                ops.append(_Op(sim.gate_matrix(eg), eg.qubits, _IDLE, dur / sub))
            else:
                ops.append(_Op(sim.gate_matrix(eg), eg.qubits, _GATE2 if len(eg.qubits) == 2 else _GATE1))
    if len(set(final)) != len(final):
        raise DimensionMismatchError("two final-layer X gates on one qubit")
    measured = sim.measured_or_all(circuit)
    return _Program(circuit.n_qubits, _merge_idle(ops), sorted(final), sum(1 << q for q in measured), bitmap.n)


def _merge_idle(ops: list[_Op]) -> list[_Op]:
    """Fold runs of pure idling on a qubit into one op; chained depolarizing composes exactly."""
    pending: dict[int, float] = {}
    out: list[_Op] = []

    def flush(q):
        w = pending.pop(q, 0.0)
        if w:
            out.append(_Op(None, (q,), _IDLE, w))

    for op in ops:
        if op.matrix is None and op.noise == _IDLE:
            for q in op.qubits:
                pending[q] = pending.get(q, 0.0) + op.weight
            continue
        for q in op.qubits:
            flush(q)
        out.append(op)
    for q in sorted(pending):
        flush(q)
    return out


def _apply_noise(state, op: _Op, noise: NoiseModel, rng: np.random.Generator, n: int) -> None:
    batch = state.shape[1]
    if op.noise == _GATE2:
        if noise.p2 == 0:
            return
        rows = np.flatnonzero(rng.random(batch) < noise.p2)
        if rows.size:
            paulis = rng.integers(1, 16, size=rows.size)
            sim.apply_pauli_rows(state, rows, paulis // 4, op.qubits[0], n)
            sim.apply_pauli_rows(state, rows, paulis % 4, op.qubits[1], n)
        return
    p = noise.p1 if op.noise == _GATE1 else _depolarizing_after(noise.p_idle, op.weight)
    if p == 0:
        return
    for q in op.qubits:
        rows = np.flatnonzero(rng.random(batch) < p)
        if rows.size:
            sim.apply_pauli_rows(state, rows, rng.integers(1, 4, size=rows.size), q, n)


def _run_ops(state, program: _Program, noise: NoiseModel | None, rng) -> np.ndarray:
    n = program.n_qubits
    for op in program.ops:
        if op.matrix is not None:
            if len(op.qubits) == 1:
                state = sim.apply_1q(state, op.matrix, op.qubits[0], n)
            else:
                state = sim.apply_2q(state, op.matrix, op.qubits[0], op.qubits[1], n)
        if noise is not None:
            _apply_noise(state, op, noise, rng, n)
    return state


def _final_ops(state, program: _Program, masks: np.ndarray, switch: SwitchModel,
               noise: NoiseModel | None, rng) -> np.ndarray:
    """Apply the final layer row by row: X where the mask bit is set, leakage elsewhere."""
    n = program.n_qubits
    x_op = effective_gate(Gate(GateKind.X, (0,)), Setting.PASS, switch)[0]
    x_mat = sim.gate_matrix(x_op)
    leak = None if switch.ideal else sim.rx_matrix(switch.epsilon * math.pi)
    for q in program.final:
        on = ((masks >> q) & 1).astype(bool)
        if on.all():
            state = sim.apply_1q(state, x_mat, q, n)
        elif on.any():
            state[:, on] = sim.apply_1q(state[:, on], x_mat, q, n)
        if leak is not None and (~on).any():
            state[:, ~on] = sim.apply_1q(state[:, ~on], leak, q, n)
        if noise is not None:
            for sel, p in ((on, noise.p1), (~on, noise.p_idle)):
                rows = np.flatnonzero(sel & (rng.random(state.shape[1]) < p)) if p else ()
                if len(rows):
                    sim.apply_pauli_rows(state, rows, rng.integers(1, 4, size=len(rows)), q, n)
    return state


def exact_distributions(circuit: QuantumCircuit, engine: HardwareSecurityEngine,
                        switch: SwitchModel, masks) -> np.ndarray:
    """Noiseless raw-outcome probabilities, one row per final-layer mask.

    Columns are basis integers (qubit q at bit q); unmeasured qubits read 0.
    """
    program = compile_program(circuit, engine, switch)
    masks = np.asarray(masks, dtype=np.int64).reshape(-1)
    pre = _run_ops(sim.zero_state(program.n_qubits, 1), program, None, None)
    state = _final_ops(np.repeat(pre, masks.size, axis=1), program, masks, switch, None, None)
    probs = np.abs(state.T) ** 2
    idx = np.arange(1 << program.n_qubits) & program.measured_mask
    out = np.zeros_like(probs)
    np.add.at(out, (slice(None), idx), probs)
    return out


def exact_distribution(circuit: QuantumCircuit, engine: HardwareSecurityEngine,
                       switch: SwitchModel, mask: int = 0) -> np.ndarray:
    return exact_distributions(circuit, engine, switch, [mask])[0]


def final_layer_masks(program: _Program, engine: HardwareSecurityEngine, shots: int,
                      trng: Trng) -> tuple[np.ndarray, np.ndarray]:
    """Tick the final layer once per shot. Returns (x-applied masks, output bitmap rows)."""
    rows = np.zeros((shots, program.n_qubits), dtype=bool)
    has_final = np.zeros(program.n_qubits, dtype=bool)
    has_final[program.final] = True
    for s in range(shots):
        _, drive = engine.tick(program.sub_slots - 1, final_layer=True, trng=trng)
        rows[s] = drive & has_final
    weights = 1 << np.arange(program.n_qubits, dtype=np.int64)
    return rows.astype(np.int64) @ weights, rows


@dataclass
class JobResult:
    shots: list[str]
    output_envelope: Envelope | None
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        env = self.output_envelope
        return json.dumps({
            "shots": self.shots,
            "output_envelope": None if env is None else base64.b64encode(serialize_envelope(env)).decode(),
            "metadata": self.metadata,
        }, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> JobResult:
        data = json.loads(text)
        env = data.get("output_envelope")
        return cls(list(data["shots"]),
                   None if env is None else deserialize_envelope(base64.b64decode(env)),
                   data.get("metadata", {}))


def execute_job(circuit: QuantumCircuit, engine: HardwareSecurityEngine, shots: int,
                switch: SwitchModel | None = None, noise: NoiseModel | None = None,
                trng: Trng | int = 0, seed: int = 0, batch: int = 4096) -> JobResult:
    """Run ``shots`` shots of the provider-visible circuit behind the switches.

    Noiseless jobs reuse one exact state; noisy jobs run one Pauli trajectory per
    shot, ``batch`` trajectories at a time.
    """
    if shots < 1:
        raise EngineError("shots must be >= 1")
    switch = switch or SwitchModel()
    noise = noise if noise is not None and not noise.noiseless else None
    trng = trng if isinstance(trng, Trng) else Trng(trng)
    program = compile_program(circuit, engine, switch)
    n = program.n_qubits
    bitmap = engine.bitmap_memory
    if bitmap.randomize_output:
        masks, rows = final_layer_masks(program, engine, shots, trng)
    else:
        masks, rows = np.zeros(shots, dtype=np.int64), None
    rng = np.random.default_rng(seed)
    outcomes = np.empty(shots, dtype=np.int64)
    if noise is None:
        pre = _run_ops(sim.zero_state(n, 1), program, None, None)
        if switch.ideal and not switch.scale_pass:
            # Final X gates just permute basis states, so sample once and XOR.
            probs = np.abs(pre[:, 0]) ** 2
            draws = sim.sample_indices(np.broadcast_to(probs, (shots, probs.size)), rng)
            outcomes[:] = draws ^ masks
        else:
            for mask in np.unique(masks):
                sel = np.flatnonzero(masks == mask)
                st = _final_ops(pre.copy(), program, np.array([mask]), switch, None, None)
                probs = np.abs(st[:, 0]) ** 2
                outcomes[sel] = sim.sample_indices(np.broadcast_to(probs, (sel.size, probs.size)), rng)
    else:
        for lo in range(0, shots, batch):
            hi = min(shots, lo + batch)
            state = _run_ops(sim.zero_state(n, hi - lo), program, noise, rng)
            state = _final_ops(state, program, masks[lo:hi], switch, noise, rng)
            outcomes[lo:hi] = sim.sample_indices(np.abs(state.T) ** 2, rng)
    outcomes &= program.measured_mask
    strings = [format(int(v), f"0{n}b") for v in outcomes]
    envelope = None
    if rows is not None:
        envelope = engine.seal_output(OutputBitmap(shots, n, rows), trng)
    meta = {
        "shots": shots, "seed": int(seed), "trng_seed": trng.seed,
        "epsilon": switch.epsilon, "isolation_db": None if switch.ideal else switch.isolation_db,
        "noise": None if noise is None else [noise.p1, noise.p2, noise.p_idle],
        "randomize_output": bool(bitmap.randomize_output), "backend": engine.backend.name,
    }
    return JobResult(strings, envelope, meta)
