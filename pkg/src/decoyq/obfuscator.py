"""Decoy pulse insertion.

Pipeline: schedule -> split into CX/SQ slots -> optional padding slots ->
fill every idle sub-slot with decoys -> input bitmap -> optional
randomize-output layer -> optional decoy-to-identity conversion.

Random draws come from one generator per concern, derived from the config
seed. Decoy draws are consumed slot by slot; inside a CX slot the couplings
are visited in sorted order first (decoy CX coin, then direction coin), then
qubits ascending and sub-slots ascending (X/SX coin).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .backend import BackendDescriptor, validate_against_backend
from .bitmap import ChannelLayout, Control, Drive, InputBitmap, channel_index
from .errors import ObfuscationError
from .ir import Gate, GateKind, Origin, QuantumCircuit, cx, delay, sx, x
from .schedule import ScheduledCircuit, schedule_asap


class Level(str, Enum):
    QUARTER = "quarter"
    HALF = "half"
    MAX = "max"


_DIVISOR = {Level.QUARTER: 4, Level.HALF: 2, Level.MAX: 1}


class SlotKind(str, Enum):
    SQ = "sq"
    CX = "cx"


@dataclass(frozen=True)
class ObfuscationConfig:
    level: Level = Level.MAX
    randomize_output: bool = False
    seed: int = 0
    padding_slots: int = 0
    identity_conversion: bool = False

    def __post_init__(self):
        object.__setattr__(self, "level", Level(self.level))
        if self.padding_slots < 0:
            raise ObfuscationError("padding_slots must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ObfuscationError("seed must be a 64-bit unsigned value")

    @classmethod
    def from_dict(cls, data: dict) -> ObfuscationConfig:
        return cls(level=Level(data.get("level", "max")),
                   randomize_output=bool(data.get("randomize_output", False)),
                   seed=int(data.get("seed", 0)),
                   padding_slots=int(data.get("padding_slots", 0)),
                   identity_conversion=bool(data.get("identity_conversion", False)))

    def to_dict(self) -> dict:
        return {"level": self.level.value, "randomize_output": self.randomize_output,
                "seed": self.seed, "padding_slots": self.padding_slots,
                "identity_conversion": self.identity_conversion}


@dataclass(frozen=True)
class SlotPlan:
    max_cnot_dur: int
    ceil_max_cnot_dur: int
    sq_slot_dur: int
    sub_slot: int

    @property
    def cx_subslots(self) -> int:
        return self.ceil_max_cnot_dur // self.sub_slot

    @property
    def sq_subslots(self) -> int:
        return self.sq_slot_dur // self.sub_slot


def compute_slot_plan(backend: BackendDescriptor, level: Level | str) -> SlotPlan:
    if not backend.couplings:
        raise ObfuscationError(f"backend {backend.name} has no CX couplings")
    level = Level(level)
    sq = backend.sq_dur
    longest = max(backend.cx_dur.values())
    ceil_cx = -(-longest // (2 * sq)) * 2 * sq
    # ceil_cx / divisor rounded up to whole sub-slots
    sq_slot = -(-ceil_cx // (_DIVISOR[level] * sq)) * sq
    return SlotPlan(longest, ceil_cx, sq_slot, sq)


@dataclass
class Slot:
    kind: SlotKind
    length: int  # sub-slots
    lanes: list[list[Gate]]
    padding: bool = False


@dataclass
class SlottedCircuit:
    plan: SlotPlan
    n_qubits: int
    slots: list[Slot]
    measures: tuple[Gate, ...] = ()
    n_clbits: int | None = None

    @property
    def kinds(self) -> list[SlotKind]:
        return [s.kind for s in self.slots]

    @property
    def n_subslots(self) -> int:
        return sum(s.length for s in self.slots)

    def offsets(self) -> list[int]:
        out, col = [], 0
        for s in self.slots:
            out.append(col)
            col += s.length
        return out


@dataclass
class DecoyMarks:
    layout: ChannelLayout
    bits: np.ndarray = field(repr=False)

    def mark(self, channel, start: int, span: int = 1) -> None:
        row = channel_index(self.layout, channel)
        if self.bits[row, start:start + span].any():
            raise ObfuscationError(f"decoy overlaps another decoy on {channel!r} at {start}")
        self.bits[row, start:start + span] = True


def _placeholder(subslots: int, sub_slot: int) -> Gate:
    return delay(subslots * sub_slot, 0, Origin.DECOY)


def _is_placeholder(g: Gate) -> bool:
    return g.kind is GateKind.DELAY and g.origin is Origin.DECOY


def _span(g: Gate, slot: Slot, sub_slot: int) -> int:
    if g.kind in (GateKind.X, GateKind.SX):
        return 1
    if g.kind is GateKind.DELAY:
        return g.duration // sub_slot
    if g.kind is GateKind.CX:
        return slot.length
    return 0


def lane_cells(lane: list[Gate], slot: Slot, sub_slot: int):
    """Yield ``(gate, offset, span)`` for the lane; zero-span gates share the next offset."""
    col = 0
    for g in lane:
        span = _span(g, slot, sub_slot)
        yield g, col, span
        col += span


def _with_qubit(g: Gate, q: int) -> Gate:
    return replace(g, qubits=(q,))


def split_into_slots(sched: ScheduledCircuit, plan: SlotPlan) -> SlottedCircuit:
    """Partition a scheduled circuit into SQ regions and CX layers, padded to plan lengths.

    Single-qubit gates are placed in the region that directly follows the last CX
    on their qubit; each CX goes to the earliest layer after both operands' regions.
    A region becomes one or more SQ slots only if it holds at least one gate (RZ and
    the final measurements count), so back-to-back CX layers stay adjacent.
    """
    circuit, backend = sched.circuit, sched.backend
    n = backend.n_qubits
    sub = plan.sub_slot
    next_layer = [0] * n
    regions: dict[int, list[list[Gate]]] = {}
    layers: dict[int, list[Gate]] = {}
    measures = []
    for g in circuit.gates:
        if g.kind is GateKind.BARRIER:
            continue
        if g.kind is GateKind.MEASURE:
            measures.append(g)
        elif g.kind is GateKind.CX:
            a, b = g.qubits
            layer = max(next_layer[a], next_layer[b])
            layers.setdefault(layer, []).append(g)
            next_layer[a] = next_layer[b] = layer + 1
        elif g.kind in (GateKind.X, GateKind.SX, GateKind.RZ, GateKind.DELAY):
            q = g.qubits[0]
            if g.kind is GateKind.DELAY:
                if g.duration == 0:
                    continue
                g = delay(-(-g.duration // sub) * sub, q)
            regions.setdefault(next_layer[q], [[] for _ in range(n)])[q].append(g)
        else:
            raise ObfuscationError(f"cannot slot gate {g!r}")

    n_layers = max(layers, default=-1) + 1
    if measures:
        regions.setdefault(n_layers, [[] for _ in range(n)])
    slots: list[Slot] = []
    for r in range(n_layers + 1):
        if r in regions:
            slots.extend(_sq_slots(regions[r], plan))
        if r < n_layers:
            length = plan.cx_subslots
            lanes = [[_placeholder(length, sub)] for _ in range(n)]
            for g in layers[r]:
                for q in g.qubits:
                    lanes[q] = [g]
            slots.append(Slot(SlotKind.CX, length, lanes))
    return SlottedCircuit(plan, n, slots, tuple(measures), circuit.n_clbits)


def _sq_slots(ops_per_qubit: list[list[Gate]], plan: SlotPlan) -> list[Slot]:
    sub, cap = plan.sub_slot, plan.sq_subslots
    need = max(sum(_span(g, None, sub) for g in ops if g.kind is not GateKind.CX)
               for ops in ops_per_qubit)
    count = max(1, -(-need // cap))
    slots = [Slot(SlotKind.SQ, cap, [[] for _ in ops_per_qubit]) for _ in range(count)]
    for q, ops in enumerate(ops_per_qubit):
        idx, used = 0, 0
        for g in ops:
            span = _span(g, None, sub)
            while span:
                if used == cap:
                    idx, used = idx + 1, 0
                take = min(span, cap - used)
                slots[idx].lanes[q].append(delay(take * sub, q) if g.kind is GateKind.DELAY else g)
                used += take
                span -= take
            if g.kind is GateKind.RZ:
                slots[idx].lanes[q].append(g)
        for i, slot in enumerate(slots):
            filled = sum(_span(g, slot, sub) for g in slot.lanes[q])
            if filled < cap:
                slot.lanes[q].append(_placeholder(cap - filled, sub))
    return slots


def insert_padding_slots(slotted: SlottedCircuit, count: int,
                         rng: np.random.Generator) -> SlottedCircuit:
    """Insert ``count`` all-decoy slots of random kind at random slot boundaries."""
    plan, n = slotted.plan, slotted.n_qubits
    slots = list(slotted.slots)
    for _ in range(count):
        kind = SlotKind.CX if rng.integers(2) else SlotKind.SQ
        length = plan.cx_subslots if kind is SlotKind.CX else plan.sq_subslots
        pos = int(rng.integers(len(slots) + 1))
        lanes = [[_placeholder(length, plan.sub_slot)] for _ in range(n)]
        slots.insert(pos, Slot(kind, length, lanes, padding=True))
    return replace(slotted, slots=slots)


def insert_decoys(slotted: SlottedCircuit, backend: BackendDescriptor,
                  rng: np.random.Generator) -> tuple[SlottedCircuit, DecoyMarks]:
    plan, n = slotted.plan, slotted.n_qubits
    sub = plan.sub_slot
    layout = ChannelLayout.for_backend(backend)
    marks = DecoyMarks(layout, np.zeros((layout.m, slotted.n_subslots), dtype=bool))
    new_slots = []
    for slot, offset in zip(slotted.slots, slotted.offsets()):
        lanes = [list(lane) for lane in slot.lanes]
        if slot.kind is SlotKind.CX:
            _decoy_cx(lanes, slot, backend, rng)
        for q in range(n):
            filled = []
            for g in lanes[q]:
                if _is_placeholder(g):
                    for _ in range(g.duration // sub):
                        filled.append(x(q, Origin.DECOY) if rng.integers(2) else sx(q, Origin.DECOY))
                else:
                    filled.append(g)
            lanes[q] = filled
        new_slot = replace(slot, lanes=lanes)
        _mark_slot(marks, new_slot, offset, sub)
        new_slots.append(new_slot)
    return replace(slotted, slots=new_slots), marks


def _decoy_cx(lanes, slot: Slot, backend: BackendDescriptor, rng: np.random.Generator) -> None:
    def free(q):
        return len(lanes[q]) == 1 and _is_placeholder(lanes[q][0])

    placed = any(g.kind is GateKind.CX for lane in lanes for g in lane)
    for a, b in backend.couplings:
        if free(a) and free(b) and rng.integers(2):
            control, target = (b, a) if rng.integers(2) else (a, b)
            g = cx(control, target, Origin.DECOY)
            lanes[a] = [g]
            lanes[b] = [g]
            placed = True
    if slot.padding and not placed:
        options = [c for c in backend.couplings if free(c[0]) and free(c[1])]
        if options:
            a, b = options[int(rng.integers(len(options)))]
            g = cx(a, b, Origin.DECOY)
            lanes[a] = [g]
            lanes[b] = [g]


def _mark_slot(marks: DecoyMarks, slot: Slot, offset: int, sub: int) -> None:
    seen = set()
    for q, lane in enumerate(slot.lanes):
        for g, col, span in lane_cells(lane, slot, sub):
            if not g.decoy:
                continue
            if g.kind is GateKind.CX:
                if id(g) in seen:
                    continue
                seen.add(id(g))
                a, b = g.qubits
                for ch in (Drive(a), Drive(b), Control(a, b)):
                    marks.mark(ch, offset + col, span)
            elif span:
                marks.mark(Drive(q), offset + col, span)


def generate_input_bitmap(marks: DecoyMarks) -> InputBitmap:
    m, n = marks.bits.shape
    return InputBitmap(m, n, marks.bits.copy())


def slots_to_circuit(slotted: SlottedCircuit, backend: BackendDescriptor) -> QuantumCircuit:
    """Lay the slots out as a flat gate list whose ASAP schedule reproduces the slot grid."""
    sub = slotted.plan.sub_slot
    gates: list[Gate] = []
    for slot in slotted.slots:
        tails = []
        emitted = set()
        for q, lane in enumerate(slot.lanes):
            cut = next((i for i, g in enumerate(lane) if g.kind is GateKind.CX), len(lane))
            gates.extend(_with_qubit(g, q) if g.kind is GateKind.DELAY else g for g in lane[:cut])
            tails.append(lane[cut + 1:])
        for lane in slot.lanes:
            for g in lane:
                if g.kind is GateKind.CX and id(g) not in emitted:
                    emitted.add(id(g))
                    gates.append(g)
                    pad = slot.length * sub - backend.cx_duration(*g.qubits)
                    if pad:
                        gates.extend(delay(pad, q, g.origin) for q in g.qubits)
        for tail in tails:
            gates.extend(tail)
    gates.extend(slotted.measures)
    return QuantumCircuit(slotted.n_qubits, tuple(gates), max(slotted.n_clbits or 0, slotted.n_qubits))


def append_randomize_output_layer(circuit: QuantumCircuit) -> QuantumCircuit:
    """Put one RANDOMIZE_OUTPUT X on every measured qubit right before its measurement."""
    gates, done = [], set()
    for g in circuit.gates:
        if g.kind is GateKind.MEASURE and g.qubits[0] not in done:
            done.add(g.qubits[0])
            gates.append(x(g.qubits[0], Origin.RANDOMIZE_OUTPUT))
        gates.append(g)
    return replace(circuit, gates=tuple(gates))


def convert_decoys_to_identity(circuit: QuantumCircuit, bitmap: InputBitmap,
                               backend: BackendDescriptor) -> InputBitmap:
    """Clear bitmap bits of decoy runs XX or SX^4 that compose to the identity.

    A decoy is a single-qubit pulse whose drive bit is 1. Runs are broken by any
    other gate on the qubit, RZ included; matching is greedy, left to right.
    """
    sched = schedule_asap(circuit, backend, validate=False)
    if sched.duration != bitmap.n * backend.sq_dur:
        raise ObfuscationError("bitmap width does not match circuit duration")
    bits = bitmap.bits.copy()
    runs: list[list[tuple[GateKind, int]]] = [[] for _ in range(circuit.n_qubits)]
    per_qubit: list[list[list[tuple[GateKind, int]]]] = [[] for _ in range(circuit.n_qubits)]
    for g, start, _ in sched.timed():
        if g.kind is GateKind.BARRIER:
            continue
        col = start // backend.sq_dur
        for q in g.qubits:
            run = runs[q]
            is_decoy = g.kind in (GateKind.X, GateKind.SX) and bits[q, col]
            if is_decoy and (not run or run[-1][1] + 1 == col):
                run.append((g.kind, col))
                continue
            if run:
                per_qubit[q].append(run)
            runs[q] = [(g.kind, col)] if is_decoy else []
    for q, run in enumerate(runs):
        if run:
            per_qubit[q].append(run)
    for q, q_runs in enumerate(per_qubit):
        for run in q_runs:
            i = 0
            while i < len(run):
                kinds = [k for k, _ in run[i:i + 4]]
                if kinds == [GateKind.SX] * 4:
                    width = 4
                elif kinds[:2] == [GateKind.X] * 2:
                    width = 2
                else:
                    i += 1
                    continue
                for _, col in run[i:i + width]:
                    bits[q, col] = False
                i += width
    return bitmap.with_bits(bits)


@dataclass
class ObfuscationResult:
    circuit: QuantumCircuit
    bitmap: InputBitmap
    slotted: SlottedCircuit
    plan: SlotPlan
    config: ObfuscationConfig


def _generators(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    padding, decoys = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(padding), np.random.default_rng(decoys)


def obfuscate_detailed(circuit: QuantumCircuit, backend: BackendDescriptor,
                       config: ObfuscationConfig) -> ObfuscationResult:
    validate_against_backend(circuit, backend)
    circuit = circuit.with_measure_all()
    plan = compute_slot_plan(backend, config.level)
    slotted = split_into_slots(schedule_asap(circuit, backend), plan)
    pad_rng, decoy_rng = _generators(config.seed)
    if config.padding_slots:
        slotted = insert_padding_slots(slotted, config.padding_slots, pad_rng)
    slotted, marks = insert_decoys(slotted, backend, decoy_rng)
    bitmap = generate_input_bitmap(marks)
    out = slots_to_circuit(slotted, backend)
    if config.randomize_output:
        out = append_randomize_output_layer(out)
        bits = np.concatenate([bitmap.bits, np.zeros((bitmap.m, 1), dtype=bool)], axis=1)
        bitmap = InputBitmap(bitmap.m, bitmap.n + 1, bits, randomize_output=True)
    if config.identity_conversion:
        bitmap = convert_decoys_to_identity(out, bitmap, backend)
    return ObfuscationResult(out, bitmap, slotted, plan, config)


def obfuscate(circuit: QuantumCircuit, backend: BackendDescriptor,
              config: ObfuscationConfig) -> tuple[QuantumCircuit, InputBitmap]:
    result = obfuscate_detailed(circuit, backend, config)
    return result.circuit, result.bitmap
