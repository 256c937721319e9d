"""Side models: attack complexity, depth increase, power and volume overhead."""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_DOWN, Decimal
from typing import NamedTuple

from .errors import AnalysisError
from .schedule import ScheduledCircuit


@dataclass(frozen=True)
class ComplexityParams:
    n_qubits: int
    n_slot_cx: int
    n_slot_sq: int
    n_subslots: int
    n_subcx_in_slotcx: int
    n_subslots_in_slotcx: int
    randomize_output: bool = True

    def __post_init__(self):
        counts = (self.n_qubits, self.n_slot_cx, self.n_slot_sq, self.n_subslots,
                  self.n_subcx_in_slotcx, self.n_subslots_in_slotcx)
        if any(c < 0 for c in counts):
            raise AnalysisError("complexity counts must be >= 0")
        if self.n_qubits < 1:
            raise AnalysisError("complexity needs at least one qubit")
        if 2 * self.n_subcx_in_slotcx > self.n_qubits:
            raise AnalysisError("more CX gates per slot than qubit pairs")


def attack_complexity_log2(p: ComplexityParams) -> float:
    """log2 of the number of candidate circuits behind one obfuscated circuit.

    A slot factor whose slot count is zero contributes 1 instead of 0.
    """
    total = 0.0
    if p.n_slot_sq:
        total += math.log2(p.n_qubits) + p.n_subslots + math.log2(p.n_slot_sq)
    if p.n_slot_cx:
        c = p.n_subcx_in_slotcx
        # exact integers; math.log2 accepts arbitrarily large ints
        inner = math.log2(2 * c + (p.n_qubits - 2 * c) * 2 ** p.n_subslots_in_slotcx)
        total += inner + math.log2(p.n_slot_cx)
    if p.randomize_output:
        total += p.n_qubits
    return total


def complexity_params_from(result) -> ComplexityParams:
    """Counts from an obfuscation result, as the provider would read them off the circuit."""
    from .ir import GateKind
    from .obfuscator import SlotKind

    slots = result.slotted.slots
    cx_slots = [s for s in slots if s.kind is SlotKind.CX]
    per_slot = [len({id(g) for lane in s.lanes for g in lane if g.kind is GateKind.CX}) for s in cx_slots]
    return ComplexityParams(
        n_qubits=result.slotted.n_qubits,
        n_slot_cx=len(cx_slots),
        n_slot_sq=sum(1 for s in slots if s.kind is SlotKind.SQ),
        n_subslots=result.plan.sq_subslots,
        n_subcx_in_slotcx=max(per_slot, default=0),
        n_subslots_in_slotcx=result.plan.cx_subslots,
        randomize_output=result.config.randomize_output,
    )


def depth_increase_factor(base: ScheduledCircuit | int, obf: ScheduledCircuit | int) -> float:
    b = base if isinstance(base, int) else base.duration
    o = obf if isinstance(obf, int) else obf.duration
    if b <= 0:
        raise AnalysisError("base circuit has zero duration")
    return o / b


@dataclass(frozen=True)
class OverheadParams:
    kem_decap_mw: float = 162.0
    aead_mw: float = 19.52
    per_switch_mw: float = 0.001
    fridge_height_mm: float = 1481.0
    fridge_radius_mm: float = 460.0
    per_switch_mm3: float = 6.5
    logic_mm3: float = 0.0

    def __post_init__(self):
        if any(v < 0 for v in (self.kem_decap_mw, self.aead_mw, self.per_switch_mw,
                               self.per_switch_mm3, self.logic_mm3)):
            raise AnalysisError("overhead parameters must be >= 0")
        if self.fridge_height_mm <= 0 or self.fridge_radius_mm <= 0:
            raise AnalysisError("fridge dimensions must be positive")


def _dec(x: float) -> Decimal:
    return Decimal(repr(x))


def power_overhead_mw(n_switches: int, params: OverheadParams = OverheadParams(),
                      truncate: bool = True) -> float:
    """Decapsulation + AEAD + per-switch power, truncated to two decimals by default."""
    if n_switches < 0:
        raise AnalysisError("switch count must be >= 0")
    total = _dec(params.kem_decap_mw) + _dec(params.aead_mw) + n_switches * _dec(params.per_switch_mw)
    if truncate:
        total = total.quantize(Decimal("0.01"), rounding=ROUND_DOWN)
    return float(total)


def fridge_volume_mm3(params: OverheadParams = OverheadParams()) -> float:
    return math.pi * params.fridge_radius_mm ** 2 * params.fridge_height_mm


def volume_overhead_pct(n_switches: int, params: OverheadParams = OverheadParams()) -> float:
    if n_switches < 0:
        raise AnalysisError("switch count must be >= 0")
    return 100.0 * (params.logic_mm3 + n_switches * params.per_switch_mm3) / fridge_volume_mm3(params)


def switch_count(n_qubits: int, n_couplings: int) -> int:
    return n_qubits + n_couplings


class RoadmapRow(NamedTuple):
    name: str
    qubits: int
    couplings: int
    printed_switches: int


# The 1121-qubit row prints 2242 switches although qubits + couplings = 2307.
ROADMAP = (
    RoadmapRow("Falcon", 27, 28, 55),
    RoadmapRow("Hummingbird", 65, 72, 137),
    RoadmapRow("Eagle", 127, 144, 271),
    RoadmapRow("Osprey", 433, 504, 937),
    RoadmapRow("Condor", 1121, 1186, 2242),
    RoadmapRow("Flamingo", 1386, 1387, 2773),
)


def overhead_table(rows=ROADMAP, params: OverheadParams = OverheadParams(),
                   as_printed: bool = False) -> list[dict]:
    out = []
    for r in rows:
        n = r.printed_switches if as_printed else switch_count(r.qubits, r.couplings)
        out.append({"name": r.name, "qubits": r.qubits, "couplings": r.couplings, "switches": n,
                    "power_mw": power_overhead_mw(n, params),
                    "volume_pct": volume_overhead_pct(n, params)})
    return out


def overhead_markdown(table: list[dict]) -> str:
    lines = ["| name | qubits | couplings | switches | power (mW) | volume (%) |",
             "|---|---|---|---|---|---|"]
    for r in table:
        lines.append(f"| {r['name']} | {r['qubits']} | {r['couplings']} | {r['switches']} "
                     f"| {r['power_mw']:.2f} | {r['volume_pct']:.5f} |")
    return "\n".join(lines) + "\n"
