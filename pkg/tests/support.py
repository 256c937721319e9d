"""Shared builders for the test suite."""
from __future__ import annotations

import numpy as np

from decoyq.backend import BackendDescriptor, pair
from decoyq.bitmap import serialize
from decoyq.engine import HardwareSecurityEngine
from decoyq.envelope import TEST_SUITE, keygen, seal
from decoyq.ir import GateKind


def make_backend(n_qubits: int, cx_dur: dict, sq_dur: int = 160, name: str = "test") -> BackendDescriptor:
    return BackendDescriptor(name, n_qubits, tuple(cx_dur), sq_dur, dict(cx_dur), 0.222)


def line_backend(n_qubits: int = 3, cx: int = 640) -> BackendDescriptor:
    return make_backend(n_qubits, {(i, i + 1): cx for i in range(n_qubits - 1)}, name=f"line{n_qubits}")


def load_engine(bitmap, backend, seed: int = 0):
    """Engine holding ``bitmap``, delivered through a sealed envelope."""
    rng = np.random.default_rng(seed)
    backend_keys = keygen(TEST_SUITE, rng, "BKND")
    user_keys = keygen(TEST_SUITE, rng, "USER")
    engine = HardwareSecurityEngine(backend, backend_keys)
    env = seal(serialize(bitmap), backend_keys.public_only(), user_keys, rng)
    engine.load_input_bitmap(env, user_keys.public_only())
    return engine, backend_keys, user_keys


def kept_gates(circuit, bitmap, backend):
    """Gates that survive an ideal switch, read straight off the bitmap.

    Independent of the engine: X/SX go through their drive row, CX through its
    control row, all at the sub-slot the ASAP schedule puts them in.
    """
    from decoyq.bitmap import ChannelLayout, Control, channel_index
    from decoyq.schedule import schedule_asap

    layout = ChannelLayout.for_backend(backend)
    sched = schedule_asap(circuit, backend, validate=False)
    out = []
    for g, start, _ in sched.timed():
        col = start // backend.sq_dur
        if g.kind in (GateKind.X, GateKind.SX):
            if bitmap.bits[g.qubits[0], col]:
                continue
        elif g.kind is GateKind.CX:
            if bitmap.bits[channel_index(layout, Control(*pair(*g.qubits))), col]:
                continue
        out.append(g)
    return out


def dense_state(gates, n: int) -> np.ndarray:
    """Reference statevector built from full 2^n x 2^n matrices (qubit q at bit q)."""
    from decoyq.simulator import gate_matrix

    dim = 1 << n
    state = np.zeros(dim, dtype=complex)
    state[0] = 1
    for g in gates:
        m = gate_matrix(g)
        if m is None:
            continue
        full = np.zeros((dim, dim), dtype=complex)
        qs = g.qubits
        k = len(qs)
        for col in range(dim):
            sub_in = 0
            for i, q in enumerate(qs):
                # first listed qubit is the high bit of the small matrix
                sub_in |= (col >> q & 1) << (k - 1 - i)
            for sub_out in range(1 << k):
                row = col
                for i, q in enumerate(qs):
                    bit = sub_out >> (k - 1 - i) & 1
                    row = (row & ~(1 << q)) | (bit << q)
                full[row, col] += m[sub_out, sub_in]
        state = full @ state
    return state


def same_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> bool:
    return abs(abs(np.vdot(a, b)) - 1.0) < tol


# acceptance bookkeeping: criterion -> [(part, ok, detail)]
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def record(criterion: int, part: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
    print(f"criterion {criterion} [{part}]: {'PASS' if ok else 'FAIL'} {detail}".rstrip())


def acceptance_lines() -> list[str]:
    lines = []
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name}: {'ok' if good else 'FAILED'}{' (' + d + ')' if d else ''}"
                           for name, good, d in parts)
        lines.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    return lines
