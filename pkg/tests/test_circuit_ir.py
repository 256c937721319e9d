import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoyq.backend import (BackendDescriptor, load_backend, sample_backend,
                            validate_against_backend)
from decoyq.errors import CircuitError, QasmSyntaxError, ValidationError
from decoyq.ir import GateKind, QuantumCircuit, barrier, cx, delay, measure, rz, sx, x
from decoyq.qasm import emit_qasm, eval_angle, parse_qasm
from decoyq.schedule import circuit_duration, schedule_asap

from support import line_backend, make_backend


@pytest.fixture(scope="module")
def perth():
    return sample_backend()


# parsing

def test_parse_single_x():
    c = parse_qasm("qreg q[2]; x q[0];")
    assert c.n_qubits == 2
    assert [(g.kind, g.qubits) for g in c.gates] == [(GateKind.X, (0,))]


def test_parse_cx():
    c = parse_qasm("qreg q[2]; cx q[0],q[1];")
    assert [(g.kind, g.qubits) for g in c.gates] == [(GateKind.CX, (0, 1))]


def test_parse_index_out_of_range():
    with pytest.raises(QasmSyntaxError, match="out of range"):
        parse_qasm("qreg q[2]; x q[5];")


def test_syntax_error_reports_position():
    with pytest.raises(QasmSyntaxError) as info:
        parse_qasm("qreg q[2];\nx q[0]\n x q[1];")
    assert info.value.line == 3


def test_unsupported_gate_rejected_at_parse():
    with pytest.raises(QasmSyntaxError, match="'h'"):
        parse_qasm("qreg q[1]; h q[0];")


@pytest.mark.parametrize("expr,value", [
    ("pi", math.pi),
    ("-pi/2", -math.pi / 2),
    ("3*pi/4", 3 * math.pi / 4),
    ("0.5 + 0.25", 0.75),
    ("2*(pi-1)", 2 * (math.pi - 1)),
])
def test_angle_arithmetic(expr, value):
    assert eval_angle(expr) == pytest.approx(value, abs=1e-15)


def test_parse_keeps_statement_order():
    c = parse_qasm("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\ncreg c[2];\n"
                   "rz(pi/2) q[0];\nsx q[0];\ndelay(320) q[1];\nbarrier q[0],q[1];\n"
                   "cx q[1],q[0];\nmeasure q[0] -> c[0];\n")
    kinds = [g.kind for g in c.gates]
    assert kinds == [GateKind.RZ, GateKind.SX, GateKind.DELAY, GateKind.BARRIER,
                     GateKind.CX, GateKind.MEASURE]
    assert c.gates[0].angle == pytest.approx(math.pi / 2)
    assert c.gates[2].duration == 320
    assert c.measured_qubits == {0}


def test_gate_after_measure_rejected():
    with pytest.raises(CircuitError):
        QuantumCircuit(1, (measure(0), x(0)))


# validation

def test_validate_accepts_coupled_cx():
    validate_against_backend(QuantumCircuit(2, (cx(0, 1),)), line_backend(2))


def test_validate_rejects_uncoupled_cx(perth):
    with pytest.raises(ValidationError, match="uncoupled"):
        validate_against_backend(QuantumCircuit(7, (cx(0, 6),)), perth)


def test_validate_rejects_wide_circuit(perth):
    with pytest.raises(ValidationError):
        validate_against_backend(QuantumCircuit(8, (x(7),)), perth)


def test_validate_rejects_gate_outside_basis():
    b = make_backend(2, {(0, 1): 640})
    b = BackendDescriptor(b.name, 2, b.couplings, 160, b.cx_dur, 0.222, frozenset({"CX", "RZ", "X"}))
    with pytest.raises(ValidationError, match="sx"):
        validate_against_backend(QuantumCircuit(2, (sx(0),)), b)


def test_sample_backend_shape(perth):
    assert perth.n_qubits == 7
    assert perth.sq_dur == 160
    assert perth.dt_ns == 0.222
    assert perth.couplings == ((0, 1), (1, 2), (1, 3), (3, 5), (4, 5), (5, 6))
    assert perth.basis_gates == {"cx", "i", "rz", "sx", "x"}


def test_backend_round_trips_through_json(tmp_path, perth):
    import json
    path = tmp_path / "b.json"
    path.write_text(json.dumps(perth.to_dict()))
    again = load_backend(path)
    assert again.to_dict() == perth.to_dict()


@pytest.mark.parametrize("bad", [
    {"couplings": [[0, 0]], "cx_dur": {"0-0": 640}},
    {"couplings": [[0, 9]], "cx_dur": {"0-9": 640}},
    {"sq_dur": 0},
    {"cx_dur": {"0-1": 0}},
    {"basis_gates": ["CX", "H"]},
])
def test_backend_invariants(bad):
    data = {"name": "b", "n_qubits": 2, "couplings": [[0, 1]], "sq_dur": 160,
            "cx_dur": {"0-1": 640}, "dt_ns": 0.222, "basis_gates": ["CX", "RZ", "SX", "X"]}
    data.update(bad)
    with pytest.raises(ValidationError):
        BackendDescriptor.from_dict(data)


def test_missing_backend_file_names_path(tmp_path):
    path = tmp_path / "nope.json"
    with pytest.raises(ValidationError, match="nope.json"):
        load_backend(path)


# scheduling

def test_schedule_single_x():
    s = schedule_asap(QuantumCircuit(1, (x(0),)), make_backend(1, {}))
    assert s.start_times == (0,)
    assert s.duration == 160


def test_schedule_sequential_on_one_qubit():
    s = schedule_asap(QuantumCircuit(1, (x(0), x(0))), make_backend(1, {}))
    assert s.start_times == (0, 160)
    assert circuit_duration(s) == 320


def test_schedule_parallel_qubits():
    s = schedule_asap(QuantumCircuit(2, (x(0), x(1))), line_backend(2))
    assert s.start_times == (0, 0)


def test_schedule_empty():
    assert circuit_duration(schedule_asap(QuantumCircuit(2), line_backend(2))) == 0


def test_schedule_cx_duration():
    b = make_backend(2, {(0, 1): 704})
    assert circuit_duration(schedule_asap(QuantumCircuit(2, (cx(0, 1),)), b)) == 704


def test_rz_is_virtual():
    b = make_backend(1, {})
    s = schedule_asap(QuantumCircuit(1, (x(0), rz(1.0, 0), x(0))), b)
    assert s.start_times == (0, 160, 160)
    assert s.duration == 320


def test_pulses_start_on_the_sub_slot_grid():
    b = make_backend(2, {(0, 1): 700})
    s = schedule_asap(QuantumCircuit(2, (cx(0, 1), x(0), delay(10, 1), sx(1))), b)
    assert s.start_times == (0, 800, 700, 800)


def test_barrier_synchronises():
    b = line_backend(2)
    s = schedule_asap(QuantumCircuit(2, (x(0), x(0), barrier(0, 1), x(1))), b)
    assert s.start_times[-1] == 320


# properties

_GATES = st.sampled_from(["x", "sx", "rz", "cx01", "cx10", "cx12", "delay"])


def _circuit_from(ops, n=3):
    gates = []
    for op, q, a in ops:
        if op == "x":
            gates.append(x(q))
        elif op == "sx":
            gates.append(sx(q))
        elif op == "rz":
            gates.append(rz(a, q))
        elif op == "delay":
            gates.append(delay(int(abs(a) * 100), q))
        else:
            c, t = int(op[2]), int(op[3])
            gates.append(cx(c, t))
    return QuantumCircuit(n, tuple(gates))


_OPS = st.lists(st.tuples(_GATES, st.integers(0, 2),
                          st.floats(-10, 10, allow_nan=False, allow_infinity=False)),
                max_size=25)


@settings(max_examples=200, deadline=None)
@given(_OPS)
def test_emit_parse_round_trip(ops):
    c = _circuit_from(ops)
    again = parse_qasm(emit_qasm(c))
    assert again.gates == c.gates
    assert again.n_qubits == c.n_qubits


@settings(max_examples=200, deadline=None)
@given(_OPS)
def test_schedule_is_deterministic(ops):
    b = line_backend(3, cx=704)
    c = _circuit_from(ops)
    assert schedule_asap(c, b) == schedule_asap(c, b)


@settings(max_examples=200, deadline=None)
@given(_OPS, st.sampled_from([640, 800, 960]))
def test_barrier_doubles_duration(ops, cx_dur):
    # holds when every duration is a multiple of the sub-slot, so the grid adds no slack
    b = line_backend(3, cx=cx_dur)
    ops = [(op, q, a) for op, q, a in ops if op != "delay"]
    c = _circuit_from(ops)
    touch = tuple(x(q) for q in range(3))
    c = QuantumCircuit(3, c.gates + touch)
    doubled = QuantumCircuit(3, c.gates + (barrier(0, 1, 2),) + c.gates)
    assert circuit_duration(schedule_asap(doubled, b)) == 2 * circuit_duration(schedule_asap(c, b))


@settings(max_examples=200, deadline=None)
@given(_OPS)
def test_no_overlap_per_qubit(ops):
    b = line_backend(3, cx=704)
    s = schedule_asap(_circuit_from(ops), b)
    busy = {q: [] for q in range(3)}
    for g, start, dur in s.timed():
        if dur:
            for q in g.qubits:
                busy[q].append((start, start + dur))
        if g.kind in (GateKind.X, GateKind.SX):
            assert start % 160 == 0
    for spans in busy.values():
        spans.sort()
        assert all(a[1] <= b_[0] for a, b_ in zip(spans, spans[1:]))
