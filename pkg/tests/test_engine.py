import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoyq.backend import sample_backend
from decoyq.benchmarks import load_benchmark
from decoyq.bitmap import InputBitmap, OutputBitmap, deserialize, serialize
from decoyq.engine import (ZEROIZED, JobResult, NoiseModel, Setting, SwitchModel, Trng,
                           effective_gate, exact_distribution, exact_distributions, execute_job)
from decoyq.envelope import Envelope, open_envelope, seal
from decoyq.errors import (AuthFailureError, DimensionMismatchError, EngineError,
                           TamperedError)
from decoyq.ir import Gate, GateKind, QuantumCircuit, cx, delay, measure, rz, sx, x
from decoyq.obfuscator import Level, ObfuscationConfig, obfuscate
from decoyq.simulator import (MAX_QUBITS, apply_gate, gate_matrix, rzx_matrix, simulate_exact,
                              statevector)

from support import dense_state, load_engine, make_backend

SHOTS = 20000


def _bell():
    return QuantumCircuit(2, (rz(math.pi / 2, 0), sx(0), rz(math.pi / 2, 0), cx(0, 1),
                              measure(0), measure(1)))


# models

def test_switch_epsilon():
    assert SwitchModel().ideal and SwitchModel().epsilon == 0.0
    assert SwitchModel(46).epsilon == pytest.approx(5.0119e-3, rel=1e-4)
    assert SwitchModel(80).epsilon == pytest.approx(1e-4, rel=1e-12)
    assert SwitchModel.from_epsilon(1e-2).epsilon == pytest.approx(1e-2, rel=1e-12)
    assert SwitchModel.parse("ideal").ideal
    with pytest.raises(EngineError):
        SwitchModel(-1)


def test_noise_model_checks():
    assert NoiseModel.parse("0.001,0.01,0.0005") == NoiseModel(0.001, 0.01, 0.0005)
    assert NoiseModel().noiseless
    with pytest.raises(EngineError):
        NoiseModel(p1=1.5)
    with pytest.raises(EngineError):
        NoiseModel.parse("0.1,0.2")


def test_trng_is_deterministic():
    assert Trng(4).bytes(100) == Trng(4).bytes(100)
    assert Trng(4).bytes(32) != Trng(5).bytes(32)
    t = Trng(9)
    assert t.bytes(10) + t.bytes(40) == Trng(9).bytes(50)
    bits = Trng(1).bits(80000)
    assert abs(bits.mean() - 0.5) < 0.01


# gate models

def test_sx_matrix_is_the_square_root_of_x():
    m = gate_matrix(sx(0))
    assert np.allclose(m, 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]]))
    assert np.allclose(m @ m, gate_matrix(x(0)))


@pytest.mark.parametrize("theta", [0.0, 1e-4, 0.3, math.pi / 2, 2.5])
def test_rzx_is_an_exponential(theta):
    zx = np.kron(np.diag([1, -1]), np.array([[0, 1], [1, 0]]))
    w, v = np.linalg.eigh(zx)
    ref = v @ np.diag(np.exp(-0.5j * theta * w)) @ v.conj().T
    assert np.allclose(rzx_matrix(theta), ref, atol=1e-14)


def test_effective_gate_examples():
    ideal, leaky = SwitchModel(), SwitchModel(80)
    assert effective_gate(x(0), Setting.ATTENUATE, ideal) == (delay(160, 0),)
    assert effective_gate(x(0), Setting.PASS, leaky) == (x(0),)
    g, = effective_gate(x(0), Setting.ATTENUATE, leaky)
    assert g.kind is GateKind.RX and g.angle == pytest.approx(1e-4 * math.pi)
    g, = effective_gate(sx(1), Setting.ATTENUATE, leaky)
    assert g.kind is GateKind.RX and g.angle == pytest.approx(1e-4 * math.pi / 2)
    g, = effective_gate(cx(0, 1), Setting.ATTENUATE, leaky)
    assert g.kind is GateKind.RZX and g.qubits == (0, 1)
    assert effective_gate(cx(0, 1), Setting.ATTENUATE, ideal, 1280) == (delay(1280, 0), delay(1280, 1))
    with pytest.raises(EngineError):
        effective_gate(rz(1.0, 0), Setting.PASS, ideal)


def test_scale_pass_applies_insertion_loss():
    sw = SwitchModel(insertion_loss_db=1.5, scale_pass=True)
    g, = effective_gate(x(0), Setting.PASS, sw)
    assert g.angle == pytest.approx(math.pi * 10 ** (-1.5 / 20))
    assert effective_gate(cx(0, 1), Setting.PASS, sw) == (cx(0, 1),)


# exact simulator

def test_simulate_examples():
    assert simulate_exact([x(0)], 1) == {"1": 1.0}
    d = simulate_exact([sx(0)], 1)
    assert d["0"] == pytest.approx(0.5) and d["1"] == pytest.approx(0.5)
    d = simulate_exact(_bell())
    assert set(d) == {"00", "11"}
    assert d["00"] == pytest.approx(0.5, abs=1e-15)


def test_unmeasured_qubits_read_zero():
    d = simulate_exact(QuantumCircuit(2, (x(0), x(1), measure(0))))
    assert d == {"01": 1.0}


def test_qubit_limit():
    with pytest.raises(EngineError):
        statevector([], MAX_QUBITS + 1)


_KINDS = st.sampled_from(["x", "sx", "rz", "rx", "cx", "rzx"])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.tuples(_KINDS, st.integers(0, n - 1), st.integers(0, n - 1),
                       st.floats(-4, 4, allow_nan=False)), max_size=25))))
def test_state_matches_dense_reference(case):
    n, ops = case
    gates = []
    for kind, a, b, theta in ops:
        if kind in ("cx", "rzx"):
            if a == b or n < 2:
                continue
            gates.append(cx(a, b) if kind == "cx" else Gate(GateKind.RZX, (a, b), angle=theta))
        elif kind == "rz":
            gates.append(rz(theta, a))
        elif kind == "rx":
            gates.append(Gate(GateKind.RX, (a,), angle=theta))
        else:
            gates.append(x(a) if kind == "x" else sx(a))
    got = statevector(gates, n)
    assert np.allclose(got, dense_state(gates, n), atol=1e-12)
    assert abs(np.sum(np.abs(got) ** 2) - 1) < 1e-12


def test_batched_state_matches_columns():
    n = 3
    gates = [sx(0), cx(0, 2), rz(0.4, 2), sx(1), cx(2, 1)]
    state = np.zeros((1 << n, 4), dtype=complex)
    state[0, :] = 1
    state[:, 1] = 0
    state[3, 1] = 1
    for g in gates:
        state = apply_gate(state, g, n)
    single = statevector(gates, n)
    assert np.allclose(state[:, 0], single)
    assert np.allclose(state[:, 2], single)


# engine state machine

@pytest.fixture
def bell_setup():
    perth = sample_backend()
    circuit, bitmap = obfuscate(_bell(), perth, ObfuscationConfig(Level.MAX, False, seed=1))
    engine, bk, uk = load_engine(bitmap, perth)
    return perth, circuit, bitmap, engine, bk, uk


def test_load_stores_bitmap(bell_setup):
    _, _, bitmap, engine, _, _ = bell_setup
    assert engine.bitmap_memory == bitmap
    assert engine.tick_index == 0


def test_corrupt_envelope_leaves_memory(bell_setup):
    perth, _, bitmap, engine, bk, uk = bell_setup
    other = InputBitmap.zeros(bitmap.m, 3)
    env = seal(serialize(other), bk.public_only(), uk, np.random.default_rng(3))
    bad = Envelope(env.suite_id, env.kem_ciphertext, env.nonce, bytes([env.ciphertext[0] ^ 1]) + env.ciphertext[1:],
                   env.auth_tag, env.signature)
    with pytest.raises(AuthFailureError):
        engine.load_input_bitmap(bad, uk.public_only())
    assert engine.bitmap_memory == bitmap


def test_wrong_channel_count_rejected(bell_setup):
    _, _, _, engine, bk, uk = bell_setup
    env = seal(serialize(InputBitmap.zeros(5, 4)), bk.public_only(), uk, np.random.default_rng(3))
    with pytest.raises(DimensionMismatchError):
        engine.load_input_bitmap(env, uk.public_only())


def test_tick_follows_bitmap(bell_setup):
    _, _, bitmap, engine, _, _ = bell_setup
    for col in range(bitmap.n):
        settings_ = engine.tick(col)
        for row, s in enumerate(settings_):
            assert (s is Setting.ATTENUATE) == bool(bitmap.bits[row, col])
    with pytest.raises(EngineError):
        engine.tick(bitmap.n)


def test_final_layer_tick_uses_trng():
    b = make_backend(2, {(0, 1): 640})
    engine, _, _ = load_engine(InputBitmap.zeros(3, 1, randomize_output=True), b)
    trng = Trng(0)
    expected = Trng(0).bits(2)
    settings_, drive = engine.tick(0, final_layer=True, trng=trng)
    assert list(drive) == list(expected)
    for q in range(2):
        assert (settings_[q] is Setting.PASS) == bool(expected[q])
    assert settings_[2] is Setting.ATTENUATE
    with pytest.raises(EngineError):
        engine.tick(0, final_layer=True)


def test_tamper(bell_setup):
    perth, circuit, _, engine, bk, uk = bell_setup
    engine.tamper_event()
    assert engine.bitmap_memory == ZEROIZED and engine.tampered and engine.session is None
    engine.tamper_event()
    assert engine.bitmap_memory == ZEROIZED
    with pytest.raises(TamperedError):
        execute_job(circuit, engine, 10)
    with pytest.raises(TamperedError):
        engine.tick(0)
    env = seal(serialize(InputBitmap.zeros(13, 1)), bk.public_only(), uk, np.random.default_rng(0))
    with pytest.raises(TamperedError):
        engine.load_input_bitmap(env, uk.public_only())


def test_dimension_mismatch(bell_setup):
    _, circuit, _, engine, _, _ = bell_setup
    longer = QuantumCircuit(circuit.n_qubits, (x(0),) + circuit.gates)
    with pytest.raises(DimensionMismatchError):
        execute_job(longer, engine, 10)


# jobs

def test_bell_job_noiseless(bell_setup):
    _, circuit, _, engine, _, _ = bell_setup
    probs = exact_distribution(circuit, engine, SwitchModel())
    assert probs[0] == pytest.approx(0.5, abs=1e-12) and probs[3] == pytest.approx(0.5, abs=1e-12)
    assert abs(probs.sum() - 1) < 1e-12
    job = execute_job(circuit, engine, 8192, seed=2)
    assert len(job.shots) == 8192 and job.output_envelope is None
    assert {s[-2:] for s in job.shots} == {"00", "11"}
    assert all(s[:-2] == "00000" for s in job.shots)
    frac = sum(s.endswith("11") for s in job.shots) / 8192
    assert abs(frac - 0.5) < 4 * math.sqrt(0.25 / 8192)


def test_randomized_job_xors_back():
    perth = sample_backend()
    circuit, bitmap = obfuscate(_bell(), perth, ObfuscationConfig(Level.HALF, True, seed=1))
    engine, bk, uk = load_engine(bitmap, perth)
    job = execute_job(circuit, engine, 2000, trng=7, seed=3)
    rows = deserialize(open_envelope(job.output_envelope, uk, bk.public_only()))
    assert isinstance(rows, OutputBitmap) and rows.shots == 2000
    assert rows.bits[:, 2:].sum() == 0
    assert 0.4 < rows.bits[:, :2].mean() < 0.6
    for s, i in zip(job.shots, range(2000)):
        corrected = int(s, 2) ^ rows.row_mask(i)
        assert corrected in (0b00, 0b11)


def test_job_is_deterministic():
    perth = sample_backend()
    circuit, bitmap = obfuscate(load_benchmark("ghz4"), perth, ObfuscationConfig(Level.QUARTER, True, seed=5))
    noise = NoiseModel(0.01, 0.02, 0.001)
    runs = []
    for _ in range(2):
        engine, _, _ = load_engine(bitmap, perth)
        runs.append(execute_job(circuit, engine, 300, SwitchModel(40), noise, trng=11, seed=12).to_json())
    assert runs[0] == runs[1]
    again = JobResult.from_json(runs[0])
    assert again.to_json() == runs[0]


def test_exact_distributions_normalised():
    perth = sample_backend()
    circuit, bitmap = obfuscate(load_benchmark("qaoa4"), perth, ObfuscationConfig(Level.MAX, True, seed=5))
    engine, _, _ = load_engine(bitmap, perth)
    rows = exact_distributions(circuit, engine, SwitchModel(30), list(range(16)))
    assert np.allclose(rows.sum(axis=1), 1, atol=1e-12)


# noise channels against closed forms

def _one_qubit_job(gates, bits, noise, shots=SHOTS, seed=0):
    b = make_backend(1, {})
    circuit = QuantumCircuit(1, tuple(gates) + (measure(0),))
    engine, _, _ = load_engine(InputBitmap(1, len(bits), [bits]), b)
    job = execute_job(circuit, engine, shots, noise=noise, seed=seed)
    return sum(s == "1" for s in job.shots) / shots


def _close(observed, p, shots=SHOTS):
    return abs(observed - p) < 5 * math.sqrt(p * (1 - p) / shots) + 1e-9


def test_gate_depolarizing():
    p1 = 0.3
    # after X the state is |1>; X and Y errors flip it back
    assert _close(_one_qubit_job([x(0)], [0], NoiseModel(p1=p1)), 1 - 2 * p1 / 3)


@pytest.mark.parametrize("k", [1, 2, 5])
def test_idle_depolarizing_composes(k):
    p = 0.1
    p_eff = 0.75 * (1 - (1 - 4 * p / 3) ** k)
    observed = _one_qubit_job([x(0)] * k, [1] * k, NoiseModel(p_idle=p))
    assert _close(observed, 2 * p_eff / 3)


def test_two_qubit_depolarizing():
    b = make_backend(2, {(0, 1): 640})
    circuit = QuantumCircuit(2, (cx(0, 1), measure(0), measure(1)))
    engine, _, _ = load_engine(InputBitmap.zeros(3, 4), b)
    p2 = 0.3
    job = execute_job(circuit, engine, SHOTS, noise=NoiseModel(p2=p2), seed=1)
    flipped = sum(s != "00" for s in job.shots) / SHOTS
    # 12 of the 15 two-qubit Paulis flip at least one bit
    assert _close(flipped, 12 / 15 * p2)
