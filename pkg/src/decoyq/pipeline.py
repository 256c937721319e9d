"""End-to-end workflow: user side, provider boundary, trusted backend, user again."""
from __future__ import annotations

import json
import secrets
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import attack_complexity_log2, complexity_params_from, depth_increase_factor
from .backend import BackendDescriptor, load_backend, sample_backend
from .bitmap import OutputBitmap, deserialize, serialize
from .client import (counts_to_csv, counts_to_distribution, enumerate_recovered_distribution,
                     recover_shots, trim, variational_distance)
from .engine import HardwareSecurityEngine, JobResult, NoiseModel, SwitchModel, execute_job
from .envelope import TEST_SUITE, keygen, open_envelope, seal, serialize_envelope
from .errors import CircuitError, RecoveryError
from .ir import QuantumCircuit
from .obfuscator import ObfuscationConfig, obfuscate_detailed
from .qasm import emit_qasm, parse_qasm
from .schedule import schedule_asap
from .simulator import simulate_exact

SEED_NAMES = ("obfuscator", "trng", "noise", "keys")


def fresh_seed() -> int:
    return secrets.randbits(63)


@dataclass
class PipelineConfig:
    circuit: QuantumCircuit
    backend: BackendDescriptor
    obfuscation: ObfuscationConfig
    shots: int = 8192
    switch: SwitchModel = field(default_factory=SwitchModel)
    noise: NoiseModel = field(default_factory=NoiseModel)
    seeds: dict[str, int] = field(default_factory=dict)
    suite: str = TEST_SUITE
    out_dir: Path | None = None
    name: str = "circuit"

    def __post_init__(self):
        if self.shots < 1:
            raise CircuitError("shots must be >= 1")
        for k in SEED_NAMES:
            self.seeds.setdefault(k, fresh_seed())


def read_circuit(path: str | Path) -> QuantumCircuit:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CircuitError(f"cannot read circuit file {path}: {exc.strerror}") from exc
    return parse_qasm(text)


def resolve_backend(spec: str | None) -> BackendDescriptor:
    if spec is None or spec.startswith("builtin:"):
        return sample_backend(spec.split(":", 1)[1] if spec else "ibm_perth")
    return load_backend(spec)


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every step and return the report; write artifacts when ``out_dir`` is set."""
    seeds = cfg.seeds
    key_rng = np.random.default_rng(seeds["keys"])
    backend_keys = keygen(cfg.suite, key_rng, "BKND")
    user_keys = keygen(cfg.suite, key_rng, "USER")

    # user side
    result = obfuscate_detailed(cfg.circuit, cfg.backend,
                                ObfuscationConfig(**{**cfg.obfuscation.to_dict(), "seed": seeds["obfuscator"]}))
    sealed_input = seal(serialize(result.bitmap), backend_keys.public_only(), user_keys, key_rng)
    provider_qasm = emit_qasm(result.circuit)

    # provider boundary: only text and ciphertext cross it
    provider_circuit = parse_qasm(provider_qasm)

    # trusted backend
    engine = HardwareSecurityEngine(cfg.backend, backend_keys)
    engine.load_input_bitmap(sealed_input, user_keys.public_only())
    job = execute_job(provider_circuit, engine, cfg.shots, cfg.switch, cfg.noise,
                      trng=seeds["trng"], seed=seeds["noise"])

    # user side again
    shots = job.shots
    if job.output_envelope is not None:
        plain = open_envelope(job.output_envelope, user_keys, backend_keys.public_only())
        out_bitmap = deserialize(plain)
        if not isinstance(out_bitmap, OutputBitmap):
            raise RecoveryError("output envelope does not hold an output bitmap")
        shots = recover_shots(shots, out_bitmap)
    width = cfg.circuit.n_qubits
    recovered = counts_to_distribution(trim(shots, width))
    baseline = simulate_exact(cfg.circuit.with_measure_all())
    vd_shots = variational_distance(recovered, baseline)
    # noiseless model of the same switch, all final-layer masks weighted equally
    vd_exact = variational_distance(
        enumerate_recovered_distribution(provider_circuit, engine, cfg.switch, width), baseline)
    vd = vd_exact if cfg.noise.noiseless else vd_shots

    base_sched = schedule_asap(cfg.circuit, cfg.backend)
    obf_sched = schedule_asap(provider_circuit, cfg.backend, validate=False)
    depth = depth_increase_factor(base_sched, obf_sched) if base_sched.duration else None
    report = {
        "benchmark": cfg.name,
        "backend": cfg.backend.name,
        "level": result.config.level.value,
        "randomize_output": result.config.randomize_output,
        "identity_conversion": result.config.identity_conversion,
        "padding_slots": result.config.padding_slots,
        "shots": cfg.shots,
        "epsilon": cfg.switch.epsilon,
        "noise": [cfg.noise.p1, cfg.noise.p2, cfg.noise.p_idle],
        "seeds": dict(seeds),
        "vd": vd,
        "vd_exact": vd_exact,
        "vd_shots": vd_shots,
        "depth_factor": depth,
        "base_duration_dt": base_sched.duration,
        "obf_duration_dt": obf_sched.duration,
        "complexity_log2": attack_complexity_log2(complexity_params_from(result)),
        "bitmap_shape": [result.bitmap.m, result.bitmap.n],
    }
    if cfg.out_dir is not None:
        _write_artifacts(Path(cfg.out_dir), report, provider_qasm, sealed_input, job, recovered, baseline)
    return report


def _write_artifacts(out: Path, report, provider_qasm, sealed_input, job: JobResult,
                     recovered, baseline) -> None:
    view = out / "provider_view"
    view.mkdir(parents=True, exist_ok=True)
    (view / "obfuscated.qasm").write_text(provider_qasm, encoding="utf-8")
    (view / "input_bitmap.env").write_bytes(serialize_envelope(sealed_input))
    if job.output_envelope is not None:
        (view / "output_bitmap.env").write_bytes(serialize_envelope(job.output_envelope))
    (view / "raw_shots.txt").write_text("\n".join(job.shots) + "\n", encoding="utf-8")
    (out / "job.json").write_text(job.to_json() + "\n", encoding="utf-8")
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    cols = ["benchmark", "level", "randomize_output", "epsilon", "vd", "depth_factor", "complexity_log2"]
    (out / "report.csv").write_text(",".join(cols) + "\n" + ",".join(str(report[c]) for c in cols) + "\n",
                                    encoding="utf-8")
    (out / "recovered_counts.csv").write_text(counts_to_csv(recovered, report["shots"]), encoding="utf-8")
    (out / "distributions.json").write_text(
        json.dumps({"recovered": recovered, "baseline": baseline}, indent=1, sort_keys=True) + "\n",
        encoding="utf-8")

