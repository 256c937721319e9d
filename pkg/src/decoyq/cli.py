"""Command line driver."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (ROADMAP, OverheadParams, RoadmapRow, attack_complexity_log2,
                       complexity_params_from, depth_increase_factor, overhead_markdown,
                       overhead_table)
from .benchmarks import list_benchmarks, load_benchmark
from .bitmap import OutputBitmap, deserialize, serialize
from .client import (counts_to_csv, counts_to_distribution, recover_shots, trim,
                     variational_distance, vd_rows_to_csv)
from .engine import HardwareSecurityEngine, JobResult, NoiseModel, SwitchModel, execute_job
from .envelope import (TEST_SUITE, Role, available_suites, deserialize_envelope, deserialize_key,
                       keygen, open_envelope, seal, serialize_envelope, serialize_key)
from .errors import DecoyqError
from .obfuscator import Level, ObfuscationConfig, obfuscate_detailed
from .pipeline import PipelineConfig, fresh_seed, read_circuit, resolve_backend, run_pipeline
from .qasm import emit_qasm
from .schedule import schedule_asap
from .simulator import simulate_exact


class CliError(DecoyqError):
    module = "cli"


def _seed(value: int | None, name: str, announce: bool = True) -> int:
    if value is not None:
        return value
    seed = fresh_seed()
    if announce:
        print(f"seed {name} = {seed}", file=sys.stderr)
    return seed


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc


def _key(path):
    return deserialize_key(_read_bytes(path))


def _switch(text: str) -> SwitchModel:
    try:
        return SwitchModel.parse(text)
    except ValueError as exc:
        raise CliError(f"bad --isolation-db value {text!r}") from exc


def _noise(text: str | None) -> NoiseModel:
    if not text:
        return NoiseModel()
    try:
        return NoiseModel.parse(text)
    except ValueError as exc:
        raise CliError(f"bad --noise value {text!r}") from exc


def _obf_config(args, seed: int) -> ObfuscationConfig:
    return ObfuscationConfig(level=Level(args.level), randomize_output=args.randomize_output,
                             seed=seed, padding_slots=args.padding_slots,
                             identity_conversion=args.identity_conversion)


def _load_distribution(path: str, width: int | None = None) -> dict[str, float]:
    p = Path(path)
    if p.suffix == ".qasm":
        return simulate_exact(read_circuit(p).with_measure_all())
    text = _read_bytes(p).decode("utf-8")
    if p.suffix == ".json":
        data = json.loads(text)
        if "shots" in data:
            return counts_to_distribution(data["shots"] if width is None else trim(data["shots"], width))
        return {k: float(v) for k, v in data.items()}
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and "probability" in rows[0]:
        return {r["bitstring"]: float(r["probability"]) for r in rows}
    raise CliError(f"cannot read a distribution from {path}")


# subcommands ----------------------------------------------------------------

def cmd_keygen(args) -> int:
    seed = _seed(args.seed, "keys")
    key = keygen(args.suite, np.random.default_rng(seed), Role.BACKEND if args.role == "backend" else Role.USER)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(serialize_key(key))
    out.with_name(out.name + ".pub").write_bytes(serialize_key(key, include_private=False))
    print(f"wrote {out} and {out}.pub ({key.role.name}, {key.suite})")
    return 0


def cmd_obfuscate(args) -> int:
    backend = resolve_backend(args.backend)
    circuit = read_circuit(args.circuit)
    seed = _seed(args.seed_obfuscator, "obfuscator")
    result = obfuscate_detailed(circuit, backend, _obf_config(args, seed))
    out = Path(args.out)
    (out / "provider_view").mkdir(parents=True, exist_ok=True)
    (out / "provider_view" / "obfuscated.qasm").write_text(emit_qasm(result.circuit), encoding="utf-8")
    # the plaintext bitmap stays on the user side
    (out / "input_bitmap.qctb").write_bytes(serialize(result.bitmap))
    if args.backend_key and args.user_key:
        env = seal(serialize(result.bitmap), _key(args.backend_key), _key(args.user_key),
                   np.random.default_rng(_seed(args.seed_keys, "keys")))
        (out / "provider_view" / "input_bitmap.env").write_bytes(serialize_envelope(env))
    summary = {"level": result.config.level.value, "randomize_output": result.config.randomize_output,
               "bitmap_shape": [result.bitmap.m, result.bitmap.n], "seed": seed,
               "complexity_log2": attack_complexity_log2(complexity_params_from(result))}
    (out / "obfuscation.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_execute(args) -> int:
    backend = resolve_backend(args.backend)
    circuit = read_circuit(args.circuit)
    engine = HardwareSecurityEngine(backend, _key(args.backend_key))
    engine.load_input_bitmap(deserialize_envelope(_read_bytes(args.envelope)), _key(args.user_key))
    job = execute_job(circuit, engine, args.shots, _switch(args.isolation_db), _noise(args.noise),
                      trng=_seed(args.seed_trng, "trng"), seed=_seed(args.seed_noise, "noise"))
    Path(args.out).write_text(job.to_json() + "\n", encoding="utf-8")
    print(f"wrote {args.out} ({len(job.shots)} shots)")
    return 0


def cmd_recover(args) -> int:
    job = JobResult.from_json(_read_bytes(args.job).decode("utf-8"))
    shots = job.shots
    if job.output_envelope is not None:
        if not (args.user_key and args.backend_key):
            raise CliError("job carries an output envelope; pass --user-key and --backend-key")
        bitmap = deserialize(open_envelope(job.output_envelope, _key(args.user_key), _key(args.backend_key)))
        if not isinstance(bitmap, OutputBitmap):
            raise CliError("output envelope does not hold an output bitmap")
        shots = recover_shots(shots, bitmap)
    if args.width:
        shots = trim(shots, args.width)
    dist = counts_to_distribution(shots)
    text = counts_to_csv(dist, len(shots))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_vd(args) -> int:
    p = _load_distribution(args.p, args.width)
    q = _load_distribution(args.q, args.width)
    print(f"{variational_distance(p, q):.12g}")
    return 0


def cmd_analyze(args) -> int:
    params = OverheadParams(per_switch_mm3=args.per_switch_mm3, logic_mm3=args.logic_mm3)
    rows = ROADMAP
    if args.rows:
        rows = []
        for item in args.rows.split(","):
            qs, cs = item.split(":")
            rows.append(RoadmapRow(f"{qs}q", int(qs), int(cs), int(qs) + int(cs)))
    table = overhead_table(rows, params, as_printed=args.as_printed)
    if args.format == "md":
        sys.stdout.write(overhead_markdown(table))
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=list(table[0]), lineterminator="\n")
        w.writeheader()
        for r in table:
            w.writerow({**r, "power_mw": f"{r['power_mw']:.2f}", "volume_pct": f"{r['volume_pct']:.6f}"})
    if args.circuit:
        backend = resolve_backend(args.backend)
        circuit = read_circuit(args.circuit)
        seed = _seed(args.seed_obfuscator, "obfuscator")
        base = schedule_asap(circuit, backend)
        print("level,randomize_output,depth_factor,complexity_log2")
        for level in Level:
            for ro in (False, True):
                res = obfuscate_detailed(circuit, backend, ObfuscationConfig(level, ro, seed))
                obf = schedule_asap(res.circuit, backend, validate=False)
                print(f"{level.value},{ro},{depth_increase_factor(base, obf):.4f},"
                      f"{attack_complexity_log2(complexity_params_from(res)):.2f}")
    return 0


def _pipeline_seeds(args) -> dict[str, int]:
    return {"obfuscator": _seed(args.seed_obfuscator, "obfuscator"), "trng": _seed(args.seed_trng, "trng"),
            "noise": _seed(args.seed_noise, "noise"), "keys": _seed(args.seed_keys, "keys")}


def cmd_pipeline(args) -> int:
    cfg = PipelineConfig(
        circuit=read_circuit(args.circuit), backend=resolve_backend(args.backend),
        obfuscation=_obf_config(args, 0), shots=args.shots, switch=_switch(args.isolation_db),
        noise=_noise(args.noise), seeds=_pipeline_seeds(args), suite=args.suite,
        out_dir=Path(args.out) if args.out else None, name=Path(args.circuit).stem)
    report = run_pipeline(cfg)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    backend = resolve_backend(args.backend)
    names = args.benchmarks.split(",") if args.benchmarks else list_benchmarks()
    switches = [_switch(s) for s in args.isolation_db.split(",")]
    noise = _noise(args.noise)
    base_seed = _seed(args.seed, "bench")
    rows = []
    for name in names:
        circuit = load_benchmark(name)
        for level in Level:
            for ro in (False, True):
                for sw in switches:
                    vds = []
                    for rep in range(args.repeats):
                        seed = base_seed + rep
                        cfg = PipelineConfig(circuit, backend, ObfuscationConfig(level, ro, 0, args.padding_slots,
                                                                                 args.identity_conversion),
                                             shots=args.shots, switch=sw, noise=noise, name=name,
                                             seeds={"obfuscator": seed, "trng": seed, "noise": seed, "keys": seed})
                        vds.append(run_pipeline(cfg)["vd"])
                    rows.append({"benchmark": name, "level": level.value, "randomize_output": ro,
                                 "epsilon": sw.epsilon, "vd": f"{np.mean(vds):.6f}"})
    text = vd_rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


# parser -----------------------------------------------------------------------

def _add_obf(p) -> None:
    p.add_argument("--level", choices=[lv.value for lv in Level], default="max")
    p.add_argument("--randomize-output", action="store_true")
    p.add_argument("--padding-slots", type=int, default=0, metavar="N")
    p.add_argument("--identity-conversion", action="store_true",
                   help="execute decoy runs that compose to the identity instead of attenuating them")


def _add_exec(p) -> None:
    p.add_argument("--shots", type=int, default=8192)
    p.add_argument("--isolation-db", default="ideal", help="switch isolation in dB, or 'ideal'")
    p.add_argument("--noise", default=None, metavar="P1,P2,PIDLE")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="decoyq", description="Decoy-pulse circuit obfuscation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a key pair")
    p.add_argument("--suite", default=TEST_SUITE, choices=available_suites())
    p.add_argument("--role", choices=["backend", "user"], default="user")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("obfuscate", help="insert decoys and build the input bitmap")
    p.add_argument("--backend")
    p.add_argument("--circuit", required=True)
    _add_obf(p)
    p.add_argument("--backend-key", help="backend public key file (enables sealing)")
    p.add_argument("--user-key", help="user key file with private part (signs the envelope)")
    p.add_argument("--seed-obfuscator", type=int)
    p.add_argument("--seed-keys", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_obfuscate)

    p = sub.add_parser("execute", help="run an obfuscated circuit on the simulated backend")
    p.add_argument("--backend")
    p.add_argument("--circuit", required=True)
    p.add_argument("--envelope", required=True)
    p.add_argument("--backend-key", required=True, help="backend key file with private part")
    p.add_argument("--user-key", required=True, help="user public key file")
    _add_exec(p)
    p.add_argument("--seed-trng", type=int)
    p.add_argument("--seed-noise", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_execute)

    p = sub.add_parser("recover", help="undo output randomization and aggregate counts")
    p.add_argument("--job", required=True)
    p.add_argument("--user-key")
    p.add_argument("--backend-key")
    p.add_argument("--width", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("vd", help="variational distance between two distributions")
    p.add_argument("p")
    p.add_argument("q")
    p.add_argument("--width", type=int)
    p.set_defaults(func=cmd_vd)

    p = sub.add_parser("analyze", help="overhead table and per-level complexity")
    p.add_argument("--rows", help="comma list of qubits:couplings")
    p.add_argument("--as-printed", action="store_true", help="use the published switch counts")
    p.add_argument("--per-switch-mm3", type=float, default=6.5)
    p.add_argument("--logic-mm3", type=float, default=0.0)
    p.add_argument("--format", choices=["csv", "md"], default="csv")
    p.add_argument("--circuit")
    p.add_argument("--backend")
    p.add_argument("--seed-obfuscator", type=int)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pipeline", help="full workflow with reports")
    p.add_argument("--backend")
    p.add_argument("--circuit", required=True)
    _add_obf(p)
    _add_exec(p)
    p.add_argument("--suite", default=TEST_SUITE, choices=available_suites())
    for name in ("obfuscator", "trng", "noise", "keys"):
        p.add_argument(f"--seed-{name}", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bench", help="corpus x levels x randomize-output x switch table")
    p.add_argument("--backend")
    p.add_argument("--benchmarks", help="comma list; default: bundled corpus")
    p.add_argument("--shots", type=int, default=1024)
    p.add_argument("--isolation-db", default="ideal", help="comma list of dB values or 'ideal'")
    p.add_argument("--noise", default=None, metavar="P1,P2,PIDLE")
    p.add_argument("--padding-slots", type=int, default=0)
    p.add_argument("--identity-conversion", action="store_true")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DecoyqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: [cli] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
