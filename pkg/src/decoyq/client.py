"""User-side recovery: undo the randomized final layer and compare distributions."""
from __future__ import annotations

import csv
import io
from collections import Counter
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bitmap import OutputBitmap
from .errors import RecoveryError

Distribution = dict[str, float]


def _row_string(bits: np.ndarray) -> str:
    # qubit q sits at string position width-1-q
    return "".join("1" if b else "0" for b in bits[::-1])


def _xor(a: str, b: str) -> str:
    return "".join("1" if x != y else "0" for x, y in zip(a, b))


def recover_shots(raw: Sequence[str], output_bitmap: OutputBitmap) -> list[str]:
    """XOR every raw bitstring with its output-bitmap row."""
    if len(raw) != output_bitmap.shots:
        raise RecoveryError(f"{len(raw)} shots but the output bitmap has {output_bitmap.shots} rows")
    width = output_bitmap.n_qubits
    out = []
    for i, s in enumerate(raw):
        if len(s) != width:
            raise RecoveryError(f"shot {i} has width {len(s)}, bitmap rows have {width}")
        out.append(_xor(s, _row_string(output_bitmap.bits[i])))
    return out


def trim(shots: Iterable[str], width: int) -> list[str]:
    """Keep the low ``width`` qubits (the rightmost characters)."""
    out = []
    for s in shots:
        if len(s) < width:
            raise RecoveryError(f"bitstring {s!r} narrower than {width}")
        if "1" in s[:len(s) - width]:
            raise RecoveryError(f"bitstring {s!r} has outcomes beyond the first {width} qubits")
        out.append(s[len(s) - width:])
    return out


def counts_to_distribution(shots: Iterable[str]) -> Distribution:
    counts = Counter(shots)
    total = sum(counts.values())
    if total == 0:
        raise RecoveryError("no shots to aggregate")
    return {k: v / total for k, v in sorted(counts.items())}


def _width(d: Mapping[str, float]) -> int | None:
    widths = {len(k) for k in d}
    if len(widths) > 1:
        raise RecoveryError(f"mixed bitstring widths {sorted(widths)}")
    return widths.pop() if widths else None


def variational_distance(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    """Half the L1 distance over the union support; absent keys count as 0."""
    wp, wq = _width(p), _width(q)
    if wp is not None and wq is not None and wp != wq:
        raise RecoveryError(f"width mismatch: {wp} vs {wq}")
    keys = set(p) | set(q)
    return 0.5 * float(sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys))


def probabilities_to_distribution(probs: np.ndarray, width: int, cutoff: float = 0.0) -> Distribution:
    """Basis-indexed probabilities (qubit q at bit q) to a bitstring mapping."""
    if probs.size < 1 << width:
        raise RecoveryError("distribution narrower than requested width")
    folded = np.bincount(np.arange(probs.size) & ((1 << width) - 1), weights=probs, minlength=1 << width)
    return {format(i, f"0{width}b"): float(v) for i, v in enumerate(folded) if v > cutoff}


def enumerate_recovered_distribution(circuit, engine, switch, width: int | None = None) -> Distribution:
    """Exact recovered distribution, averaging over every final-layer mask.

    Each mask over the final-layer qubits is equally likely; its raw outcomes are
    XORed with the mask before accumulation.
    """
    from .engine import compile_program, exact_distributions

    final = compile_program(circuit, engine, switch).final
    masks = [sum(1 << q for i, q in enumerate(final) if bits >> i & 1) for bits in range(1 << len(final))]
    per_mask = exact_distributions(circuit, engine, switch, masks)
    n = circuit.n_qubits
    total = np.zeros(1 << n)
    idx = np.arange(1 << n)
    for mask, probs in zip(masks, per_mask):
        total[idx ^ mask] += probs / len(masks)
    return probabilities_to_distribution(total, n if width is None else width)


CSV_COLUMNS = ("benchmark", "level", "randomize_output", "epsilon", "vd")


def vd_rows_to_csv(rows: Iterable[Mapping], path=None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def counts_to_csv(dist: Mapping[str, float], shots: int) -> str:
    lines = ["bitstring,count,probability"]
    for k in sorted(dist):
        lines.append(f"{k},{round(dist[k] * shots)},{dist[k]:.10g}")
    return "\n".join(lines) + "\n"
