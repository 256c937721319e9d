"""Input/output bitmaps, channel indexing and the bit-exact ``.qctb`` codec.

Wire layout (all integers unsigned 32-bit little-endian)::

    b"QCTB" | version | kind | rows | cols | bits...

``rows`` is the channel count for input bitmaps and the shot count for output
bitmaps. Bits are row-major and packed eight per byte, least significant bit
first; pad bits in the last byte must be zero.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .backend import BackendDescriptor, pair
from .errors import BitmapError

MAGIC = b"QCTB"
VERSION = 1
KIND_INPUT = 0
KIND_OUTPUT = 1
# Input bitmap whose last column drives the randomize-output layer.
KIND_INPUT_RANDOMIZED = 2
_HEADER = struct.Struct("<4sIIII")
HEADER_SIZE = _HEADER.size


class Drive(NamedTuple):
    qubit: int


class Control(NamedTuple):
    a: int
    b: int


Channel = Union[Drive, Control]


@dataclass(frozen=True)
class ChannelLayout:
    n_qubits: int
    couplings: tuple[tuple[int, int], ...]

    @classmethod
    def for_backend(cls, backend: BackendDescriptor) -> ChannelLayout:
        return cls(backend.n_qubits, tuple(sorted(backend.couplings)))

    @property
    def m(self) -> int:
        return self.n_qubits + len(self.couplings)

    def channels(self) -> list[Channel]:
        return [Drive(q) for q in range(self.n_qubits)] + [Control(a, b) for a, b in self.couplings]


def channel_index(layout: ChannelLayout, channel: Channel) -> int:
    if isinstance(channel, Drive):
        if 0 <= channel.qubit < layout.n_qubits:
            return channel.qubit
    elif isinstance(channel, Control):
        key = pair(channel.a, channel.b)
        try:
            return layout.n_qubits + layout.couplings.index(key)
        except ValueError:
            pass
    raise BitmapError(f"unknown channel {channel!r}")


def _as_bits(bits, shape) -> np.ndarray:
    arr = np.asarray(bits, dtype=bool)
    if arr.size == 0:
        arr = arr.reshape(shape)
    if arr.shape != shape:
        raise BitmapError(f"bit matrix shape {arr.shape} does not match {shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class InputBitmap:
    """``bits[c, j]`` is 1 when channel ``c`` must be attenuated during sub-slot ``j``."""

    m: int
    n: int
    bits: np.ndarray
    randomize_output: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bits", _as_bits(self.bits, (self.m, self.n)))

    def __eq__(self, other):
        return (isinstance(other, InputBitmap) and self.randomize_output == other.randomize_output
                and self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits)))

    def __hash__(self):
        return hash((self.m, self.n, self.bits.tobytes(), self.randomize_output))

    def popcount(self) -> int:
        return int(self.bits.sum())

    def with_bits(self, bits) -> InputBitmap:
        return InputBitmap(self.m, self.n, bits, self.randomize_output)

    @classmethod
    def zeros(cls, m: int, n: int, randomize_output: bool = False) -> InputBitmap:
        return cls(m, n, np.zeros((m, n), dtype=bool), randomize_output)


@dataclass(frozen=True, eq=False)
class OutputBitmap:
    """``bits[s, q]`` is 1 when the final X on qubit ``q`` was applied in shot ``s``."""

    shots: int
    n_qubits: int
    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", _as_bits(self.bits, (self.shots, self.n_qubits)))

    def __eq__(self, other):
        return (isinstance(other, OutputBitmap) and self.bits.shape == other.bits.shape
                and bool(np.array_equal(self.bits, other.bits)))

    def __hash__(self):
        return hash((self.shots, self.n_qubits, self.bits.tobytes()))

    def row_mask(self, shot: int) -> int:
        """Row ``shot`` as an integer with qubit ``q`` at bit ``q``."""
        return int(sum(1 << q for q in np.flatnonzero(self.bits[shot])))


Bitmap = Union[InputBitmap, OutputBitmap]


def serialize(bitmap: Bitmap) -> bytes:
    if isinstance(bitmap, InputBitmap):
        kind = KIND_INPUT_RANDOMIZED if bitmap.randomize_output else KIND_INPUT
        rows, cols = bitmap.m, bitmap.n
    elif isinstance(bitmap, OutputBitmap):
        kind, rows, cols = KIND_OUTPUT, bitmap.shots, bitmap.n_qubits
    else:
        raise BitmapError(f"cannot serialize {type(bitmap).__name__}")
    header = _HEADER.pack(MAGIC, VERSION, kind, rows, cols)
    payload = np.packbits(bitmap.bits.reshape(-1), bitorder="little").tobytes()
    return header + payload


def deserialize(data: bytes) -> Bitmap:
    if len(data) < HEADER_SIZE:
        raise BitmapError("length mismatch: truncated header")
    magic, version, kind, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BitmapError(f"bad magic {magic!r}")
    if version != VERSION:
        raise BitmapError(f"unsupported version {version}")
    if kind not in (KIND_INPUT, KIND_OUTPUT, KIND_INPUT_RANDOMIZED):
        raise BitmapError(f"unknown bitmap kind {kind}")
    nbits = rows * cols
    payload = data[HEADER_SIZE:]
    if len(payload) != -(-nbits // 8):
        raise BitmapError(f"length mismatch: {len(payload)} payload bytes for {nbits} bits")
    flat = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
    if flat[nbits:].any():
        raise BitmapError("malformed padding: nonzero pad bits")
    bits = flat[:nbits].astype(bool).reshape(rows, cols)
    if kind == KIND_OUTPUT:
        return OutputBitmap(rows, cols, bits)
    return InputBitmap(rows, cols, bits, randomize_output=kind == KIND_INPUT_RANDOMIZED)
