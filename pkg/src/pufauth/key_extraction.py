"""Speckle to key: median binarization, reliable-triple selection, PIN derivation.

Enrollment draws candidate triples from the brightest and the darkest pixels
(the bits least likely to flip under multiplicative noise).  Bit ``j`` of the
key is 1 when the ``j``-th bright triple sits spatially before the ``j``-th
dark triple.  Pixel brightness ranks of i.i.d. speckle form a uniformly
random permutation, so these comparisons over disjoint index sets are
independent fair coins.  Helper data lists the chosen triples and nothing
else; whether a triple is bright or dark is only visible in the speckle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import (
    CapacityError,
    CorruptHelperError,
    DegenerateInputError,
    PinDerivationError,
    ShapeError,
)
from .puf_model import SpecklePattern

PIN_WINDOW_BITS = 14
PIN_MODULUS = 10_000
MIN_PIN_KEY_BITS = 3 * PIN_WINDOW_BITS


class Bits:
    """Immutable bit vector; keys and the masked protocol values use it."""

    __slots__ = ("_a", "_hash")

    def __init__(self, bits: Iterable[int] | np.ndarray) -> None:
        a = np.array(bits, dtype=np.uint8).reshape(-1)
        if np.any(a > 1):
            raise ValueError("bit values must be 0 or 1")
        a.setflags(write=False)
        self._a = a
        self._hash = None

    @classmethod
    def _wrap(cls, a: np.ndarray) -> Bits:
        # trusted fast path: ``a`` is a fresh 1-D uint8 array of 0/1 values
        obj = cls.__new__(cls)
        a.setflags(write=False)
        obj._a = a
        obj._hash = None
        return obj

    @property
    def array(self) -> np.ndarray:
        return self._a

    def __len__(self) -> int:
        return self._a.size

    def __iter__(self):
        return (int(b) for b in self._a)

    def __getitem__(self, i):
        return self._a[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Bits):
            return NotImplemented
        return self._a.size == other._a.size and bool(np.array_equal(self._a, other._a))

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._a.size, self._a.tobytes()))
        return self._hash

    def __xor__(self, other: Bits) -> Bits:
        if len(self) != len(other):
            raise ShapeError(f"cannot xor {len(self)}-bit and {len(other)}-bit vectors")
        return Bits._wrap(self._a ^ other._a)

    def __invert__(self) -> Bits:
        return Bits._wrap(1 - self._a)

    def __repr__(self) -> str:
        return f"Bits({self.to_string()!r})" if len(self) <= 64 else f"Bits(n={len(self)}, hex={self.hex()})"

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self._a)

    def to_bytes(self) -> bytes:
        """Big-endian packed bytes, zero-padded at the end."""
        return np.packbits(self._a).tobytes()

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_bytes(cls, data: bytes, n: int) -> Bits:
        if len(data) != (n + 7) // 8:
            raise ShapeError(f"{n} bits need {(n + 7) // 8} bytes, got {len(data)}")
        a = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if np.any(a[n:]):
            raise ShapeError("nonzero padding bits")
        return cls._wrap(a[:n].copy())

    @classmethod
    def from_hex(cls, text: str, n: int) -> Bits:
        return cls.from_bytes(bytes.fromhex(text), n)

    @classmethod
    def zeros(cls, n: int) -> Bits:
        return cls(np.zeros(n, dtype=np.uint8))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> Bits:
        return cls._wrap(rng.integers(0, 2, n, dtype=np.uint8))


Key = Bits


@dataclass(frozen=True, eq=False)
class RawBits:
    bits: np.ndarray
    reliability: np.ndarray

    def __post_init__(self) -> None:
        if self.bits.shape != self.reliability.shape:
            raise ShapeError("bits and reliability must have equal length")
        if np.any(self.reliability < 0):
            raise ValueError("reliability must be nonnegative")

    def __len__(self) -> int:
        return self.bits.size


@dataclass(frozen=True)
class HelperData:
    """Public helper data: disjoint triples of pixel positions, one per key bit."""

    groups: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        try:
            arr = np.array(self.groups, dtype=np.int64).reshape(len(self.groups), -1)
        except (TypeError, ValueError) as exc:
            raise CorruptHelperError("helper groups must be triples of integers") from exc
        if arr.size and arr.shape[1] != 3:
            raise CorruptHelperError("helper groups must be triples")
        if arr.size and arr.min() < 0:
            raise CorruptHelperError("negative helper position")
        if np.unique(arr).size != arr.size:
            raise CorruptHelperError("helper positions are not distinct")
        arr = arr.reshape(-1, 3)
        arr.setflags(write=False)
        object.__setattr__(self, "groups", tuple(map(tuple, arr.tolist())))
        object.__setattr__(self, "_pos", arr)

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def positions(self) -> np.ndarray:
        return self._pos

    def max_position(self) -> int:
        return int(self._pos.max()) if self._pos.size else -1

    def to_lines(self) -> str:
        return "".join(f"{a} {b} {c}\n" for a, b, c in self.groups)

    @classmethod
    def from_lines(cls, text: str) -> HelperData:
        groups = []
        for line in text.splitlines():
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise CorruptHelperError(f"helper line {line!r} does not hold three positions")
            try:
                groups.append(tuple(int(p) for p in parts))
            except ValueError as exc:
                raise CorruptHelperError(f"non-numeric helper line {line!r}") from exc
        return cls(tuple(groups))


@dataclass(frozen=True)
class Pin:
    value: int

    def __post_init__(self) -> None:
        if not 0 <= self.value <= 9999:
            raise ValueError(f"PIN {self.value} outside 0000-9999")

    def __str__(self) -> str:
        return f"{self.value:04d}"

    @classmethod
    def parse(cls, text: str) -> Pin:
        text = text.strip()
        if len(text) != 4 or not text.isdigit():
            raise ValueError(f"PIN must be four decimal digits, got {text!r}")
        return cls(int(text))


def binarize(speckle: SpecklePattern) -> RawBits:
    """Bit i is 1 iff pixel i is strictly above the median intensity."""
    x = np.asarray(speckle.intensities)
    if x.size == 0 or np.ptp(x) == 0:
        raise DegenerateInputError("cannot binarize a constant pattern")
    med = np.median(x)
    return RawBits((x > med).astype(np.uint8), np.abs(x - med))


def enroll_key(speckle: SpecklePattern, n: int) -> tuple[Key, HelperData]:
    """Extract an ``n``-bit key and its helper data from a noiseless speckle."""
    if n < 1:
        raise CapacityError("key length must be positive")
    raw = binarize(speckle)
    L = len(raw)
    if 6 * n > L:
        raise CapacityError(f"{n}-bit key needs {6 * n} candidate pixels, pattern has {L}")
    x = np.asarray(speckle.intensities)
    order = np.argsort(x, kind="stable")
    dark = order[: 3 * n].reshape(n, 3)
    bright = order[::-1][: 3 * n].reshape(n, 3)
    if not np.all(raw.bits[bright]) or np.any(raw.bits[dark]):
        raise DegenerateInputError("too many ties around the median to form reliable triples")
    take_bright = bright.min(axis=1) < dark.min(axis=1)
    chosen = np.where(take_bright[:, None], bright, dark)
    chosen.sort(axis=1)
    votes = raw.bits[chosen].sum(axis=1)
    key = Key((votes >= 2).astype(np.uint8))
    return key, HelperData(tuple(map(tuple, chosen.tolist())))


def _check_helper(helper: HelperData, length: int) -> np.ndarray:
    if len(helper) == 0:
        raise CorruptHelperError("empty helper data")
    if helper.max_position() >= length:
        raise CorruptHelperError(f"helper position {helper.max_position()} outside pattern of {length} pixels")
    return helper.positions


def reproduce_key(speckle: SpecklePattern, helper: HelperData) -> Key:
    """Majority vote of the binarized bits in each helper triple."""
    pos = _check_helper(helper, len(speckle))
    bits = binarize(speckle).bits
    return Key((bits[pos].sum(axis=1) >= 2).astype(np.uint8))


def reproduce_keys(intensities: np.ndarray, helper: HelperData) -> np.ndarray:
    """Row-wise :func:`reproduce_key` over a (count, n_out) batch; returns uint8 (count, n)."""
    L = intensities.shape[1]
    pos = _check_helper(helper, L)
    if L % 2:
        med = np.partition(intensities, L // 2, axis=1)[:, L // 2 : L // 2 + 1].astype(np.float64)
    else:
        part = np.partition(intensities, (L // 2 - 1, L // 2), axis=1)
        med = (part[:, L // 2 - 1 : L // 2].astype(np.float64) + part[:, L // 2 : L // 2 + 1]) / 2
    bits = intensities > med
    return (bits[:, pos].sum(axis=2) >= 2).astype(np.uint8)


def _window_values(bits: np.ndarray) -> np.ndarray:
    n_win = bits.shape[-1] // PIN_WINDOW_BITS
    w = bits[..., : n_win * PIN_WINDOW_BITS].reshape(*bits.shape[:-1], n_win, PIN_WINDOW_BITS)
    weights = 1 << np.arange(PIN_WINDOW_BITS - 1, -1, -1, dtype=np.int64)
    return w.astype(np.int64) @ weights


def derive_pin(key: Key) -> Pin:
    """First disjoint 14-bit window (MSB first) whose value is below 10000."""
    if len(key) < MIN_PIN_KEY_BITS:
        raise ShapeError(f"PIN derivation needs at least {MIN_PIN_KEY_BITS} key bits, got {len(key)}")
    for v in _window_values(key.array):
        if v < PIN_MODULUS:
            return Pin(int(v))
    raise PinDerivationError("no 14-bit window below 10000")


def derive_pins(keys: np.ndarray) -> np.ndarray:
    """Vectorized :func:`derive_pin`; rows without an accepting window map to -1."""
    vals = _window_values(keys)
    ok = vals < PIN_MODULUS
    first = ok.argmax(axis=1)
    pins = vals[np.arange(vals.shape[0]), first]
    return np.where(ok.any(axis=1), pins, -1)


def hamming_distance(a: Key, b: Key) -> int:
    if len(a) != len(b):
        raise ShapeError(f"cannot compare {len(a)}-bit and {len(b)}-bit keys")
    return int(np.count_nonzero(a.array != b.array))
