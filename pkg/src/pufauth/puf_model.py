"""Optical token simulation: transmission matrices, light parameters, speckle.

A token is an opaque 256-bit seed.  For every wavelength on the grid the seed
expands into an i.i.d. circular complex Gaussian transmission matrix, so the
output field of any fixed input is circular Gaussian and the recorded
intensities follow Rayleigh (negative-exponential) statistics.
"""

from __future__ import annotations

import math
import secrets
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DegenerateInputError, ParameterDomainError, ShapeError

N_WAVELENGTHS = 16
N_POINTS = 8  # per axis
N_ANGLES = 8
SEED_BITS = 256
DEFAULT_N_IN = 64
DEFAULT_N_OUT = 4096

# distinct spawn keys keep the matrix stream and the phase-mask stream apart
_MATRIX_STREAM = 0x544D
_MASK_STREAM = 0x504D

_PARAMS_STRUCT = struct.Struct(">BBBBQd")
PARAMS_NBYTES = _PARAMS_STRUCT.size


@dataclass(frozen=True)
class TokenDisorder:
    """The unclonable scattering token, represented by its disorder seed."""

    seed: int
    n_in: int = DEFAULT_N_IN
    n_out: int = DEFAULT_N_OUT

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**SEED_BITS:
            raise ParameterDomainError("token seed must be a 256-bit unsigned integer")
        if self.n_in < 1 or self.n_out < 2:
            raise ParameterDomainError("n_in must be >= 1 and n_out >= 2")

    @classmethod
    def random(cls, rng: np.random.Generator | None = None, **kwargs) -> TokenDisorder:
        if rng is None:
            return cls(secrets.randbits(SEED_BITS), **kwargs)
        words = rng.integers(0, 2**32, size=SEED_BITS // 32, dtype=np.uint64)
        return cls(int.from_bytes(b"".join(int(w).to_bytes(4, "big") for w in words), "big"), **kwargs)

    @property
    def hex(self) -> str:
        return f"{self.seed:064x}"

    @classmethod
    def from_hex(cls, text: str, **kwargs) -> TokenDisorder:
        text = text.strip()
        if len(text) != 64 or text != text.lower():
            raise ParameterDomainError("token seed must be 64 lowercase hex characters")
        try:
            return cls(int(text, 16), **kwargs)
        except ValueError as exc:
            raise ParameterDomainError(f"invalid token hex: {text!r}") from exc


@dataclass(frozen=True)
class LightParams:
    """One challenge: a point on the discrete interrogation grid.

    ``power`` scales the field amplitude only; because patterns are
    mean-normalized it does not change the recorded speckle.
    """

    wavelength_index: int = 0
    incidence_point: tuple[int, int] = (0, 0)
    incidence_angle_index: int = 0
    phase_mask_seed: int = 0
    power: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "incidence_point", tuple(self.incidence_point))
        if not 0 <= self.wavelength_index < N_WAVELENGTHS:
            raise ParameterDomainError(f"wavelength_index {self.wavelength_index} outside [0, {N_WAVELENGTHS - 1}]")
        if len(self.incidence_point) != 2 or not all(0 <= c < N_POINTS for c in self.incidence_point):
            raise ParameterDomainError(f"incidence_point {self.incidence_point} outside [0, {N_POINTS - 1}]^2")
        if not 0 <= self.incidence_angle_index < N_ANGLES:
            raise ParameterDomainError(f"incidence_angle_index {self.incidence_angle_index} outside [0, {N_ANGLES - 1}]")
        if not 0 <= self.phase_mask_seed < 2**64:
            raise ParameterDomainError("phase_mask_seed must be a 64-bit unsigned integer")
        if not (math.isfinite(self.power) and self.power > 0):
            raise ParameterDomainError("power must be positive and finite")

    def to_bytes(self) -> bytes:
        x, y = self.incidence_point
        return _PARAMS_STRUCT.pack(
            self.wavelength_index, x, y, self.incidence_angle_index, self.phase_mask_seed, self.power
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> LightParams:
        if len(data) != PARAMS_NBYTES:
            raise ParameterDomainError(f"light parameters encode to {PARAMS_NBYTES} bytes, got {len(data)}")
        wl, x, y, angle, mask, power = _PARAMS_STRUCT.unpack(data)
        return cls(wl, (x, y), angle, mask, power)


P_DEF = LightParams()
"""Public default parameters used for PIN generation and checking."""

GRID_SIZE = N_WAVELENGTHS * N_POINTS * N_POINTS * N_ANGLES * 2**64


def random_params(rng: np.random.Generator) -> LightParams:
    """Draw a uniformly random grid point (power fixed at 1.0)."""
    wl, x, y, angle = (int(v) for v in rng.integers(0, [N_WAVELENGTHS, N_POINTS, N_POINTS, N_ANGLES]))
    mask = int(rng.integers(0, 2**64, dtype=np.uint64))
    return LightParams(wl, (x, y), angle, mask)


@dataclass
class NoiseModel:
    """Multiplicative per-pixel intensity noise with a private generator."""

    sigma: float = 0.02
    rng_seed: int | None = None
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.sigma >= 0:
            raise ParameterDomainError("sigma must be >= 0")
        self.rng = np.random.default_rng(self.rng_seed)

    @classmethod
    def noiseless(cls) -> NoiseModel:
        return cls(sigma=0.0, rng_seed=0)

    def factors(self, shape) -> np.ndarray | None:
        """Per-pixel multiplicative factors ``1 + eps`` (float32), or None when noiseless."""
        if self.sigma == 0:
            return None
        f = self.rng.standard_normal(shape, dtype=np.float32)
        f *= np.float32(self.sigma)
        f += np.float32(1.0)
        return f


@dataclass(frozen=True, eq=False)
class SpecklePattern:
    """Mean-normalized, nonnegative intensity pattern."""

    intensities: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.intensities, dtype=np.float64)
        if arr.ndim != 1:
            raise ShapeError("speckle intensities must be one-dimensional")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ParameterDomainError("speckle intensities must be finite and nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "intensities", arr)

    def __len__(self) -> int:
        return self.intensities.size

    @property
    def contrast(self) -> float:
        return float(self.intensities.std() / self.intensities.mean())

    @classmethod
    def from_raw(cls, raw: np.ndarray) -> SpecklePattern:
        mean = raw.mean()
        if mean <= 0:
            raise DegenerateInputError("speckle has zero total intensity")
        return cls(raw / mean)


@lru_cache(maxsize=48)
def _transmission_matrix(seed: int, n_in: int, n_out: int, wavelength_index: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_MATRIX_STREAM, wavelength_index))
    rng = np.random.Generator(np.random.PCG64(ss))
    tm = rng.standard_normal((n_out, 2 * n_in), dtype=np.float32).view(np.complex64)
    tm *= np.float32(1.0 / math.sqrt(2.0 * n_in))
    tm.setflags(write=False)
    return tm


def derive_transmission_matrix(token: TokenDisorder, wavelength_index: int) -> np.ndarray:
    """Return the read-only (n_out, n_in) transmission matrix for one wavelength.

    Entries are circular complex Gaussian with variance ``1 / n_in``.
    """
    if not 0 <= wavelength_index < N_WAVELENGTHS:
        raise ParameterDomainError(f"wavelength_index {wavelength_index} outside [0, {N_WAVELENGTHS - 1}]")
    return _transmission_matrix(token.seed, token.n_in, token.n_out, int(wavelength_index))


@lru_cache(maxsize=4096)
def _input_field(params: LightParams, n_in: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=params.phase_mask_seed, spawn_key=(_MASK_STREAM, n_in))
    mask = np.random.Generator(np.random.PCG64(ss)).uniform(0.0, 2.0 * np.pi, n_in)
    # modes laid out on an 8x8 tile: a shift of the incidence point is a linear
    # phase ramp per axis, a tilt is a ramp across the tile index
    m = np.arange(n_in)
    mx, my = m % N_POINTS, (m // N_POINTS) % N_POINTS
    x, y = params.incidence_point
    ramp = 2.0 * np.pi * ((x * mx + y * my) / N_POINTS + params.incidence_angle_index * (m % 64) / 64.0)
    amp = math.sqrt(params.power / n_in)
    field_ = (amp * np.exp(1j * (mask + ramp))).astype(np.complex64)
    field_.setflags(write=False)
    return field_


def input_field(params: LightParams, n_in: int = DEFAULT_N_IN) -> np.ndarray:
    return _input_field(params, n_in)


def _clean_intensity(token: TokenDisorder, params: LightParams) -> np.ndarray:
    tm = derive_transmission_matrix(token, params.wavelength_index)
    u = tm @ _input_field(params, token.n_in)
    return (u.real.astype(np.float64) ** 2) + (u.imag.astype(np.float64) ** 2)


def interrogate(token: TokenDisorder, params: LightParams, noise: NoiseModel | None = None) -> SpecklePattern:
    """Shine light with ``params`` on ``token`` and record the speckle."""
    if not isinstance(params, LightParams):
        raise ParameterDomainError("params must be LightParams")
    raw = _clean_intensity(token, params)
    if noise is not None:
        f = noise.factors(raw.shape)
        if f is not None:
            f *= raw.astype(np.float32)
            raw = np.clip(f, 0.0, None).astype(np.float64)
    return SpecklePattern.from_raw(raw)


def interrogate_many(token: TokenDisorder, params: LightParams, noise: NoiseModel, count: int) -> np.ndarray:
    """Vectorized repeated interrogation; returns a (count, n_out) array.

    Row ``i`` holds the same pixel values, up to float32 rounding, that the
    ``i``-th successive call to :func:`interrogate` with the same noise
    generator would have produced.
    """
    raw = _clean_intensity(token, params).astype(np.float32)
    f = noise.factors((count, raw.size))
    if f is None:
        batch = np.repeat(raw[None, :], count, axis=0)
    else:
        f *= raw
        batch = np.maximum(f, np.float32(0.0), out=f)
    means = batch.mean(axis=1, keepdims=True, dtype=np.float64)
    if np.any(means <= 0):
        raise DegenerateInputError("speckle has zero total intensity")
    batch /= means.astype(np.float32)
    return batch


def speckle_correlation(a: SpecklePattern, b: SpecklePattern) -> float:
    """Pearson correlation between two patterns."""
    x, y = np.asarray(a.intensities), np.asarray(b.intensities)
    if x.shape != y.shape:
        raise ShapeError(f"pattern lengths differ: {x.size} vs {y.size}")
    xc, yc = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0:
        raise DegenerateInputError("correlation undefined for a constant pattern")
    return float(np.clip((xc @ yc) / denom, -1.0, 1.0))
