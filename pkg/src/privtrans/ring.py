"""Fixed-point arithmetic over a power-of-two ring Z_{2^m}.

Values are embedded two's-complement style: a real number x is encoded as
round(x * 2**frac_bits) mod 2**modulus_bits. All tensors store unsigned
64-bit words; reduction mod 2**modulus_bits is a bitmask, and for the
default modulus_bits=64 the native uint64 wraparound already is the ring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class RingParams:
    """Ring and fixed-point geometry.

    value_bits is the width of a decoded value (1 sign + int + frac),
    frac_bits the fraction part. modulus_bits must leave enough headroom
    for one full matmul reduction: 2*value_bits + log2(reduction dim).
    """

    modulus_bits: int = 64
    value_bits: int = 15
    frac_bits: int = 8

    def __post_init__(self):
        if not (1 <= self.modulus_bits <= 64):
            raise ValueError("modulus_bits must be in [1, 64]")
        if not (1 <= self.frac_bits < self.value_bits):
            raise ValueError("frac_bits must be in [1, value_bits)")
        if 2 * self.value_bits > self.modulus_bits:
            raise ValueError("no headroom: need modulus_bits >= 2*value_bits")

    @property
    def mask(self) -> np.uint64:
        if self.modulus_bits == 64:
            return MASK64
        return np.uint64((1 << self.modulus_bits) - 1)

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def max_reduction_dim(self) -> int:
        """Largest inner dimension a single product-sum may reduce over."""
        return 1 << (self.modulus_bits - 2 * self.value_bits)

    def check_reduction_dim(self, k: int) -> None:
        if k > self.max_reduction_dim:
            raise ValueError(
                f"reduction dim {k} exceeds headroom "
                f"(max {self.max_reduction_dim} for these ring params)"
            )

    # -- scalar embedding ------------------------------------------------

    def wrap(self, arr: np.ndarray) -> np.ndarray:
        return (arr.astype(np.uint64) & self.mask).astype(np.uint64)

    def to_signed(self, arr: np.ndarray) -> np.ndarray:
        """Interpret ring elements as signed ints in [-2^(m-1), 2^(m-1))."""
        up = np.uint64(64 - self.modulus_bits)
        a = np.ascontiguousarray(arr, dtype=np.uint64)
        return (a << up).view(np.int64) >> np.int64(64 - self.modulus_bits)

    def from_signed(self, arr: np.ndarray) -> np.ndarray:
        return self.wrap(np.asarray(arr, dtype=np.int64).view(np.uint64))

    def encode(self, x) -> np.ndarray:
        """fx_encode: round(x * 2^frac_bits), embedded in the ring.

        Rounds half away from zero so encode(1.5) with frac_bits=8 is
        exactly 384 and encode(-1.0) is 2^m - 256.
        """
        x = np.asarray(x, dtype=np.float64)
        scaled = x * self.scale
        q = np.where(scaled >= 0, np.floor(scaled + 0.5), np.ceil(scaled - 0.5))
        return self.from_signed(q.astype(np.int64))

    def decode(self, arr: np.ndarray) -> np.ndarray:
        """fx_decode: signed interpretation divided by the scale."""
        return self.to_signed(arr).astype(np.float64) / self.scale

    def value_limit(self) -> int:
        """Largest encoded magnitude after saturation: 2^(value_bits-1)-1."""
        return (1 << (self.value_bits - 1)) - 1


DEFAULT_RING = RingParams()


class FixedTensor:
    """A rows x cols matrix of ring elements (row-major uint64 words)."""

    __slots__ = ("data", "ring")

    def __init__(self, data: np.ndarray, ring: RingParams = DEFAULT_RING):
        data = np.asarray(data)
        if data.ndim != 2:
            raise ValueError("FixedTensor is strictly 2-D")
        self.data = ring.wrap(data)
        self.ring = ring

    # -- constructors ----------------------------------------------------

    @classmethod
    def from_float(cls, x, ring: RingParams = DEFAULT_RING) -> "FixedTensor":
        return cls(ring.encode(np.atleast_2d(x)), ring)

    @classmethod
    def from_signed(cls, x, ring: RingParams = DEFAULT_RING) -> "FixedTensor":
        return cls(ring.from_signed(np.atleast_2d(np.asarray(x))), ring)

    @classmethod
    def zeros(cls, rows: int, cols: int, ring: RingParams = DEFAULT_RING) -> "FixedTensor":
        return cls(np.zeros((rows, cols), dtype=np.uint64), ring)

    # -- views -----------------------------------------------------------

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def signed(self) -> np.ndarray:
        return self.ring.to_signed(self.data)

    def to_float(self) -> np.ndarray:
        return self.ring.decode(self.data)

    def copy(self) -> "FixedTensor":
        return FixedTensor(self.data.copy(), self.ring)

    def _same_ring(self, other: "FixedTensor") -> None:
        if self.ring != other.ring:
            raise ValueError("ring params mismatch")

    # -- ring arithmetic (all exact mod 2^m) -------------------------------

    def __add__(self, other: "FixedTensor") -> "FixedTensor":
        self._same_ring(other)
        return FixedTensor(self.data + other.data, self.ring)

    def __sub__(self, other: "FixedTensor") -> "FixedTensor":
        self._same_ring(other)
        return FixedTensor(self.data - other.data, self.ring)

    def __neg__(self) -> "FixedTensor":
        return FixedTensor(np.uint64(0) - self.data, self.ring)

    def __mul__(self, other: "FixedTensor") -> "FixedTensor":
        """Elementwise ring product (scales add; no rescale here)."""
        self._same_ring(other)
        return FixedTensor(self.data * other.data, self.ring)

    def scalar_mul(self, k: int) -> "FixedTensor":
        """Multiply every element by a ring scalar (e.g. an encoded constant)."""
        return FixedTensor(self.data * np.uint64(k & 0xFFFFFFFFFFFFFFFF), self.ring)

    def lshift(self, bits: int) -> "FixedTensor":
        """Exact rescale up by 2^bits (used to align fixed-point scales)."""
        return FixedTensor(self.data << np.uint64(bits), self.ring)

    def transpose(self) -> "FixedTensor":
        return FixedTensor(self.data.T.copy(), self.ring)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FixedTensor)
            and self.ring == other.ring
            and bool(np.array_equal(self.data, other.data))
        )

    def __repr__(self) -> str:
        return f"FixedTensor({self.rows}x{self.cols}, m={self.ring.modulus_bits})"


def mat_mul(a: FixedTensor, b: FixedTensor, check_headroom: bool = False) -> FixedTensor:
    """Ring matrix product a @ b mod 2^m.

    uint64 matmul wraps mod 2^64 natively; smaller moduli re-mask after.
    Associativity and distribution hold exactly because the ring does.
    """
    a._same_ring(b)
    if a.cols != b.rows:
        raise ValueError(f"shape mismatch {a.shape} @ {b.shape}")
    if check_headroom:
        a.ring.check_reduction_dim(a.cols)
    return FixedTensor(a.data @ b.data, a.ring)


def truncate(t: FixedTensor) -> FixedTensor:
    """Arithmetic shift right by frac_bits, saturating to value_bits.

    This is the rescale after a fixed-point multiply: floor division by
    2^frac_bits on the signed value, then clamping so the magnitude stays
    strictly below 2^(value_bits-1).
    """
    ring = t.ring
    shifted = t.signed() >> np.int64(ring.frac_bits)
    lim = ring.value_limit()
    return FixedTensor(ring.from_signed(np.clip(shifted, -lim, lim)), ring)


def fx_encode(x, ring: RingParams = DEFAULT_RING) -> np.ndarray:
    return ring.encode(x)


def fx_decode(arr, ring: RingParams = DEFAULT_RING) -> np.ndarray:
    return ring.decode(np.asarray(arr, dtype=np.uint64))
