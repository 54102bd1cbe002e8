"""Bit strings, the truncated hash, and the hash-counter PRNG.

Bit strings are MSB-first: bit 0 is the most significant bit of the first
byte. When a length is not a multiple of 8 the byte encoding is padded
with zero bits at the end.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

DEFAULT_LAMBDA = 128
MAX_LAMBDA = 256  # truncation of a 256-bit digest


@dataclass(frozen=True, slots=True)
class BitString:
    value: int
    nbits: int

    def __post_init__(self):
        if self.nbits < 0:
            raise ValueError(f"negative length {self.nbits}")
        if self.value < 0 or self.value >> self.nbits:
            raise ValueError(f"value does not fit in {self.nbits} bits")

    @classmethod
    def zeros(cls, nbits: int) -> BitString:
        return cls(0, nbits)

    @classmethod
    def ones(cls, nbits: int) -> BitString:
        return cls((1 << nbits) - 1, nbits)

    @classmethod
    def from_bytes(cls, data: bytes, nbits: int | None = None) -> BitString:
        total = len(data) * 8
        if nbits is None:
            nbits = total
        if not total - 8 < nbits <= total and not (nbits == 0 and total == 0):
            raise ValueError(f"{len(data)} bytes cannot hold exactly {nbits} bits")
        return cls(int.from_bytes(data, "big") >> (total - nbits), nbits)

    @classmethod
    def from_hex(cls, text: str, nbits: int | None = None) -> BitString:
        return cls.from_bytes(bytes.fromhex(text), nbits)

    def to_bytes(self) -> bytes:
        pad = -self.nbits % 8
        return (self.value << pad).to_bytes((self.nbits + pad) // 8, "big")

    def hex(self) -> str:
        return self.to_bytes().hex()

    def __len__(self) -> int:
        return self.nbits

    def __xor__(self, other: BitString) -> BitString:
        return xor(self, other)

    def bit(self, index: int) -> int:
        if not 0 <= index < self.nbits:
            raise IndexError(index)
        return (self.value >> (self.nbits - 1 - index)) & 1

    def flip(self, index: int) -> BitString:
        if not 0 <= index < self.nbits:
            raise IndexError(index)
        return BitString(self.value ^ (1 << (self.nbits - 1 - index)), self.nbits)

    def __repr__(self) -> str:
        return f"BitString({self.hex()!r}, nbits={self.nbits})"


def xor(a: BitString, b: BitString) -> BitString:
    if a.nbits != b.nbits:
        raise ValueError(f"xor of {a.nbits}-bit and {b.nbits}-bit strings")
    return BitString(a.value ^ b.value, a.nbits)


def concat(*parts: BitString) -> BitString:
    value = 0
    nbits = 0
    for p in parts:
        value = (value << p.nbits) | p.value
        nbits += p.nbits
    return BitString(value, nbits)


def split(b: BitString) -> tuple[BitString, BitString]:
    if b.nbits % 2:
        raise ValueError(f"cannot split odd length {b.nbits}")
    half = b.nbits // 2
    return BitString(b.value >> half, half), BitString(b.value & ((1 << half) - 1), half)


def first_half(b: BitString) -> BitString:
    return split(b)[0]


def second_half(b: BitString) -> BitString:
    return split(b)[1]


def encode_u64(i: int) -> BitString:
    if not 0 <= i < 1 << 64:
        raise ValueError(f"{i} does not fit in 64 bits")
    return BitString(i, 64)


def check_lambda(lambda_bits: int) -> int:
    if lambda_bits <= 0 or lambda_bits % 2 or lambda_bits > MAX_LAMBDA:
        raise ValueError(f"lambda must be even and in 2..{MAX_LAMBDA}, got {lambda_bits}")
    return lambda_bits


def _digest(data: bytes, nbits: int) -> BitString:
    d = hashlib.sha256(data).digest()
    return BitString(int.from_bytes(d, "big") >> (256 - nbits), nbits)


class HashFunction:
    """SHA-256 truncated to the first ``output_bits`` bits, with a call counter."""

    def __init__(self, output_bits: int = DEFAULT_LAMBDA):
        self.output_bits = check_lambda(output_bits)
        self.call_counter = 0

    def __call__(self, data: bytes | BitString) -> BitString:
        if isinstance(data, BitString):
            data = data.to_bytes()
        self.call_counter += 1
        return _digest(data, self.output_bits)


def hash_bits(data: bytes | BitString, output_bits: int = DEFAULT_LAMBDA) -> BitString:
    """Uncounted evaluation of the same function."""
    if isinstance(data, BitString):
        data = data.to_bytes()
    return _digest(data, check_lambda(output_bits))


def seed_bytes(seed: int | bytes | str | None) -> bytes:
    if seed is None:
        return os.urandom(16)
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, str):
        return seed.encode()
    return encode_u64(seed).to_bytes()


class Prng:
    """Counter-mode stream: draw ``c`` is ``H(seed || u64(c))``.

    Integer seeds are encoded as 8 bytes big-endian, so seed ``1`` is
    ``00..01``.
    """

    def __init__(self, seed: int | bytes | str | None = None, output_bits: int = DEFAULT_LAMBDA):
        self.seed = seed_bytes(seed)
        self.output_bits = check_lambda(output_bits)
        self.draw_counter = 0

    def draw(self) -> BitString:
        out = _digest(self.seed + self.draw_counter.to_bytes(8, "big"), self.output_bits)
        self.draw_counter += 1
        return out

    def bit(self) -> int:
        return self.draw().value & 1

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        width = max(1, (n - 1).bit_length())
        if width > self.output_bits:
            raise ValueError(f"n={n} exceeds a single draw")
        while True:
            v = self.draw().value >> (self.output_bits - width)
            if v < n:
                return v

    def child(self, label: int | bytes) -> Prng:
        """Independent stream for a sub-task, e.g. one game trial."""
        if isinstance(label, int):
            label = label.to_bytes(8, "big")
        return Prng(hashlib.sha256(b"child" + self.seed + label).digest(), self.output_bits)


def draw(p: Prng) -> BitString:
    return p.draw()
