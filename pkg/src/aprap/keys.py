"""Key generation, partial keys, session keys and the tag key update."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .primitives import (
    BitString,
    HashFunction,
    Prng,
    check_lambda,
    concat,
    encode_u64,
)

MAX_PERIOD = 2**32


@dataclass(frozen=True)
class MasterKey:
    sk_star: BitString

    def __repr__(self) -> str:
        return "MasterKey(<hidden>)"


@dataclass(frozen=True)
class SharedKey:
    k: BitString
    period: int

    def __post_init__(self):
        if not 1 <= self.period <= MAX_PERIOD:
            raise ValueError(f"period {self.period} outside 1..{MAX_PERIOD}")


@dataclass(frozen=True)
class PartialKey:
    x: BitString
    period: int


@dataclass(frozen=True)
class SessionKey:
    sk: BitString
    period: int


def keygen(lambda_bits: int, tag_count: int, rng: Prng) -> list[tuple[MasterKey, SharedKey]]:
    """Draw ``(SK*, k_1)`` for each tag, in that order, from ``rng``."""
    check_lambda(lambda_bits)
    if tag_count < 1:
        raise ValueError("tag_count must be at least 1")
    if rng.output_bits != lambda_bits:
        raise ValueError(f"rng draws {rng.output_bits} bits, expected {lambda_bits}")
    pairs = []
    for _ in range(tag_count):
        sk_star = rng.draw()
        k1 = rng.draw()
        pairs.append((MasterKey(sk_star), SharedKey(k1, 1)))
    return pairs


def partial_key(i: int, sk_star: MasterKey, k_i: SharedKey, h: HashFunction) -> PartialKey:
    """``x_i = H(u64(i) || SK* || k_i)``; one hash call."""
    if k_i.period != i:
        raise ValueError(f"key is for period {k_i.period}, not {i}")
    x = h(concat(encode_u64(i), sk_star.sk_star, k_i.k))
    return PartialKey(x, i)


def _half_lengths(lambda_bits: int, *halves: BitString) -> None:
    for half in halves:
        if half.nbits * 2 != lambda_bits:
            raise ValueError(f"expected a {lambda_bits // 2}-bit half, got {half.nbits} bits")


def session_key(
    i: int, k_half: BitString, x_half: BitString, lambda_bits: int | None = None
) -> SessionKey:
    if lambda_bits is None:
        lambda_bits = 2 * k_half.nbits
    _half_lengths(lambda_bits, k_half, x_half)
    return SessionKey(concat(k_half, x_half), i)


def update_key(
    i: int,
    k_second_half: BitString,
    x_second_half: BitString,
    x_s: BitString,
    h: Callable[[BitString], BitString],
) -> SharedKey:
    """``k_{i+1} = H(k_i'' || x_i'' || x_s)``; one hash call.

    The caller is responsible for dropping its references to the inputs.
    """
    _half_lengths(x_s.nbits, k_second_half, x_second_half)
    if i + 1 > MAX_PERIOD:
        raise OverflowError("period counter exhausted")
    return SharedKey(h(concat(k_second_half, x_second_half, x_s)), i + 1)
