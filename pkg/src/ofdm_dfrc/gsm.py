"""Generalized spatial modulation: bits <-> active-antenna patterns.

The dictionary is the lexicographic (combinadic) order of the selectable
antenna subsets.  With ``fixed_endpoints`` antennas ``0`` and ``N_t - 1`` are
always active and only the middle ``N_x - 2`` antennas carry information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class PatternError(ValueError):
    pass


@dataclass(frozen=True)
class AntennaPattern:
    indices: tuple[int, ...]
    fixed_endpoints: bool = False

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise PatternError(f"indices must be strictly increasing: {idx}")

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, n):
        return n in self.indices

    def position(self, n: int) -> int:
        return self.indices.index(n)

    def check(self, N_t: int, N_x: int) -> "AntennaPattern":
        if len(self.indices) != N_x:
            raise PatternError(f"pattern has {len(self.indices)} antennas, expected {N_x}")
        if self.indices and (self.indices[0] < 0 or self.indices[-1] > N_t - 1):
            raise PatternError(f"pattern {self.indices} outside [0, {N_t - 1}]")
        if self.fixed_endpoints and (self.indices[0] != 0 or self.indices[-1] != N_t - 1):
            raise PatternError("fixed-endpoint pattern must contain antennas 0 and N_t-1")
        return self


def _check_args(N_t: int, N_x: int, fixed_endpoints: bool) -> None:
    low = 2 if fixed_endpoints else 1
    if not low <= N_x <= N_t:
        raise PatternError(f"need {low} <= N_x <= N_t, got N_x={N_x}, N_t={N_t}")


def _free_set(N_t: int, N_x: int, fixed_endpoints: bool) -> tuple[int, int, int]:
    """(offset, pool size, picks) of the information-carrying sub-selection."""
    if fixed_endpoints:
        return 1, N_t - 2, N_x - 2
    return 0, N_t, N_x


def pattern_count(N_t: int, N_x: int, fixed_endpoints: bool = False) -> int:
    _check_args(N_t, N_x, fixed_endpoints)
    _, pool, picks = _free_set(N_t, N_x, fixed_endpoints)
    return math.comb(pool, picks)


def bits_per_pattern(N_t: int, N_x: int, fixed_endpoints: bool = False) -> int:
    """Index bits per OFDM symbol, ``floor(log2(pattern_count))``."""
    return pattern_count(N_t, N_x, fixed_endpoints).bit_length() - 1


def ordered_pattern_count(N_t: int, N_x: int) -> int:
    """Number of ordered selections, i.e. patterns together with the
    assignment of the ``N_x`` private subcarriers to the active antennas."""
    _check_args(N_t, N_x, False)
    return math.perm(N_t, N_x)


def bits_per_ordered_pattern(N_t: int, N_x: int) -> int:
    return ordered_pattern_count(N_t, N_x).bit_length() - 1


def _rank_combination(combo: Sequence[int], pool: int) -> int:
    k = len(combo)
    rank = 0
    prev = -1
    for j, c in enumerate(combo):
        for v in range(prev + 1, c):
            rank += math.comb(pool - 1 - v, k - 1 - j)
        prev = c
    return rank


def _unrank_combination(rank: int, pool: int, k: int) -> list[int]:
    combo = []
    v = 0
    for j in range(k):
        while True:
            block = math.comb(pool - 1 - v, k - 1 - j)
            if rank < block:
                break
            rank -= block
            v += 1
        combo.append(v)
        v += 1
    return combo


def encode_pattern(bits: int, N_t: int, N_x: int, fixed_endpoints: bool = False) -> AntennaPattern:
    """Map a ``B``-bit integer to the pattern of the same lexicographic rank."""
    B = bits_per_pattern(N_t, N_x, fixed_endpoints)
    bits = int(bits)
    if not 0 <= bits < (1 << B):
        raise PatternError(f"bits={bits} out of range for B={B}")
    offset, pool, picks = _free_set(N_t, N_x, fixed_endpoints)
    free = [offset + v for v in _unrank_combination(bits, pool, picks)]
    if fixed_endpoints:
        free = [0] + free + [N_t - 1]
    return AntennaPattern(tuple(free), fixed_endpoints)


def pattern_rank(p: AntennaPattern, N_t: int) -> int:
    N_x = len(p)
    _check_args(N_t, N_x, p.fixed_endpoints)
    p.check(N_t, N_x)
    offset, pool, _ = _free_set(N_t, N_x, p.fixed_endpoints)
    free = p.indices[1:-1] if p.fixed_endpoints else p.indices
    return _rank_combination([n - offset for n in free], pool)


def decode_pattern(p: AntennaPattern, N_t: int) -> int:
    """Inverse of :func:`encode_pattern`.

    Patterns whose rank is ``>= 2**B`` are never produced by the encoder and
    raise :class:`PatternError` ("unencodable pattern").
    """
    rank = pattern_rank(p, N_t)
    B = bits_per_pattern(N_t, len(p), p.fixed_endpoints)
    if rank >= (1 << B):
        raise PatternError(f"unencodable pattern: rank {rank} >= 2**{B}")
    return rank


def int_to_bits(value: int, width: int) -> list[int]:
    """MSB-first bit list."""
    return [(value >> (width - 1 - k)) & 1 for k in range(width)]


def bits_to_int(bits: Sequence[int]) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out
