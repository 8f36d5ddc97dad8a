import math
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ofdm_dfrc.gsm import (AntennaPattern, PatternError, bits_per_pattern, bits_to_int, decode_pattern,
                           encode_pattern, int_to_bits, pattern_count, pattern_rank)


def test_counts():
    assert pattern_count(32, 5) == 201376
    assert pattern_count(32, 5, True) == 4060
    assert pattern_count(7, 7) == 1
    assert bits_per_pattern(32, 5) == 17
    assert bits_per_pattern(32, 5, True) == 11
    assert bits_per_pattern(2, 2) == 0


def test_small_fixed_endpoint_codebook():
    assert encode_pattern(0, 6, 3, True).indices == (0, 1, 5)
    assert encode_pattern(3, 6, 3, True).indices == (0, 4, 5)
    assert decode_pattern(AntennaPattern((0, 1, 5), True), 6) == 0
    assert decode_pattern(AntennaPattern((0, 4, 5), True), 6) == 3


def test_lexicographic_order_matches_itertools():
    # itertools.combinations yields subsets in lexicographic order
    for rank, combo in enumerate(combinations(range(9), 4)):
        assert pattern_rank(AntennaPattern(combo), 9) == rank


def test_unencodable_rank():
    # the lexicographically last middle choice has rank C(30,3)-1 = 4059 >= 2**11
    last = AntennaPattern((0, 28, 29, 30, 31), True)
    assert pattern_rank(last, 32) == 4059
    with pytest.raises(PatternError, match="unencodable"):
        decode_pattern(last, 32)


def test_encode_out_of_range():
    with pytest.raises(PatternError):
        encode_pattern(2 ** 11, 32, 5, True)


def test_pattern_invariants():
    with pytest.raises(PatternError):
        AntennaPattern((3, 1))
    with pytest.raises(PatternError):
        AntennaPattern((1, 2, 3), True).check(6, 3)


@pytest.mark.parametrize("fixed", [False, True])
def test_round_trip_exhaustive_8_3(fixed):
    B = bits_per_pattern(8, 3, fixed)
    for x in range(2 ** B):
        p = encode_pattern(x, 8, 3, fixed)
        p.check(8, 3)
        assert decode_pattern(p, 8) == x


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12).flatmap(lambda n: st.tuples(st.just(n), st.integers(2, n))), st.booleans(),
       st.data())
def test_round_trip_property(nt_nx, fixed, data):
    N_t, N_x = nt_nx
    B = bits_per_pattern(N_t, N_x, fixed)
    x = data.draw(st.integers(0, 2 ** B - 1))
    p = encode_pattern(x, N_t, N_x, fixed)
    assert len(p) == N_x and p.fixed_endpoints == fixed
    if fixed:
        assert p.indices[0] == 0 and p.indices[-1] == N_t - 1
    assert decode_pattern(p, N_t) == x


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(8, 40))
def test_bits_monotone_in_antennas(N_x, N_t):
    assert bits_per_pattern(N_t + 1, N_x) >= bits_per_pattern(N_t, N_x)
    assert bits_per_pattern(N_t, N_x) == int(math.floor(math.log2(math.comb(N_t, N_x))))


def test_bit_packing():
    assert int_to_bits(5, 4) == [0, 1, 0, 1]
    assert bits_to_int([1, 0, 1, 1]) == 11
