import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srwin.gf2 import (
    DecoderStateError,
    DimensionError,
    Gf2Decoder,
    combine,
    full_rank_rate,
    gf2_rank,
    mask_from_bits,
    mask_to_bits,
)


def b(bits):
    return mask_from_bits(bits)


def test_bit_notation_round_trip():
    assert b("101") == 0b101
    assert b("011") == 0b110
    assert mask_to_bits(b("0110"), 4) == "0110"
    with pytest.raises(ValueError):
        mask_from_bits("102")


def test_duplicate_mask_is_dependent():
    dec = Gf2Decoder(3)
    assert dec.absorb(b("101")) is True
    assert dec.absorb(b("101")) is False
    assert dec.rank == 1


def test_identity_basis():
    dec = Gf2Decoder(3)
    assert [dec.absorb(b(m)) for m in ("100", "010", "001")] == [True, True, True]
    assert dec.rank == 3 and dec.is_full_rank()


def test_third_mask_is_sum_of_first_two():
    dec = Gf2Decoder(3)
    assert [dec.absorb(b(m)) for m in ("101", "011", "110")] == [True, True, False]
    assert dec.rank == 2


def test_empty_decoder_not_full_rank():
    assert not Gf2Decoder(1).is_full_rank()


def test_mask_wider_than_block_rejected():
    dec = Gf2Decoder(3)
    with pytest.raises(DimensionError):
        dec.absorb(1 << 3)


def test_payload_length_mismatch_rejected():
    dec = Gf2Decoder(2, payload_len=4)
    with pytest.raises(DimensionError):
        dec.absorb(1, b"abc")


def test_dependent_absorb_leaves_state_unchanged():
    dec = Gf2Decoder(3)
    dec.absorb(b("101"), b"\x01")
    dec.absorb(b("011"), b"\x02")
    before = (dict(dec.pivots), dict(dec.payloads))
    assert not dec.absorb(b("110"), b"\x03")
    assert (dec.pivots, dec.payloads) == before


def test_decode_single():
    dec = Gf2Decoder(1)
    dec.absorb(1, b"P")
    assert dec.decode() == [b"P"]


def test_decode_back_substitution():
    p1, p2 = b"\x0f\xa0", b"\x33\x01"
    x = bytes(a ^ c for a, c in zip(p1, p2))
    dec = Gf2Decoder(2)
    dec.absorb(b("11"), x)
    dec.absorb(b("01"), p2)
    assert dec.decode() == [p1, p2]


def test_decode_requires_full_rank():
    dec = Gf2Decoder(2)
    dec.absorb(1, b"a")
    with pytest.raises(DecoderStateError):
        dec.decode()


def test_reduce_zero_iff_dependent():
    dec = Gf2Decoder(4)
    dec.absorb(b("1100"))
    dec.absorb(b("0110"))
    assert dec.reduce(b("1010")) == 0
    assert dec.reduce(b("0001")) != 0


def _independent_masks(B, rng):
    masks = []
    while len(masks) < B:
        m = rng.getrandbits(B)
        if gf2_rank(masks + [m]) == len(masks) + 1:
            masks.append(m)
    return masks


@settings(max_examples=60, deadline=None)
@given(B=st.integers(1, 64), seed=st.integers(0, 2**32))
def test_round_trip_identity(B, seed):
    rng = random.Random(seed)
    payloads = [rng.randbytes(8) for _ in range(B)]
    dec = Gf2Decoder(B)
    for m in _independent_masks(B, rng):
        assert dec.absorb(m, combine(m, payloads))
    assert dec.decode() == payloads


@settings(max_examples=80, deadline=None)
@given(B=st.integers(1, 40), masks=st.lists(st.integers(0, 2**40 - 1), max_size=60))
def test_rank_monotone_and_true_count(B, masks):
    dec = Gf2Decoder(B)
    trues = 0
    last = 0
    for m in masks:
        m &= (1 << B) - 1
        before = dec.rank
        got = dec.absorb(m)
        assert dec.rank == before + int(got)
        assert last <= dec.rank <= B
        last = dec.rank
        trues += got
    assert trues == dec.rank
    # batch elimination is an independent rank oracle
    assert dec.rank == gf2_rank(m & ((1 << B) - 1) for m in masks)


@settings(max_examples=60, deadline=None)
@given(B=st.integers(1, 30), masks=st.lists(st.integers(0, 2**30 - 1), max_size=40))
def test_pivot_rows_stay_reduced(B, masks):
    dec = Gf2Decoder(B)
    for m in masks:
        dec.absorb(m & ((1 << B) - 1))
    for lead, row in dec.pivots.items():
        assert row.bit_length() - 1 == lead
        for other, orow in dec.pivots.items():
            if other != lead:
                assert not (orow >> lead) & 1


@settings(max_examples=40, deadline=None)
@given(B=st.integers(1, 16), seed=st.integers(0, 2**32), n=st.integers(0, 30))
def test_payload_rows_track_masks(B, seed, n):
    rng = random.Random(seed)
    payloads = [rng.randbytes(4) for _ in range(B)]
    dec = Gf2Decoder(B)
    for _ in range(n):
        m = rng.getrandbits(B)
        dec.absorb(m, combine(m, payloads))
    for lead, row in dec.pivots.items():
        want = int.from_bytes(combine(row, payloads), "little")
        assert dec.payloads[lead] == want


def test_full_rank_rate_square_random_matrix():
    # prod_{k>=1} (1 - 2^-k) = 0.288788...
    rate = full_rank_rate(32, 0, 10_000, random.Random(11))
    assert abs(rate - 0.2888) <= 0.01
