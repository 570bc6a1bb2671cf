"""Incremental GF(2) elimination for random fountain coding blocks.

Coefficient masks are Python ints: bit ``i`` set means original packet ``i``
of the block is part of the XOR. Payloads are carried through elimination as
ints of the same byte length so decoding is a read-out of the reduced rows.
"""

from __future__ import annotations

import random
from typing import Iterable, List, Optional, Sequence


class DimensionError(ValueError):
    """Mask or payload does not fit the decoder's block."""


class DecoderStateError(RuntimeError):
    """Operation not allowed in the decoder's current state."""


def mask_from_bits(bits: str) -> int:
    """Parse ``"101"`` style notation; character ``i`` is packet ``i``."""
    value = 0
    for i, ch in enumerate(bits):
        if ch == "1":
            value |= 1 << i
        elif ch != "0":
            raise ValueError(f"not a bit string: {bits!r}")
    return value


def mask_to_bits(mask: int, block_size: int) -> str:
    return "".join("1" if (mask >> i) & 1 else "0" for i in range(block_size))


def combine(mask: int, payloads: Sequence[bytes]) -> bytes:
    """XOR of the payloads selected by ``mask`` (all-zero for the empty mask)."""
    if not payloads:
        raise DimensionError("empty block")
    length = len(payloads[0])
    acc = 0
    i = 0
    while mask:
        if mask & 1:
            acc ^= int.from_bytes(payloads[i], "little")
        mask >>= 1
        i += 1
    return acc.to_bytes(length, "little")


class Gf2Decoder:
    """Online row-reduced basis for one coding block.

    ``pivots`` maps a leading bit to its reduced row. Every stored row has
    exactly one pivot bit set, so a full-rank decoder holds unit vectors and
    their payloads are the original packets.
    """

    def __init__(self, block_size: int, payload_len: Optional[int] = None):
        if block_size < 1:
            raise DimensionError("block size must be positive")
        self.block_size = block_size
        self.payload_len = payload_len
        self.pivots: dict[int, int] = {}
        self.payloads: dict[int, int] = {}
        self._pivot_bits = 0
        self._full = (1 << block_size) - 1

    @property
    def rank(self) -> int:
        return len(self.pivots)

    def is_full_rank(self) -> bool:
        return len(self.pivots) == self.block_size

    def reduce(self, mask: int) -> int:
        """Residual of ``mask`` against the stored basis (0 iff dependent)."""
        hit = mask & self._pivot_bits
        while hit:
            low = hit & -hit
            mask ^= self.pivots[low.bit_length() - 1]
            hit &= hit - 1
        return mask

    def absorb(self, mask: int, payload: Optional[bytes] = None) -> bool:
        """Add a coded packet; return True iff it raised the rank."""
        if mask < 0 or mask & ~self._full:
            raise DimensionError(
                f"mask has bits beyond block size {self.block_size}"
            )
        if payload is not None and self.payload_len is not None:
            if len(payload) != self.payload_len:
                raise DimensionError(
                    f"payload length {len(payload)} != {self.payload_len}"
                )
        value = int.from_bytes(payload, "little") if payload is not None else 0
        if payload is not None and self.payload_len is None:
            self.payload_len = len(payload)

        # pivot rows share no pivot bits, so each hit is cleared exactly once
        hit = mask & self._pivot_bits
        while hit:
            low = hit & -hit
            lead = low.bit_length() - 1
            mask ^= self.pivots[lead]
            value ^= self.payloads[lead]
            hit &= hit - 1
        if mask == 0:
            return False

        lead = mask.bit_length() - 1
        bit = 1 << lead
        for other, row in self.pivots.items():
            if row & bit:
                self.pivots[other] = row ^ mask
                self.payloads[other] ^= value
        self.pivots[lead] = mask
        self.payloads[lead] = value
        self._pivot_bits |= bit
        return True

    def decode(self) -> List[bytes]:
        """Original payloads in block order; requires full rank."""
        if not self.is_full_rank():
            raise DecoderStateError(
                f"rank {self.rank} < block size {self.block_size}"
            )
        if self.payload_len is None:
            raise DecoderStateError("no payloads were absorbed")
        out = []
        for i in range(self.block_size):
            if self.pivots[i] != 1 << i:
                raise DecoderStateError("basis is not fully reduced")
            out.append(self.payloads[i].to_bytes(self.payload_len, "little"))
        return out


def gf2_rank(masks: Iterable[int]) -> int:
    """Rank of a set of bit-rows (batch helper, independent of Gf2Decoder)."""
    basis: dict[int, int] = {}
    for m in masks:
        while m:
            lead = m.bit_length() - 1
            if lead in basis:
                m ^= basis[lead]
            else:
                basis[lead] = m
                break
    return len(basis)


def random_mask(block_size: int, rng: random.Random) -> int:
    """Uniform over all 2**block_size masks, the empty mask included."""
    return rng.getrandbits(block_size)


def full_rank_rate(
    block_size: int, extra: int, trials: int, rng: random.Random
) -> float:
    """Fraction of trials where ``block_size + extra`` uniform masks span GF(2)^B."""
    hits = 0
    for _ in range(trials):
        dec = Gf2Decoder(block_size)
        for _ in range(block_size + extra):
            dec.absorb(random_mask(block_size, rng))
            if dec.is_full_rank():
                hits += 1
                break
    return hits / trials
