"""SR-FEC: block-structured random fountain coding over selective repeat.

Two coding modes:

``ideal``
    Every arriving coded packet is innovative until the block reaches rank
    B, so transmissions per block are negative binomial. The receiver
    absorbs arrivals against the systematic basis (arrival r carries
    original packet r).
``oblivious``
    Masks are uniform over all 2**B subsets, empty included, reproduced at
    the receiver from ``(block_seq, tx_index)`` with :func:`mask_from`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, List, NamedTuple, Optional, Tuple

from .gf2 import Gf2Decoder, combine

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MODES = ("ideal", "oblivious")


def mix64(z: int) -> int:
    """SplitMix64 finalizer."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mask_from(key: int, block_seq: int, tx_index: int, block_size: int) -> int:
    """Coefficient mask of coded packet ``(block_seq, tx_index)``.

    Low ``block_size`` bits of consecutive 64-bit words, word 0 lowest.
    """
    h = mix64(key ^ mix64(block_seq & MASK64))
    h = mix64(h ^ mix64((tx_index + GOLDEN) & MASK64))
    words = (block_size + 63) // 64
    value = 0
    for j in range(words):
        value |= mix64((h + (j + 1) * GOLDEN) & MASK64) << (64 * j)
    return value & ((1 << block_size) - 1)


@dataclass(frozen=True)
class CodedUnit:
    block_seq: int
    tx_index: int
    payload: Optional[bytes] = None


@dataclass(frozen=True)
class BlockAck:
    block_seq: int


class UsageError(RuntimeError):
    pass


@dataclass
class _TxBlock:
    acked: int = 0
    assigned: int = 0  # credits handed out: acked + in flight + awaiting resend
    next_tx: int = 0
    in_flight: Deque[int] = field(default_factory=deque)  # tx indices, send order


class FecSender:
    """Credit-based block sender.

    Block b* receives one credit per new transmission until it holds B
    credits, then b* advances. A credit is retired by an ACK; a timed-out
    credit is re-served with a fresh coded packet. The number of unretired
    credits is the window occupancy and never exceeds W.
    """

    def __init__(
        self,
        window: int,
        block_size: int,
        rtt: int,
        mode: str = "ideal",
        mask_key: int = 0,
        source_fn: Optional[Callable[[int, int], bytes]] = None,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if window < 1 or block_size < 1 or rtt < 1:
            raise ValueError("window, block_size and rtt must be >= 1")
        self.window = window
        self.block_size = block_size
        self.rtt = rtt
        self.mode = mode
        self.mask_key = mask_key
        self.next_block = 0  # b*
        self.base_block = 0  # lowest block not yet released
        self.blocks: Dict[int, _TxBlock] = {}
        self.retransmit_queue: Deque[int] = deque()
        self.outstanding = 0
        self._timers: Deque[Tuple[int, int, int]] = deque()  # (deadline, block, tx)
        self._source_fn = source_fn

    def on_ack(self, block_seq: int) -> None:
        st = self.blocks.get(block_seq)
        if st is None or st.acked >= self.block_size:
            return
        if st.in_flight:
            st.in_flight.popleft()
        else:
            # ACK for a credit that already timed out: cancel its resend
            try:
                self.retransmit_queue.remove(block_seq)
            except ValueError:
                return
        st.acked += 1
        self.outstanding -= 1
        if st.acked == self.block_size:
            while True:
                head = self.blocks.get(self.base_block)
                if head is None or head.acked < self.block_size:
                    break
                del self.blocks[self.base_block]
                self.base_block += 1

    def expire_timers(self, slot: int) -> None:
        timers = self._timers
        while timers and timers[0][0] <= slot:
            deadline, b, tx = timers.popleft()
            st = self.blocks.get(b)
            if st is not None and st.in_flight and st.in_flight[0] == tx:
                st.in_flight.popleft()
                self.retransmit_queue.append(b)

    def make_coded_packet(self, block_seq: int) -> CodedUnit:
        st = self.blocks.get(block_seq)
        if st is None or st.acked >= self.block_size:
            raise UsageError(f"block {block_seq} is not active")
        tx = st.next_tx
        st.next_tx += 1
        payload = None
        if self._source_fn is not None and self.mode == "oblivious":
            mask = mask_from(self.mask_key, block_seq, tx, self.block_size)
            src = [self._source_fn(block_seq, i) for i in range(self.block_size)]
            payload = combine(mask, src)
        return CodedUnit(block_seq, tx, payload)

    def on_slot(self, slot: int) -> Optional[CodedUnit]:
        """Fire due timers, then emit one coded packet if allowed."""
        self.expire_timers(slot)
        if self.retransmit_queue:
            b = self.retransmit_queue.popleft()
        elif self.outstanding < self.window:
            b = self.next_block
            st = self.blocks.get(b)
            if st is None:
                st = self.blocks[b] = _TxBlock()
            st.assigned += 1
            self.outstanding += 1
            if st.assigned == self.block_size:
                self.next_block += 1
        else:
            return None
        unit = self.make_coded_packet(b)
        st = self.blocks[b]
        deadline = slot + self.rtt
        st.in_flight.append(unit.tx_index)
        self._timers.append((deadline, b, unit.tx_index))
        return unit


class DeliveredBlock(NamedTuple):
    block_seq: int
    arrivals: List[int]  # arrival slots of the block's innovative packets
    tx_to_decode: int  # transmissions of the block up to the decoding one
    payloads: Optional[List[bytes]]


class FecReceipt(NamedTuple):
    ack: Optional[BlockAck]
    delivered: List[DeliveredBlock]
    innovative: bool
    decoded: bool


@dataclass
class _RxBlock:
    rank: int = 0
    decoder: Optional[Gf2Decoder] = None
    arrivals: List[int] = field(default_factory=list)
    decoded: bool = False
    tx_to_decode: int = 0
    payloads: Optional[List[bytes]] = None


class FecReceiver:
    """Rank tracking per block and in-order block delivery.

    Occupancy is innovative packets of undecoded blocks plus B for each
    decoded block waiting on an earlier one. Arrivals for blocks that are
    already full rank are ACKed so a sender whose ACK was lost can retire
    the credit; other non-innovative arrivals are not ACKed.
    """

    def __init__(
        self,
        block_size: int,
        mode: str = "ideal",
        mask_key: int = 0,
        source_fn: Optional[Callable[[int, int], bytes]] = None,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.block_size = block_size
        self.mode = mode
        self.mask_key = mask_key
        self.next_expected_block = 0
        self.blocks: Dict[int, _RxBlock] = {}
        self.occupancy = 0
        self._source_fn = source_fn

    def _new_block(self) -> _RxBlock:
        st = _RxBlock()
        if self.mode == "oblivious" or self._source_fn is not None:
            st.decoder = Gf2Decoder(self.block_size)
        return st

    def on_packet(self, unit: CodedUnit, slot: int) -> FecReceipt:
        b = unit.block_seq
        ack = BlockAck(b)
        if b < self.next_expected_block:
            return FecReceipt(ack, [], False, False)
        st = self.blocks.get(b)
        if st is None:
            st = self.blocks[b] = self._new_block()
        if st.decoded:
            return FecReceipt(ack, [], False, False)

        if self.mode == "ideal":
            if st.decoder is not None:
                st.decoder.absorb(1 << st.rank, self._source_fn(b, st.rank))
            innovative = True
        else:
            mask = mask_from(self.mask_key, b, unit.tx_index, self.block_size)
            innovative = st.decoder.absorb(mask, unit.payload)
        if not innovative:
            return FecReceipt(None, [], False, False)

        st.rank += 1
        st.arrivals.append(slot)
        self.occupancy += 1
        decoded = False
        if st.rank == self.block_size:
            st.decoded = decoded = True
            st.tx_to_decode = unit.tx_index + 1
            if st.decoder is not None and st.decoder.payload_len is not None:
                st.payloads = st.decoder.decode()
            st.decoder = None

        delivered = []
        nxt = self.next_expected_block
        while True:
            head = self.blocks.get(nxt)
            if head is None or not head.decoded:
                break
            del self.blocks[nxt]
            self.occupancy -= self.block_size
            delivered.append(
                DeliveredBlock(nxt, head.arrivals, head.tx_to_decode, head.payloads)
            )
            nxt += 1
        self.next_expected_block = nxt
        return FecReceipt(ack, delivered, True, decoded)
