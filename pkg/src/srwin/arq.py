"""SR-ARQ sender and receiver driven one slot at a time."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, NamedTuple, Optional, Tuple


@dataclass(frozen=True)
class DataUnit:
    seq: int
    tx: int  # 1 for the first transmission of seq
    payload: Optional[bytes] = None


@dataclass(frozen=True)
class AckUnit:
    seq: int


class ArqSender:
    """Keeps at most ``window`` un-ACKed packets, whatever their seq range.

    A packet sent at slot t is ACKed at slot t + R at the earliest; its timer
    fires at slot t + R once that slot's ACKs have been processed, so with
    reliable feedback a timeout means the packet was lost.
    """

    def __init__(self, window: int, rtt: int, payload_fn=None):
        if window < 1 or rtt < 1:
            raise ValueError("window and rtt must be >= 1")
        self.window = window
        self.rtt = rtt
        self.next_seq = 0
        self.outstanding: Dict[int, List[int]] = {}  # seq -> [tx_count, deadline]
        self.retransmit_queue: Deque[int] = deque()
        self._timers: Deque[Tuple[int, int]] = deque()  # (deadline, seq), send order
        self._payload_fn = payload_fn

    def on_ack(self, seq: int) -> None:
        # duplicate or stale ACKs are ignored
        state = self.outstanding.pop(seq, None)
        if state is not None and state[1] == -1:
            self.retransmit_queue.remove(seq)

    def expire_timers(self, slot: int) -> List[int]:
        expired = []
        timers = self._timers
        while timers and timers[0][0] <= slot:
            deadline, seq = timers.popleft()
            state = self.outstanding.get(seq)
            if state is not None and state[1] == deadline:
                state[1] = -1
                self.retransmit_queue.append(seq)
                expired.append(seq)
        return expired

    def on_slot(self, slot: int) -> Optional[DataUnit]:
        """Fire due timers, then emit at most one packet (retransmissions first)."""
        self.expire_timers(slot)
        if self.retransmit_queue:
            seq = self.retransmit_queue.popleft()
            state = self.outstanding[seq]
            state[0] += 1
        elif len(self.outstanding) < self.window:
            seq = self.next_seq
            self.next_seq += 1
            state = self.outstanding[seq] = [1, -1]
        else:
            return None
        deadline = slot + self.rtt
        state[1] = deadline
        self._timers.append((deadline, seq))
        payload = self._payload_fn(seq) if self._payload_fn else None
        return DataUnit(seq, state[0], payload)


class ArqReceipt(NamedTuple):
    ack: AckUnit
    delivered: List[Tuple[int, int]]  # (seq, arrival slot)
    duplicate: bool


class ArqReceiver:
    """ACKs every arrival and releases the in-order prefix to the application."""

    def __init__(self) -> None:
        self.next_expected = 0
        self.buffer: Dict[int, int] = {}  # seq -> arrival slot

    @property
    def occupancy(self) -> int:
        return len(self.buffer)

    def on_packet(self, seq: int, slot: int) -> ArqReceipt:
        ack = AckUnit(seq)
        if seq < self.next_expected or seq in self.buffer:
            return ArqReceipt(ack, [], True)
        if seq != self.next_expected:
            self.buffer[seq] = slot
            return ArqReceipt(ack, [], False)
        delivered = [(seq, slot)]
        nxt = seq + 1
        buf = self.buffer
        while nxt in buf:
            delivered.append((nxt, buf.pop(nxt)))
            nxt += 1
        self.next_expected = nxt
        return ArqReceipt(ack, delivered, False)
