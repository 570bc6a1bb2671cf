"""Bernoulli-loss, fixed-RTT forward and feedback channels."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Deque, List

import numpy as np

FORWARD_STREAM = 0
FEEDBACK_STREAM = 1
MASK_STREAM = 2

_CHUNK = 1 << 14


def stream_generator(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one random process of a run."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def stream_key(seed: int, stream: int) -> int:
    """64-bit key derived from the master seed, for hash-based draws."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1, np.uint64)[0])


class UniformStream:
    """Sequential uniforms from a Generator, drawn in chunks.

    PCG64 doubles consume one output each, so chunked reads yield the same
    sequence as scalar ``Generator.random()`` calls on the same generator.
    """

    def __init__(self, gen: np.random.Generator):
        self._gen = gen
        self._buf = np.empty(0)
        self._pos = 0

    def draw(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._gen.random(_CHUNK)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)


@dataclass(frozen=True)
class ChannelConfig:
    p: float
    R: int
    seed: int
    p_a: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.p < 1.0) or not (0.0 <= self.p_a < 1.0):
            raise ValueError("loss probabilities must lie in [0, 1)")
        if self.R < 1 or int(self.R) != self.R:
            raise ValueError("R must be a positive integer number of slots")

    @property
    def forward_delay(self) -> int:
        return (self.R + 1) // 2

    @property
    def feedback_delay(self) -> int:
        return self.R // 2


@dataclass
class InFlightUnit:
    unit: Any
    deliver_at: int
    lost: bool


class SlotOrderError(RuntimeError):
    """poll() was called with a slot earlier than a previous poll."""


class _Direction:
    def __init__(self, delay: int):
        self.delay = delay
        self.queue: Deque[InFlightUnit] = deque()
        self.last_poll = -1
        self.injected = 0
        self.delivered = 0
        self.dropped = 0

    def push(self, slot: int, unit: Any, lost: bool) -> None:
        self.queue.append(InFlightUnit(unit, slot + self.delay, lost))
        self.injected += 1

    def poll(self, slot: int) -> List[Any]:
        if slot < self.last_poll:
            raise SlotOrderError(f"poll({slot}) after poll({self.last_poll})")
        self.last_poll = slot
        out = []
        q = self.queue
        while q and q[0].deliver_at <= slot:
            item = q.popleft()
            if item.lost:
                self.dropped += 1
            else:
                self.delivered += 1
                out.append(item.unit)
        return out


class Channel:
    """Forward data path and feedback path with a combined delay of R slots.

    Losses are drawn at injection from separate per-direction streams. With
    a fixed delay per direction the queues are FIFO, so there is no
    reordering.
    """

    def __init__(self, config: ChannelConfig):
        self.config = config
        self._fwd_rng = UniformStream(stream_generator(config.seed, FORWARD_STREAM))
        self._fb_rng = UniformStream(stream_generator(config.seed, FEEDBACK_STREAM))
        self.forward = _Direction(config.forward_delay)
        self.feedback = _Direction(config.feedback_delay)

    def send_forward(self, slot: int, unit: Any) -> None:
        p = self.config.p
        lost = p > 0.0 and self._fwd_rng.draw() < p
        self.forward.push(slot, unit, lost)

    def send_feedback(self, slot: int, unit: Any, copies: int = 1) -> None:
        if copies < 1:
            raise ValueError("copies must be >= 1")
        p_a = self.config.p_a
        lost = False
        if p_a > 0.0:
            # always consume `copies` draws so the stream stays aligned
            lost = True
            for _ in range(copies):
                if self._fb_rng.draw() >= p_a:
                    lost = False
        self.feedback.push(slot, unit, lost)

    def poll_forward(self, slot: int) -> List[Any]:
        return self.forward.poll(slot)

    def poll_feedback(self, slot: int) -> List[Any]:
        return self.feedback.poll(slot)

    def poll(self, slot: int) -> List[Any]:
        """All units due at ``slot``: forward first, then feedback."""
        return self.poll_forward(slot) + self.poll_feedback(slot)

    @property
    def in_flight(self) -> int:
        return len(self.forward.queue) + len(self.feedback.queue)
