"""Slotted simulation of one sender, one lossy channel and one receiver.

Slot order, identical in both backends:

1. warmup check (measurement starts at the top of a slot);
2. forward arrivals reach the receiver, which sends ACKs on the feedback path;
3. feedback arrivals reach the sender;
4. sender timers fire, then the sender emits at most one packet;
5. the receiver's end-of-slot buffer occupancy is sampled.

The ``reference`` backend drives the protocol classes directly and checks
stream integrity as it goes. The ``fast`` backend runs the compiled loops in
``_kernels`` and returns identical reports.
"""

from __future__ import annotations

import csv
import hashlib
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, List, Optional, Sequence, TextIO

import numpy as np

from .analytics import dependent_tx_expected
from .arq import ArqReceiver, ArqSender
from .channel import (
    FEEDBACK_STREAM,
    FORWARD_STREAM,
    MASK_STREAM,
    Channel,
    ChannelConfig,
    stream_generator,
    stream_key,
)
from .fec import FecReceiver, FecSender

PROTOCOLS = ("arq", "fec-ideal", "fec-oblivious")
SWEEP_AXES = ("W", "p", "B", "p_a", "copies")
MIN_COHORTS = 10
TARGET_DELIVERIES = 100_000
# edge terms in the Little's-law balance scale like R / span
MIN_MEASURE_RTTS = 100
FAST_OBLIVIOUS_MAX_B = 64
TRACE_COLUMNS = ("slot", "actor", "event", "seq", "block_seq", "rank", "buffer_size")


class ConfigError(ValueError):
    pass


class SimulationInvariantError(RuntimeError):
    """The simulated protocol broke window, ordering or integrity rules."""


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str = "arq"
    W: int = 64
    B: int = 1
    p: float = 0.1
    p_a: float = 0.0
    R: Optional[int] = None
    C: Optional[float] = None
    copies: int = 1
    horizon: Optional[int] = None
    warmup: Optional[int] = None  # None: automatic
    seed: int = 1
    replications: int = 10

    def resolve(self) -> "ExperimentConfig":
        """Validate and fill R, C and horizon.

        A slot is one packet time, so C is in packets per slot and at most 1.
        W = R*C must hold; with neither given, C = 1 and R = W.
        """
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}")
        W, B = int(self.W), int(self.B)
        if W < 1:
            raise ConfigError("W must be >= 1")
        if B < 1:
            raise ConfigError("B must be >= 1")
        if self.protocol == "arq":
            B = 1
        elif W % B:
            raise ConfigError("W is an integer multiple of B")
        for name in ("p", "p_a"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.copies < 1:
            raise ConfigError("copies must be >= 1")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.seed < 0 or self.seed >= 1 << 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

        R, C = self.R, self.C
        if R is None and C is None:
            R, C = W, 1.0
        elif R is None:
            if not 0.0 < C <= 1.0:
                raise ConfigError("C must lie in (0, 1] packets per slot")
            R = W / C
            if abs(R - round(R)) > 1e-9:
                raise ConfigError("W / C must be a whole number of slots")
            R = int(round(R))
        elif C is None:
            C = W / R
        if R < 1:
            raise ConfigError("R must be >= 1")
        if not 0.0 < C <= 1.0 + 1e-12:
            raise ConfigError("C = W/R must lie in (0, 1] packets per slot")
        if abs(R * C - W) > 1e-9 * W:
            raise ConfigError("W = R*C is violated")

        horizon = self.horizon
        if horizon is None:
            horizon = default_horizon(self.protocol, W, B, self.p, self.p_a, self.copies, R, C)
        if horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.warmup is not None and not 0 <= self.warmup < horizon:
            raise ConfigError("warmup must satisfy 0 <= warmup < horizon")
        return replace(self, W=W, B=B, R=int(R), C=float(C), horizon=int(horizon))

    @property
    def mode(self) -> str:
        return "oblivious" if self.protocol == "fec-oblivious" else "ideal"


def default_horizon(protocol: str, W: int, B: int, p: float, p_a: float, copies: int,
                    R: int, C: float) -> int:
    """Slots for about TARGET_DELIVERIES post-warmup deliveries, with margin,
    and never fewer than MIN_MEASURE_RTTS round trips of measurement."""
    rate = (1.0 - p) * (1.0 - p_a**copies) * C
    if protocol == "fec-oblivious":
        # dependent masks cost extra sends per block
        rate *= B / (dependent_tx_expected(B, p) * (1.0 - p))
    warm = max(10 * R, math.ceil((10 * W + 2 * B) / rate) + 2 * R)
    span = max(math.ceil(1.1 * (TARGET_DELIVERIES + B) / rate), MIN_MEASURE_RTTS * R)
    return warm + span + 4 * R


@dataclass(frozen=True)
class MetricsReport:
    protocol: str
    W: int
    B: int
    p: float
    p_a: float
    R: int
    C: float
    copies: int
    seed: int
    replication: int
    horizon: int
    measure_start: int
    delivered: int
    throughput: float
    mean_occupancy: float
    mean_delay: float
    window_max_tx: float
    per_packet_tx: float
    wasted_tx: int
    littles_residual: float

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


METRIC_FIELDS = (
    "throughput",
    "mean_occupancy",
    "mean_delay",
    "window_max_tx",
    "per_packet_tx",
    "wasted_tx",
    "littles_residual",
)


def measure_window_max_tx(tx_counts: Sequence[int], W: int, start: int = 0,
                          stop: Optional[int] = None) -> float:
    """Mean over seq cohorts [kW, (k+1)W) of the cohort's max transmission count.

    Only cohorts lying entirely inside [start, stop) are used.
    """
    tx = np.asarray(tx_counts)
    if stop is None:
        stop = len(tx)
    first = -(-start // W)
    last = stop // W
    n = last - first
    if n < MIN_COHORTS:
        raise InsufficientDataError(f"{n} complete cohorts of {W}; need {MIN_COHORTS}")
    cohorts = tx[first * W:last * W].reshape(n, W)
    return float(cohorts.max(axis=1).mean())


def littles_residual(mean_delay: float, mean_occupancy: float, throughput: float) -> float:
    """|E[D] - E[Q]/rho| relative to E[D]."""
    if mean_delay == 0.0 and mean_occupancy == 0.0:
        return 0.0
    if mean_delay == 0.0 or throughput == 0.0:
        return math.inf
    return abs(mean_delay - mean_occupancy / throughput) / mean_delay


def source_payload(seed: int, block: int, index: int = 0) -> bytes:
    """Deterministic 16-byte application payload."""
    h = hashlib.blake2b(digest_size=16)
    h.update(f"{seed}:{block}:{index}".encode())
    return h.digest()


@dataclass
class _Tally:
    measure_start: int = -1
    first_measured: int = 0  # seq (or block) next expected when measuring began
    delivered_units: int = 0  # seqs (or blocks) delivered in total
    occ_sum: int = 0
    delivered: int = 0
    delay_sum: int = 0
    wasted: int = 0


def _report(cfg: ExperimentConfig, replication: int, seed: int, t: _Tally,
            tx: np.ndarray) -> MetricsReport:
    if t.measure_start < 0:
        raise InsufficientDataError("warmup never ended within the horizon")
    slots = cfg.horizon - t.measure_start
    throughput = t.delivered / slots
    occ = t.occ_sum / slots
    delay = t.delay_sum / t.delivered if t.delivered else 0.0
    if cfg.protocol == "arq":
        group = cfg.W
        measured = tx[t.first_measured:t.delivered_units]
        per_packet = float(measured.mean()) if len(measured) else math.nan
    else:
        group = cfg.W // cfg.B
        measured = tx[t.first_measured:t.delivered_units]
        per_packet = float(measured.mean()) / cfg.B if len(measured) else math.nan
    try:
        wmax = measure_window_max_tx(tx, group, t.first_measured, t.delivered_units)
    except InsufficientDataError:
        wmax = math.nan
    return MetricsReport(
        protocol=cfg.protocol, W=cfg.W, B=cfg.B, p=cfg.p, p_a=cfg.p_a, R=cfg.R,
        C=cfg.C, copies=cfg.copies, seed=seed, replication=replication,
        horizon=cfg.horizon, measure_start=t.measure_start, delivered=t.delivered,
        throughput=throughput, mean_occupancy=occ, mean_delay=delay,
        window_max_tx=wmax, per_packet_tx=per_packet, wasted_tx=t.wasted,
        littles_residual=littles_residual(delay, occ, throughput),
    )


class _Tracer:
    def __init__(self, out: Optional[TextIO]):
        self._w = csv.writer(out, lineterminator="\n") if out is not None else None
        if self._w is not None:
            self._w.writerow(TRACE_COLUMNS)

    def __call__(self, slot, actor, event, seq="", block="", rank="", buf=""):
        if self._w is not None:
            self._w.writerow((slot, actor, event, seq, block, rank, buf))


def _warmup_done(cfg: ExperimentConfig, s: int, delivered_packets: int) -> bool:
    if cfg.warmup is not None:
        return s >= cfg.warmup
    return s >= 10 * cfg.R and delivered_packets >= 10 * cfg.W


def _run_arq_reference(cfg, seed, trace, check_payloads) -> _Tally:
    ch = Channel(ChannelConfig(cfg.p, cfg.R, seed, cfg.p_a))
    payload_fn = (lambda q: source_payload(seed, q)) if check_payloads else None
    tx = ArqSender(cfg.W, cfg.R, payload_fn)
    rx = ArqReceiver()
    t = _Tally()
    tx_first: Dict[int, int] = {}
    for s in range(cfg.horizon):
        if t.measure_start < 0 and _warmup_done(cfg, s, rx.next_expected):
            t.measure_start = s
            t.first_measured = rx.next_expected
        measuring = t.measure_start >= 0
        for unit in ch.poll_forward(s):
            receipt = rx.on_packet(unit.seq, s)
            trace(s, "receiver", "arrive", unit.seq, buf=rx.occupancy)
            if receipt.duplicate:
                if measuring:
                    t.wasted += 1
            else:
                tx_first[unit.seq] = unit.tx
                if check_payloads and unit.payload != source_payload(seed, unit.seq):
                    raise SimulationInvariantError(f"payload of seq {unit.seq} corrupted")
            for seq, arrived in receipt.delivered:
                if seq != t.delivered_units:
                    raise SimulationInvariantError(
                        f"delivered seq {seq}, expected {t.delivered_units}")
                t.delivered_units += 1
                trace(s, "receiver", "deliver", seq, buf=rx.occupancy)
                if measuring:
                    t.delivered += 1
                    t.delay_sum += s - arrived
            ch.send_feedback(s, receipt.ack, cfg.copies)
            trace(s, "receiver", "ack", unit.seq)
        for ack in ch.poll_feedback(s):
            tx.on_ack(ack.seq)
            trace(s, "sender", "ack", ack.seq)
        unit = tx.on_slot(s)
        if len(tx.outstanding) > cfg.W:
            raise SimulationInvariantError(f"window exceeded at slot {s}")
        if unit is not None:
            ch.send_forward(s, unit)
            trace(s, "sender", "send" if unit.tx == 1 else "retransmit", unit.seq)
        if measuring:
            t.occ_sum += rx.occupancy
    counts = np.array([tx_first[q] for q in range(t.delivered_units)], dtype=np.int64)
    return t, counts


def _run_fec_reference(cfg, seed, trace, check_payloads) -> _Tally:
    ch = Channel(ChannelConfig(cfg.p, cfg.R, seed, cfg.p_a))
    key = stream_key(seed, MASK_STREAM)
    src = (lambda b, i: source_payload(seed, b, i)) if check_payloads else None
    tx = FecSender(cfg.W, cfg.B, cfg.R, cfg.mode, key, src)
    rx = FecReceiver(cfg.B, cfg.mode, key, src)
    t = _Tally()
    block_tx: List[int] = []
    for s in range(cfg.horizon):
        if t.measure_start < 0 and _warmup_done(cfg, s, rx.next_expected_block * cfg.B):
            t.measure_start = s
            t.first_measured = rx.next_expected_block
        measuring = t.measure_start >= 0
        for unit in ch.poll_forward(s):
            receipt = rx.on_packet(unit, s)
            st = rx.blocks.get(unit.block_seq)
            trace(s, "receiver", "arrive", block=unit.block_seq,
                  rank=st.rank if st else cfg.B, buf=rx.occupancy)
            if not receipt.innovative and measuring:
                t.wasted += 1
            for blk in receipt.delivered:
                if blk.block_seq != t.delivered_units:
                    raise SimulationInvariantError(
                        f"delivered block {blk.block_seq}, expected {t.delivered_units}")
                if check_payloads and blk.payloads is not None:
                    want = [source_payload(seed, blk.block_seq, i) for i in range(cfg.B)]
                    if blk.payloads != want:
                        raise SimulationInvariantError(
                            f"block {blk.block_seq} decoded to wrong payloads")
                t.delivered_units += 1
                block_tx.append(blk.tx_to_decode)
                trace(s, "receiver", "deliver", block=blk.block_seq, buf=rx.occupancy)
                if measuring:
                    t.delivered += cfg.B
                    t.delay_sum += sum(s - a for a in blk.arrivals)
            if receipt.ack is not None:
                ch.send_feedback(s, receipt.ack, cfg.copies)
                trace(s, "receiver", "ack", block=unit.block_seq)
        for ack in ch.poll_feedback(s):
            tx.on_ack(ack.block_seq)
            trace(s, "sender", "ack", block=ack.block_seq)
        unit = tx.on_slot(s)
        if tx.outstanding > cfg.W:
            raise SimulationInvariantError(f"window exceeded at slot {s}")
        if unit is not None:
            ch.send_forward(s, unit)
            trace(s, "sender", "send", block=unit.block_seq)
        if measuring:
            t.occ_sum += rx.occupancy
    return t, np.array(block_tx, dtype=np.int64)


_KERNEL_ERRORS = {
    1: "sender ring overflow",
    2: "receiver ring overflow",
    3: "transmission count overflow",
    4: "ACK or timer for a credit that is not in flight",
    5: "window exceeded",
}


def _ring_cap(units: int) -> int:
    return 1 << max(10, (64 * units - 1).bit_length())


def _run_fast(cfg: ExperimentConfig, seed: int):
    from . import _kernels as k

    warmup = -1 if cfg.warmup is None else cfg.warmup
    df = (cfg.R + 1) // 2
    units = cfg.W if cfg.protocol == "arq" else cfg.W // cfg.B
    cap = _ring_cap(units)
    while True:
        fwd = stream_generator(seed, FORWARD_STREAM)
        fb = stream_generator(seed, FEEDBACK_STREAM)
        if cfg.protocol == "arq":
            stats, tx = k.arq_kernel(cfg.W, cfg.R, df, cfg.p, cfg.p_a, cfg.copies,
                                     cfg.horizon, warmup, fwd, fb, cap)
        else:
            key = np.uint64(stream_key(seed, MASK_STREAM))
            stats, tx = k.fec_kernel(cfg.W, cfg.B, cfg.R, df, cfg.p, cfg.p_a,
                                     cfg.copies, cfg.horizon, warmup,
                                     cfg.protocol == "fec-oblivious", key, fwd, fb, cap)
        err = int(stats[0])
        if err in (k.ERR_SENDER_RING, k.ERR_RECEIVER_RING) and cap < 1 << 26:
            cap <<= 2  # rerun: results do not depend on the ring size
            continue
        if err != k.OK:
            raise SimulationInvariantError(_KERNEL_ERRORS.get(err, f"kernel error {err}"))
        break
    t = _Tally(
        measure_start=int(stats[1]), first_measured=int(stats[2]),
        delivered_units=int(stats[3]), occ_sum=int(stats[4]), delivered=int(stats[5]),
        delay_sum=int(stats[6]), wasted=int(stats[7]),
    )
    return t, np.asarray(tx[:t.delivered_units], dtype=np.int64)


def fast_supported(cfg: ExperimentConfig) -> bool:
    return cfg.protocol != "fec-oblivious" or cfg.B <= FAST_OBLIVIOUS_MAX_B


def run(config: ExperimentConfig, replication: int = 0, backend: str = "auto",
        trace: Optional[TextIO] = None, check_payloads: bool = False) -> MetricsReport:
    """One replication; replication r uses seed ``config.seed + r``."""
    cfg = config.resolve()
    seed = cfg.seed + replication
    if backend == "auto":
        use_fast = fast_supported(cfg) and trace is None and not check_payloads
        backend = "fast" if use_fast else "reference"
    if backend == "fast":
        if not fast_supported(cfg):
            raise ConfigError(f"fast backend supports oblivious coding up to B={FAST_OBLIVIOUS_MAX_B}")
        t, tx = _run_fast(cfg, seed)
    elif backend == "reference":
        tracer = _Tracer(trace)
        if cfg.protocol == "arq":
            t, tx = _run_arq_reference(cfg, seed, tracer, check_payloads)
        else:
            t, tx = _run_fec_reference(cfg, seed, tracer, check_payloads)
    else:
        raise ConfigError(f"unknown backend {backend!r}")
    return _report(cfg, replication, seed, t, tx)


def _run_one(args):
    config, r, backend = args
    return run(config, r, backend)


def run_replications(config: ExperimentConfig, backend: str = "auto",
                     jobs: int = 1) -> List[MetricsReport]:
    cfg = config.resolve()
    tasks = [(cfg, r, backend) for r in range(cfg.replications)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]


def summarize(reports: Sequence[MetricsReport]) -> Dict[str, Dict[str, float]]:
    """Mean and standard error of each metric across replications."""
    out = {}
    for name in METRIC_FIELDS:
        vals = [float(getattr(r, name)) for r in reports]
        mean = math.fsum(vals) / len(vals) if vals else math.nan
        se = statistics.stdev(vals) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
        out[name] = {"mean": mean, "stderr": se}
    return out


def sweep(base: ExperimentConfig, axis: str, values: Sequence[Any], backend: str = "auto",
          jobs: int = 1) -> List[MetricsReport]:
    """Replication sets for each value of one parameter, all with the base seed.

    Rows are ordered by value, then replication.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}")
    cast = {f.name: f.type for f in fields(ExperimentConfig)}
    conv = int if cast[axis] in ("int", int) else float
    configs = [replace(base, **{axis: conv(v)}).resolve() for v in values]
    tasks = [(c, r, backend) for c in configs for r in range(c.replications)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]
