"""Acceptance gate. Each test records its outcome before asserting, and the
terminal summary prints one PASS/FAIL line per criterion."""

import math
import random
import subprocess
import sys
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srwin import analytics as an
from srwin.engine import ExperimentConfig, SimulationInvariantError, run
from srwin.gf2 import Gf2Decoder, combine, full_rank_rate, gf2_rank, random_mask

# every simulation made here, kept for the Little's-law sweep at the end
RUNS = []


def simulate(record, cfg, **kw):
    try:
        rep = run(cfg, **kw)
    except SimulationInvariantError as exc:
        record(10, False, f"{cfg.protocol} W={cfg.W} B={cfg.B} p={cfg.p}: {exc}")
        raise
    RUNS.append(rep)
    return rep


def cohort_horizon(W, p, cohorts):
    return int(W * cohorts * 1.02 / (1 - p)) + 60 * W


# ---------------------------------------------------------------- 1


def test_c1_alternating_matches_series(record):
    t0 = time.perf_counter()
    worst = 0.0
    for W in range(1, 65):
        for k in range(1, 10):
            p = k / 10
            a = an.arq_max_retx_exact(W, p, method="alternating")
            s = an.arq_max_retx_exact(W, p, method="series")
            worst = max(worst, abs(a - s))
    elapsed = time.perf_counter() - t0
    ok = record(1, worst <= 1e-8, f"max diff {worst:.2e}")
    ok &= record(1, elapsed < 1.0, f"runtime {elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------- 2

_C2_TIME = []


@pytest.mark.parametrize("W", [16, 64, 256])
@pytest.mark.parametrize("p", [0.01, 0.05, 0.1])
def test_c2_window_max_matches_exact(record, W, p):
    t0 = time.perf_counter()
    rep = simulate(record, ExperimentConfig(W=W, p=p, seed=11, horizon=cohort_horizon(W, p, 100_000)))
    _C2_TIME.append(time.perf_counter() - t0)
    want = an.arq_max_retx_exact(W, p)
    cohorts = rep.delivered // W
    ok = record(2, cohorts >= 100_000, f"W={W} p={p} cohorts {cohorts}")
    ok &= record(2, abs(rep.window_max_tx / want - 1) <= 0.05,
                 f"W={W} p={p} sim {rep.window_max_tx:.4f} exact {want:.4f}")
    assert ok


def test_c2_runtime(record):
    total = sum(_C2_TIME)
    assert record(2, len(_C2_TIME) == 9 and total < 120, f"runtime {total:.1f}s")


# ---------------------------------------------------------------- 3


@pytest.mark.parametrize("protocol,B", [("arq", 1), ("fec-ideal", 16)])
@pytest.mark.parametrize("p", [0.05, 0.1])
def test_c3_throughput(record, protocol, B, p):
    rep = simulate(record, ExperimentConfig(protocol=protocol, W=64, B=B, p=p, seed=3))
    want = (1 - p) * rep.C
    assert record(3, abs(rep.throughput / want - 1) <= 0.01,
                  f"{protocol} p={p} rho {rep.throughput:.4f} vs {want:.4f}")


@pytest.mark.parametrize("p_a", [0.1, 0.3])
def test_c3_lossy_ack_throughput(record, p_a):
    p = 0.1
    rep = simulate(record, ExperimentConfig(W=64, p=p, p_a=p_a, seed=3))
    want = an.lossy_feedback_throughput(p, p_a, 1, rep.C)
    assert want == pytest.approx((1 - p) * (1 - p_a) * rep.C)
    assert record(3, abs(rep.throughput / want - 1) <= 0.02,
                  f"arq p_a={p_a} rho {rep.throughput:.4f} vs {want:.4f}")


# ---------------------------------------------------------------- 5

_SCALE_W = [64, 256, 1024, 4096]


def test_c5_arq_bracket(record):
    t0 = time.perf_counter()
    ratios = []
    for W in _SCALE_W:
        rep = simulate(record, ExperimentConfig(W=W, p=0.1, seed=5))
        ratios.append(rep.mean_occupancy / (W * math.log(W)))
    spread = max(ratios) / min(ratios)
    ok = record(5, spread < 4, f"ARQ E[Q]/(W ln W) spread {spread:.2f}")
    ok &= record(5, time.perf_counter() - t0 < 150, "ARQ runtime")
    assert ok


@pytest.mark.parametrize("W", _SCALE_W)
def test_c5_full_window_block_occupancy(record, W):
    p = 0.1
    rep = simulate(record, ExperimentConfig(protocol="fec-ideal", W=W, B=W, p=p, seed=5))
    ratio = rep.mean_occupancy / W
    assert record(5, abs(ratio * (1 - p) - 1) <= 0.05,
                  f"FEC B=W={W} E[Q]/W {ratio:.3f} vs {1 / (1 - p):.3f}")


# ---------------------------------------------------------------- 6


@pytest.mark.parametrize("B", [256, 1024])
def test_c6_single_block_transmissions(record, B):
    p = 0.1
    rep = simulate(record, ExperimentConfig(protocol="fec-ideal", W=B, B=B, p=p, seed=6))
    want = an.fec_retx_regime2(B, p)[1]
    assert record(6, abs(rep.per_packet_tx / want - 1) <= 0.02,
                  f"B={B} per-packet {rep.per_packet_tx:.4f} vs {want:.4f}")


# ---------------------------------------------------------------- 7


def test_c7_dependent_coding_constant(record):
    B = 30
    cfg = ExperimentConfig(protocol="fec-oblivious", W=B, B=B, p=0.0, seed=7,
                           horizon=11_000 * (B + 3))
    rep = simulate(record, cfg)
    blocks = rep.delivered // B
    extra = rep.per_packet_tx * B - B
    ok = record(7, blocks >= 10_000, f"blocks {blocks}")
    ok &= record(7, abs(extra - 1.606695) <= 0.05, f"extra {extra:.4f}")
    assert ok


# ---------------------------------------------------------------- 8


@pytest.mark.parametrize("B", [8, 16, 32])
def test_c8_full_rank_bound(record, B):
    rng = random.Random(800 + B)
    trials = 2000
    ok = True
    for delta in range(9):
        rate = full_rank_rate(B, delta, trials, rng)
        bound = an.decode_success_lower_bound(delta)
        sigma = math.sqrt(max(bound * (1 - bound), 1.0 / trials) / trials)
        ok &= record(8, rate >= bound - 3 * sigma, f"B={B} delta={delta} rate {rate:.4f}")
    assert ok


# ---------------------------------------------------------------- 9


def test_c9_round_trip(record):
    rng = random.Random(9)
    bad = 0
    for _ in range(1000):
        B = rng.randint(1, 64)
        src = [rng.randbytes(16) for _ in range(B)]
        dec = Gf2Decoder(B)
        while not dec.is_full_rank():
            m = random_mask(B, rng)
            dec.absorb(m, combine(m, src))
        bad += dec.decode() != src
    assert record(9, bad == 0, f"{bad} round-trip mismatches")


@settings(max_examples=200, deadline=None)
@given(B=st.integers(1, 64), seed=st.integers(0, 2**32), n=st.integers(1, 80))
def test_c9_rank_monotone(record, B, seed, n):
    rng = random.Random(seed)
    dec = Gf2Decoder(B)
    masks, last = [], 0
    ok = True
    for _ in range(n):
        m = random_mask(B, rng)
        masks.append(m)
        dec.absorb(m)
        ok &= last <= dec.rank <= min(B, len(masks))
        ok &= dec.rank == gf2_rank(masks)
        last = dec.rank
    assert ok or record(9, False, f"rank not monotone B={B} seed={seed}")


def test_c9_random_matrix_rate(record):
    rate = full_rank_rate(32, 0, 10_000, random.Random(99))
    assert record(9, abs(rate - 0.2888) <= 0.01, f"B=32 square full-rank {rate:.4f}")


# --------------------------------------------------------------- 10


@pytest.mark.parametrize("cfg", [
    ExperimentConfig(W=16, p=0.2, p_a=0.1, seed=21, horizon=30_000),
    ExperimentConfig(W=8, p=0.3, copies=2, p_a=0.4, R=11, seed=22, horizon=20_000),
    ExperimentConfig(protocol="fec-ideal", W=32, B=8, p=0.15, p_a=0.1, seed=23, horizon=30_000),
    ExperimentConfig(protocol="fec-oblivious", W=24, B=6, p=0.1, p_a=0.2, seed=24, horizon=30_000),
    ExperimentConfig(protocol="fec-oblivious", W=16, B=16, p=0.25, seed=25, horizon=30_000),
], ids=["arq", "arq-copies", "fec-ideal", "fec-oblivious", "fec-oblivious-full"])
def test_c10_reference_payload_oracle(record, cfg):
    try:
        rep = run(cfg, backend="reference", check_payloads=True)
    except SimulationInvariantError as exc:
        record(10, False, f"{cfg.protocol}: {exc}")
        raise
    fast = run(cfg, backend="fast")
    ok = record(10, rep.delivered > 0, f"{cfg.protocol} delivered {rep.delivered}")
    ok &= record(10, rep.as_dict() == fast.as_dict(), f"{cfg.protocol} backends disagree")
    assert ok


# --------------------------------------------------------------- 11


def test_c11_reports_repeat(record):
    cfg = ExperimentConfig(protocol="fec-oblivious", W=32, B=8, p=0.1, p_a=0.1, seed=31,
                           horizon=40_000)
    a, b = run(cfg, 2), run(cfg, 2)
    c = run(cfg, 2, backend="reference")
    assert record(11, a.as_dict() == b.as_dict() == c.as_dict(), "report mismatch")


def test_c11_cli_bytes(record, tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        subprocess.run([sys.executable, "-m", "srwin.cli", "simulate", "--W", "32", "--p", "0.1",
                        "--reps", "3", "--seed", "9", "--out", str(path)], check=True)
        outs.append(path.read_bytes())
    assert record(11, outs[0] == outs[1] and len(outs[0]) > 0, "CLI output differs")


# ----------------------------------------------------------- 4 + 10


def test_c4_littles_law_on_all_runs(record):
    big = [r for r in RUNS if r.delivered >= 100_000]
    assert big, "no acceptance runs recorded"
    ok = True
    for r in big:
        ok &= record(4, r.littles_residual < 0.02,
                     f"{r.protocol} W={r.W} B={r.B} p={r.p} residual {r.littles_residual:.4f}")
    assert ok


def test_c10_all_runs_clean(record):
    # invariant failures are recorded as they occur; this marks the clean ones
    assert record(10, len(RUNS) > 0, "no runs")
