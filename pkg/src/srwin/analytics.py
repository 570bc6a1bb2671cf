"""Closed-form and asymptotic performance of selective repeat with ARQ and FEC.

All functions are pure. Exact forms are exact for any window; the
asymptotic forms are only meaningful for large windows (ARQ) or a large
number of blocks per window (FEC regime I) and should be compared through
ratios and trends, not point values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional

import mpmath
import numpy as np
from scipy.special import bdtr

EULER_GAMMA = 0.5772156649015329
ALTERNATING_SUM_MAX_W = 64
SERIES_TERM_TOL = 1e-12


class DomainError(ValueError):
    """Argument outside the domain where a formula is defined."""


class ParameterError(ValueError):
    """Inconsistent combination of protocol parameters."""


def _check_p(p: float, name: str = "p") -> None:
    if not (0.0 <= p < 1.0):
        raise DomainError(f"{name} must lie in [0, 1), got {p!r}")


def _blocks(W: int, B: int) -> int:
    if B < 1 or W < 1:
        raise ParameterError("W and B must be positive")
    if W % B:
        raise ParameterError(f"W={W} is not an integer multiple of B={B}")
    return W // B


@dataclass(frozen=True)
class ProtocolParams:
    W: int
    p: float
    p_a: float = 0.0
    R: float = 1.0
    C: Optional[float] = None
    B: int = 1

    def __post_init__(self) -> None:
        if self.W < 1:
            raise ParameterError("W must be >= 1")
        _check_p(self.p)
        _check_p(self.p_a, "p_a")
        if self.R <= 0:
            raise ParameterError("R must be positive")
        _blocks(self.W, self.B)

    @property
    def M(self) -> int:
        return self.W // self.B

    @property
    def capacity(self) -> float:
        return self.C if self.C is not None else self.W / self.R


@dataclass(frozen=True)
class AsymptoticConstants:
    """Rate of the exponential matching the geometric tail, and its error."""

    lambda_: float
    gamma: float
    eps_geom: float

    @classmethod
    def for_loss(cls, p: float) -> "AsymptoticConstants":
        if not (0.0 < p < 1.0):
            raise DomainError("asymptotic constants need 0 < p < 1")
        lam = -math.log(p)
        return cls(lam, EULER_GAMMA, 1.0 / (1.0 - p) + 1.0 / math.log(p))


# --------------------------------------------------------------------------
# SR-ARQ
# --------------------------------------------------------------------------


def arq_cdf(n: float, W: int, p: float) -> float:
    """P(N_ARQ <= n) = (1 - p^n)^W."""
    _check_p(p)
    if n < 1:
        raise DomainError("n must be >= 1")
    if math.isinf(n) or p == 0.0:
        return 1.0
    return math.exp(W * math.log1p(-(p**n)))


def _arq_alternating(W: int, p: float) -> float:
    # binomials reach ~1e18 at W=64; 40 guard digits keep the cancellation exact
    digits = int(W * math.log10(2)) + 40
    with mpmath.workdps(digits):
        pm = mpmath.mpf(p)
        total = mpmath.mpf(0)
        for i in range(1, W + 1):
            term = mpmath.mpf(math.comb(W, i)) / (1 - pm**i)
            total += -term if i % 2 else term
        return float(-total)


def _arq_series(W: int, p: float) -> float:
    terms = [1.0]  # n = 1: 1 - 0^W
    pn = 1.0
    while True:
        pn *= p
        term = -math.expm1(W * math.log1p(-pn))
        terms.append(term)
        if term < SERIES_TERM_TOL:
            break
    return math.fsum(terms)


def arq_max_retx_exact(
    W: int, p: float, method: str = "auto", threshold: int = ALTERNATING_SUM_MAX_W
) -> float:
    """E[N_ARQ], the mean of the max of W geometric transmission counts.

    ``method`` is ``"alternating"`` (binomial inclusion-exclusion, evaluated
    in extended precision), ``"series"`` (sum of P(N >= n), truncated when a
    term drops below 1e-12) or ``"auto"`` (alternating up to ``threshold``).
    """
    _check_p(p)
    if W < 1:
        raise DomainError("W must be >= 1")
    if p == 0.0:
        return 1.0
    if method == "auto":
        method = "alternating" if W <= threshold else "series"
    if method == "alternating":
        return _arq_alternating(W, p)
    if method == "series":
        return _arq_series(W, p)
    raise ValueError(f"unknown method {method!r}")


def arq_max_retx_asymptotic(W: int, p: float) -> float:
    """Gumbel-mean approximation (ln W + gamma) / (-ln p), valid as W grows."""
    if not (0.0 < p < 1.0):
        raise DomainError("asymptotic form needs 0 < p < 1")
    if W < 2:
        raise DomainError("asymptotic form needs W >= 2")
    return (math.log(W) + EULER_GAMMA) / -math.log(p)


def buffer_bounds_arq(W: int, p: float) -> tuple[float, float]:
    """Lower and upper bounds on mean re-sequencing occupancy under SR-ARQ."""
    if W < 2 or not (0.0 < p < 1.0):
        raise DomainError("bounds need W >= 2 and 0 < p < 1")
    en = arq_max_retx_exact(W, p)
    lam = -math.log(p)
    return (W / 2.0) * max(0.0, en - 1.0 / lam), (W - 1) * en


# --------------------------------------------------------------------------
# SR-FEC
# --------------------------------------------------------------------------


def _log_negbin(n: int, B: int, p: float) -> float:
    return (
        math.lgamma(n) - math.lgamma(B) - math.lgamma(n - B + 1)
        + B * math.log1p(-p)
        + (n - B) * math.log(p)
    )


def negbin_pmf(n: int, B: int, p: float) -> float:
    """P(N_i = n): transmissions until the B-th arrival of a block."""
    _check_p(p)
    if B < 1:
        raise DomainError("B must be >= 1")
    if n < B:
        return 0.0
    if p == 0.0:
        return 1.0 if n == B else 0.0
    return math.exp(_log_negbin(n, B, p))


def _block_cdf(n: int, B: int, p: float) -> float:
    if n < B:
        return 0.0
    if p == 0.0:
        return 1.0
    terms = [math.exp(_log_negbin(k, B, p)) for k in range(B, n + 1)]
    return min(1.0, math.fsum(terms))


def fec_window_cdf(n: int, W: int, B: int, p: float) -> float:
    """P(N_FEC <= n) = (1-p)^W (sum_{i<=n-B} C(B+i-1, B-1) p^i)^M."""
    _check_p(p)
    M = _blocks(W, B)
    if n < B:
        return 0.0
    if p == 0.0:
        return 1.0
    return _block_cdf(n, B, p) ** M


def fec_max_retx_exact(W: int, B: int, p: float, tol: float = 1e-12) -> float:
    """E[N_FEC] by summing the survival function of the max over M blocks."""
    _check_p(p)
    M = _blocks(W, B)
    if p == 0.0:
        return float(B)
    # P(N_i > n) = P(fewer than B arrivals in n sends)
    total = float(B)
    n = B
    chunk = max(64, B)
    while True:
        ns = np.arange(n, n + chunk)
        block_surv = bdtr(B - 1, ns, 1.0 - p)
        surv = -np.expm1(M * np.log1p(-block_surv))
        total += math.fsum(surv)
        if surv[-1] < tol:
            return total
        n += chunk


def fec_max_retx_asymptotic_regime1(W: int, B: int, p: float) -> float:
    """Gumbel mean of the max over M = W/B Erlang(B) block completion times.

    Only meaningful for fixed B and many blocks; the leading-order location
    is (ln M + (B-1) ln ln M - ln (B-1)!) / lambda.
    """
    M = _blocks(W, B)
    if M < 3:
        raise DomainError("regime I form needs M = W/B >= 3")
    if not (0.0 < p < 1.0):
        raise DomainError("asymptotic form needs 0 < p < 1")
    lam = -math.log(p)
    lnM = math.log(M)
    return (EULER_GAMMA + lnM + (B - 1) * math.log(lnM) - math.lgamma(B)) / lam


def fec_retx_regime2(B: int, p: float) -> tuple[float, float]:
    """(per-block, per-packet) transmissions when one block spans the window."""
    _check_p(p)
    return B / (1.0 - p), 1.0 / (1.0 - p)


def fec_buffer_regime2(W: int, p: float) -> float:
    _check_p(p)
    return W / (1.0 - p)


# --------------------------------------------------------------------------
# Little's law, dependent coded packets, feedback, packet length
# --------------------------------------------------------------------------


def littles_delay(EQ: float, W: int, p: float, R: float) -> float:
    """Mean re-sequencing delay R E[Q] / ((1-p) W)."""
    if EQ < 0:
        raise DomainError("EQ must be >= 0")
    _check_p(p)
    return R * EQ / ((1.0 - p) * W)


def dependent_tx_expected(B: int, p: float) -> float:
    """Mean transmissions per block when masks are drawn without memory."""
    _check_p(p)
    if B < 1:
        raise DomainError("B must be >= 1")
    extra = math.fsum(1.0 / (2.0**k - 1.0) for k in range(1, B + 1))
    return (B + extra) / (1.0 - p)


def decode_success_prob(B: int, delta: int) -> float:
    """Probability that B + delta uniform masks have full rank B."""
    if B < 1 or delta < 0:
        raise DomainError("need B >= 1 and delta >= 0")
    prob = 1.0
    for k in range(1, B + 1):
        prob *= 1.0 - 2.0 ** (-(k + delta))
    return prob


def decode_success_lower_bound(delta: int) -> float:
    return 1.0 - 2.0 ** (-delta)


def extra_packet_budget(B: int) -> int:
    """delta = ceil(log2 B) + 1 extra arrivals per block."""
    return math.ceil(math.log2(B)) + 1


def throughput_loss_dependent(B: int, W: int, p: float, R: float) -> float:
    _check_p(p)
    M = _blocks(W, B)
    return (R / (1.0 - p)) * (M * extra_packet_budget(B) / W)


def lossy_feedback_throughput(p: float, p_a: float, n_acks: int, C: float) -> float:
    _check_p(p)
    _check_p(p_a, "p_a")
    if n_acks < 1:
        raise DomainError("n_acks must be >= 1")
    return (1.0 - p) * (1.0 - p_a**n_acks) * C


def redundant_ack_count(W: int, epsilon: float = 0.0) -> int:
    if W < 2 or epsilon < 0:
        raise DomainError("need W >= 2 and epsilon >= 0")
    # guard against 10.000000000000002 style rounding before the ceiling
    return max(1, math.ceil((1.0 + epsilon) * math.log2(W) - 1e-9))


def packet_loss_from_ber(L: int, p_e: float) -> tuple[float, float]:
    """Packet loss for L-bit packets: exact 1-(1-p_e)^L and 1-exp(-L p_e)."""
    if L < 1 or not (0.0 <= p_e <= 1.0):
        raise DomainError("need L >= 1 and 0 <= p_e <= 1")
    exact = 1.0 if p_e == 1.0 else -math.expm1(L * math.log1p(-p_e))
    return exact, -math.expm1(-L * p_e)


def inverse_q(p: float) -> float:
    """Inverse of the standard normal complementary CDF."""
    if not (0.0 < p < 1.0):
        raise DomainError("p must lie in (0, 1)")
    # Q^{-1}(p) = -Phi^{-1}(p) keeps full precision in both tails
    return -NormalDist().inv_cdf(p)


def finite_blocklength_rate(C_chan: float, V: float, n: int, p: float) -> float:
    """Normal approximation of the best rate at blocklength n and error p."""
    if n < 1 or V < 0:
        raise DomainError("need n >= 1 and V >= 0")
    return C_chan - math.sqrt(V / n) * inverse_q(p)


# --------------------------------------------------------------------------
# Summary table
# --------------------------------------------------------------------------

TABLE1_CLASSES = {
    "SR-ARQ": ("Θ(W log W)", "Θ(log W)", "Θ(log W)"),
    "SR-FEC, B=Θ(1)": ("Θ(W log W)", "Θ(log W)", "Θ(log W)"),
    "SR-FEC, B=Θ(W)": ("Θ(W)", "Θ(1)", "Θ(1)"),
}


def _safe(fn, *args):
    try:
        return fn(*args)
    except (DomainError, ParameterError):
        return None


def table1_summary(params: ProtocolParams) -> list[dict]:
    """Asymptotic class per protocol plus numeric estimates for ``params``."""
    W, p, C, R = params.W, params.p, params.capacity, params.R
    rho = (1.0 - p) * C
    en_arq = arq_max_retx_exact(W, p)
    lower, upper = _safe(buffer_bounds_arq, W, p) or (None, None)

    rows = []
    buf, dly, fb = TABLE1_CLASSES["SR-ARQ"]
    rows.append({
        "protocol": "SR-ARQ",
        "throughput_class": "(1-p)C",
        "throughput": rho,
        "buffer_class": buf,
        "delay_class": dly,
        "feedback_overhead_class": fb,
        "max_tx_exact": en_arq,
        "max_tx_asymptotic": _safe(arq_max_retx_asymptotic, W, p),
        "buffer_lower": lower,
        "buffer_upper": upper,
        "delay_upper": None if upper is None else littles_delay(upper, W, p, R),
        "ack_bits": max(1, math.ceil(math.log2(W))) if W > 1 else 1,
    })

    B1 = params.B if params.B < W else 1
    buf, dly, fb = TABLE1_CLASSES["SR-FEC, B=Θ(1)"]
    en1 = fec_max_retx_exact(W, B1, p)
    rows.append({
        "protocol": "SR-FEC, B=Θ(1)",
        "B": B1,
        "throughput_class": "(1-p)C",
        "throughput": rho,
        "buffer_class": buf,
        "delay_class": dly,
        "feedback_overhead_class": fb,
        "max_tx_exact": en1,
        "max_tx_asymptotic": _safe(fec_max_retx_asymptotic_regime1, W, B1, p),
        "per_packet_tx": en1 / B1,
        "ack_bits": max(1, math.ceil(math.log2(W // B1))) if W // B1 > 1 else 1,
    })

    per_block, per_packet = fec_retx_regime2(W, p)
    qbuf = fec_buffer_regime2(W, p)
    buf, dly, fb = TABLE1_CLASSES["SR-FEC, B=Θ(W)"]
    rows.append({
        "protocol": "SR-FEC, B=Θ(W)",
        "B": W,
        "throughput_class": "(1-p)C",
        "throughput": rho,
        "buffer_class": buf,
        "delay_class": dly,
        "feedback_overhead_class": fb,
        "max_tx_exact": fec_max_retx_exact(W, W, p),
        "max_tx_asymptotic": per_block,
        "per_packet_tx": per_packet,
        "buffer": qbuf,
        "delay": littles_delay(qbuf, W, p, R),
        "ack_bits": 1,
    })
    return rows
