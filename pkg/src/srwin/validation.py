"""Paired simulation/analytic checks over a grid of configurations."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, TextIO

from . import analytics as an
from .engine import ExperimentConfig, MetricsReport, run

GRID_COLUMNS = ("protocol", "W", "B", "p", "p_a", "copies", "horizon", "seed")


@dataclass(frozen=True)
class CheckResult:
    check: str
    simulated: float
    analytic: float
    tolerance: float
    kind: str  # "rel", "abs" or "max" (simulated must not exceed the analytic bound)
    passed: bool

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def compare(simulated: float, analytic: float, tolerance: float, kind: str) -> bool:
    if math.isnan(simulated) or math.isnan(analytic):
        return False
    if kind == "rel":
        if analytic == 0.0:
            return abs(simulated) <= tolerance
        return abs(simulated - analytic) <= tolerance * abs(analytic)
    if kind == "abs":
        return abs(simulated - analytic) <= tolerance
    if kind == "max":
        return simulated <= analytic + tolerance
    raise ValueError(f"unknown comparison {kind!r}")


def default_grid(seed: int = 1) -> List[ExperimentConfig]:
    rows = [
        dict(protocol="arq", W=64, p=0.0),
        dict(protocol="arq", W=16, p=0.1),
        dict(protocol="arq", W=64, p=0.05),
        dict(protocol="arq", W=64, p=0.1),
        dict(protocol="arq", W=256, p=0.1),
        dict(protocol="arq", W=64, p=0.1, p_a=0.1),
        dict(protocol="arq", W=64, p=0.1, p_a=0.3),
        dict(protocol="fec-ideal", W=64, B=4, p=0.1),
        dict(protocol="fec-ideal", W=256, B=256, p=0.1),
        dict(protocol="fec-oblivious", W=30, B=30, p=0.0),
    ]
    return [ExperimentConfig(seed=seed, replications=1, **r) for r in rows]


def read_grid(stream: TextIO, seed: int = 1) -> List[ExperimentConfig]:
    """Grid rows from CSV; any subset of GRID_COLUMNS, with a header."""
    out = []
    reader = csv.DictReader(stream)
    for row in reader:
        unknown = set(row) - set(GRID_COLUMNS)
        if unknown:
            raise ValueError(f"unknown grid column(s): {', '.join(sorted(unknown))}")
        kw = {}
        for key, val in row.items():
            if val is None or val == "":
                continue
            if key == "protocol":
                kw[key] = val.strip()
            elif key in ("p", "p_a"):
                kw[key] = float(val)
            else:
                kw[key] = int(val)
        kw.setdefault("seed", seed)
        out.append(ExperimentConfig(replications=1, **kw))
    return out


def _label(cfg: ExperimentConfig) -> str:
    s = f"{cfg.protocol} W={cfg.W}"
    if cfg.protocol != "arq":
        s += f" B={cfg.B}"
    s += f" p={cfg.p:g}"
    if cfg.p_a:
        s += f" p_a={cfg.p_a:g} copies={cfg.copies}"
    return s


def checks_for(cfg: ExperimentConfig, rep: MetricsReport):
    """(name, simulated, analytic, tolerance, kind) tuples for one run."""
    label = _label(cfg)
    rho = an.lossy_feedback_throughput(cfg.p, cfg.p_a, cfg.copies, cfg.C)
    out = []
    exact = cfg.protocol == "arq" and cfg.p == 0.0 and cfg.p_a == 0.0
    if exact:
        out.append((f"{label}: throughput = C", rep.throughput, cfg.C, 0.0, "abs"))
        out.append((f"{label}: E[Q] = 0", rep.mean_occupancy, 0.0, 0.0, "abs"))
        out.append((f"{label}: E[D] = 0", rep.mean_delay, 0.0, 0.0, "abs"))
        return out
    if cfg.protocol != "fec-oblivious":
        tol = 0.01 if cfg.p_a == 0.0 else 0.02
        out.append((f"{label}: throughput", rep.throughput, rho, tol, "rel"))
    out.append((f"{label}: Little residual", rep.littles_residual, 0.0, 0.02, "max"))
    if cfg.protocol == "arq" and cfg.p_a == 0.0:
        out.append((f"{label}: window max tx", rep.window_max_tx,
                    an.arq_max_retx_exact(cfg.W, cfg.p), 0.05, "rel"))
    if cfg.protocol == "fec-ideal":
        out.append((f"{label}: window max tx", rep.window_max_tx,
                    an.fec_max_retx_exact(cfg.W, cfg.B, cfg.p), 0.05, "rel"))
        if cfg.B == cfg.W:
            out.append((f"{label}: per-packet tx", rep.per_packet_tx,
                        an.fec_retx_regime2(cfg.B, cfg.p)[1], 0.02, "rel"))
            out.append((f"{label}: E[Q]/W", rep.mean_occupancy / cfg.W,
                        an.fec_buffer_regime2(cfg.W, cfg.p) / cfg.W, 0.05, "rel"))
    if cfg.protocol == "fec-oblivious":
        block_tx = rep.per_packet_tx * cfg.B
        out.append((f"{label}: block tx", block_tx,
                    an.dependent_tx_expected(cfg.B, cfg.p), 0.05 / (1.0 - cfg.p), "abs"))
    return out


def validate(grid: Sequence[ExperimentConfig], tolerance: Optional[float] = None,
             runner: Callable[[ExperimentConfig], MetricsReport] = run) -> List[CheckResult]:
    """Run every grid row once and evaluate its checks.

    ``tolerance`` replaces every stated tolerance when given.
    """
    results = []
    for cfg in grid:
        cfg = replace(cfg, replications=1).resolve()
        rep = runner(cfg)
        for name, sim, ana, tol, kind in checks_for(cfg, rep):
            if tolerance is not None:
                tol = tolerance
            results.append(CheckResult(name, sim, ana, tol, kind, compare(sim, ana, tol, kind)))
    return results
