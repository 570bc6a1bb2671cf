"""srwin command line: analyze, simulate, sweep, validate.

Exit codes: 0 success, 1 validation failure, 2 usage or parameter error,
3 simulation invariant violation, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence

from . import analytics as an
from .engine import (
    METRIC_FIELDS,
    ConfigError,
    ExperimentConfig,
    InsufficientDataError,
    SimulationInvariantError,
    run_replications,
    summarize,
    sweep,
)
from .validation import default_grid, read_grid, validate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_INVARIANT = 3
EXIT_IO = 4

COMMANDS = ("analyze", "simulate", "sweep", "validate")
FORMATS = ("csv", "json")
SIMULATE_COLUMNS = (
    "protocol", "W", "B", "p", "p_a", "R", "C", "copies", "seed", "replication",
    "throughput", "mean_occupancy", "mean_delay", "window_max_tx", "wasted_tx",
    "littles_residual",
)
SWEEP_COLUMNS = ("axis", "value") + SIMULATE_COLUMNS
VALIDATE_COLUMNS = ("check", "simulated", "analytic", "tolerance", "verdict")
ANALYZE_COLUMNS = ("quantity", "value")

# config-file key -> (ExperimentConfig field or RunSpec field, parser)
_INT_KEYS = ("W", "B", "R", "copies", "horizon", "warmup", "seed", "reps", "jobs")
_FLOAT_KEYS = ("p", "pa", "C", "tolerance")
_STR_KEYS = ("protocol", "out", "format", "axis", "values", "grid", "backend")
CONFIG_KEYS = _INT_KEYS + _FLOAT_KEYS + _STR_KEYS


class UsageError(Exception):
    pass


@dataclass
class RunSpec:
    command: str
    config: ExperimentConfig
    out: Optional[str] = None
    format: str = "csv"
    axis: Optional[str] = None
    values: List[str] = field(default_factory=list)
    grid: Optional[str] = None
    tolerance: Optional[float] = None
    backend: str = "auto"
    jobs: int = 1
    verbosity: int = 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="srwin", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--protocol", choices=("arq", "fec-ideal", "fec-oblivious"))
    ap.add_argument("--W", type=int, help="window size in packets (default 64)")
    ap.add_argument("--B", type=int, help="block size; must divide W (default 1)")
    ap.add_argument("--p", type=float, help="forward loss probability (default 0.1)")
    ap.add_argument("--pa", type=float, help="feedback loss probability (default 0)")
    ap.add_argument("--R", type=int, help="round-trip time in slots (default W/C)")
    ap.add_argument("--C", type=float, help="packets per slot, at most 1 (default W/R, or 1)")
    ap.add_argument("--copies", type=int, help="copies of each ACK (default 1)")
    ap.add_argument("--horizon", type=int, help="slots per run (default: sized for 1e5 deliveries)")
    ap.add_argument("--warmup", type=int, help="slots before measurement (default automatic)")
    ap.add_argument("--seed", type=int, help="base seed (default $SRWIN_SEED or 1)")
    ap.add_argument("--reps", type=int, help="replications (default 10)")
    ap.add_argument("--axis", help="sweep parameter: W, p, B, p_a or copies")
    ap.add_argument("--values", help="comma-separated sweep values")
    ap.add_argument("--config", help="file of 'key = value' lines")
    ap.add_argument("--out", help="output file (default stdout)")
    ap.add_argument("--format", choices=FORMATS)
    ap.add_argument("--grid", help="validate: CSV grid replacing the built-in one")
    ap.add_argument("--tolerance", type=float, help="validate: override every tolerance")
    ap.add_argument("--backend", choices=("auto", "fast", "reference"))
    ap.add_argument("--jobs", type=int, help="worker processes for replications (default 1)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def read_config_file(text: str) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "p_a":
            key = "pa"
        if key == "replications":
            key = "reps"
        if key not in CONFIG_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            else:
                values[key] = val
        except ValueError:
            raise UsageError(f"config key {key!r}: bad value {val!r}") from None
    return values


def _env_seed() -> int:
    raw = os.environ.get("SRWIN_SEED")
    if raw is None or raw == "":
        return ExperimentConfig.seed
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"SRWIN_SEED: not an integer: {raw!r}") from None


def parse_config(argv: Sequence[str]) -> RunSpec:
    """Flags override config-file values, which override defaults."""
    ap = _build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:  # --help
            raise
        raise UsageError("invalid command line") from exc
    merged: Dict[str, Any] = {}
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                merged.update(read_config_file(fh.read()))
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
    for key in CONFIG_KEYS:
        val = getattr(ns, key, None)
        if val is not None:
            merged[key] = val

    seed = merged.get("seed", _env_seed())
    cfg = ExperimentConfig(
        protocol=merged.get("protocol", ExperimentConfig.protocol),
        W=merged.get("W", ExperimentConfig.W),
        B=merged.get("B", ExperimentConfig.B),
        p=merged.get("p", ExperimentConfig.p),
        p_a=merged.get("pa", ExperimentConfig.p_a),
        R=merged.get("R"),
        C=merged.get("C"),
        copies=merged.get("copies", ExperimentConfig.copies),
        horizon=merged.get("horizon"),
        warmup=merged.get("warmup"),
        seed=seed,
        replications=merged.get("reps", ExperimentConfig.replications),
    )
    fmt = merged.get("format", "csv")
    if fmt not in FORMATS:
        raise UsageError(f"format: must be one of {FORMATS}")
    values = [v.strip() for v in merged.get("values", "").split(",") if v.strip()]
    jobs = merged.get("jobs", 1)
    if jobs < 1:
        raise UsageError("jobs: must be >= 1")
    return RunSpec(
        command=ns.command, config=cfg, out=merged.get("out"), format=fmt,
        axis=merged.get("axis"), values=values, grid=merged.get("grid"),
        tolerance=merged.get("tolerance"), backend=merged.get("backend", "auto"),
        jobs=jobs, verbosity=ns.verbose,
    )


# ---------------------------------------------------------------- formatting


def _json_value(v: Any) -> Any:
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_json_value(x) for x in v]
    return v


def _csv_text(columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")  # RFC 4180
    w.writerow(columns)
    for row in rows:
        w.writerow([_csv_cell(row.get(c, "")) for c in columns])
    return buf.getvalue()


def _csv_cell(v: Any) -> Any:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _json_text(obj: Any) -> str:
    return json.dumps(_json_value(obj), indent=2, ensure_ascii=False) + "\n"


def _emit(spec: RunSpec, text: str) -> None:
    if spec.out is None:
        sys.stdout.write(text)
        return
    with open(spec.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _report_rows(reports) -> List[Dict[str, Any]]:
    return [r.as_dict() for r in reports]


def _summary_rows(cfg: ExperimentConfig, reports) -> List[Dict[str, Any]]:
    summary = summarize(reports)
    base = {c: getattr(cfg, c) for c in SIMULATE_COLUMNS[:9]}
    mean = dict(base, replication="mean")
    err = dict(base, replication="stderr")
    for name in METRIC_FIELDS:
        mean[name] = summary[name]["mean"]
        err[name] = summary[name]["stderr"]
    return [mean, err]


# ------------------------------------------------------------------ commands


def analysis_quantities(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Every closed-form quantity for one parameter set."""
    W, B, p, p_a, R, C = cfg.W, cfg.B, cfg.p, cfg.p_a, cfg.R, cfg.C

    def safe(fn, *args):
        try:
            return fn(*args)
        except (an.DomainError, an.ParameterError):
            return None

    lower, upper = safe(an.buffer_bounds_arq, W, p) or (None, None)
    fec_exact = an.fec_max_retx_exact(W, B, p)
    block_tx, packet_tx = an.fec_retx_regime2(B, p)
    q2 = an.fec_buffer_regime2(W, p)
    dep = an.dependent_tx_expected(B, p)
    q = {
        "W": W, "B": B, "M": W // B, "p": p, "p_a": p_a, "R": R, "C": C,
        "copies": cfg.copies,
        "throughput": (1.0 - p) * C,
        "throughput_lossy_feedback": an.lossy_feedback_throughput(p, p_a, cfg.copies, C),
        "arq_max_tx_exact": an.arq_max_retx_exact(W, p),
        "arq_max_tx_asymptotic": safe(an.arq_max_retx_asymptotic, W, p),
        "arq_buffer_lower": lower,
        "arq_buffer_upper": upper,
        "arq_delay_upper": None if upper is None else an.littles_delay(upper, W, p, R),
        "fec_max_tx_exact": fec_exact,
        "fec_max_tx_per_packet": fec_exact / B,
        "fec_max_tx_regime1": safe(an.fec_max_retx_asymptotic_regime1, W, B, p),
        "fec_block_tx_regime2": block_tx,
        "fec_packet_tx_regime2": packet_tx,
        "fec_buffer_regime2": q2,
        "fec_delay_regime2": an.littles_delay(q2, W, p, R),
        "dependent_block_tx": dep,
        "dependent_extra_tx": dep - B / (1.0 - p),
        "extra_packet_budget": an.extra_packet_budget(B),
        "dependent_throughput_loss": an.throughput_loss_dependent(B, W, p, R),
        "redundant_acks": safe(an.redundant_ack_count, W),
    }
    for row in an.table1_summary(an.ProtocolParams(W=W, p=p, p_a=p_a, R=R, C=C, B=B)):
        name = row["protocol"]
        for k in ("throughput_class", "buffer_class", "delay_class", "feedback_overhead_class"):
            q[f"{name}: {k}"] = row[k]
    return q


def cmd_analyze(spec: RunSpec) -> int:
    cfg = replace(spec.config, protocol="fec-ideal").resolve()
    q = analysis_quantities(cfg)
    if spec.format == "json":
        _emit(spec, _json_text(q))
    else:
        _emit(spec, _csv_text(ANALYZE_COLUMNS, [{"quantity": k, "value": v} for k, v in q.items()]))
    return EXIT_OK


def cmd_simulate(spec: RunSpec) -> int:
    cfg = spec.config.resolve()
    reports = run_replications(cfg, backend=spec.backend, jobs=spec.jobs)
    if spec.format == "json":
        obj = {
            "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
            "replications": _report_rows(reports),
            "summary": summarize(reports),
        }
        _emit(spec, _json_text(obj))
    else:
        rows = _report_rows(reports) + _summary_rows(cfg, reports)
        _emit(spec, _csv_text(SIMULATE_COLUMNS, rows))
    return EXIT_OK


def cmd_sweep(spec: RunSpec) -> int:
    if spec.axis is None:
        raise UsageError("sweep needs --axis")
    reports = sweep(spec.config, spec.axis, spec.values, backend=spec.backend, jobs=spec.jobs)
    rows = []
    for r in reports:
        row = r.as_dict()
        row["axis"] = spec.axis
        row["value"] = row[spec.axis]
        rows.append(row)
    if spec.format == "json":
        _emit(spec, _json_text({"axis": spec.axis, "rows": rows}))
    else:
        _emit(spec, _csv_text(SWEEP_COLUMNS, rows))
    return EXIT_OK


def cmd_validate(spec: RunSpec) -> int:
    seed = spec.config.seed
    if spec.grid:
        try:
            with open(spec.grid, encoding="utf-8", newline="") as fh:
                grid = read_grid(fh, seed)
        except OSError as exc:
            raise UsageError(f"cannot read grid: {exc}") from None
        except ValueError as exc:
            raise UsageError(f"grid: {exc}") from None
    else:
        grid = default_grid(seed)
    results = validate(grid, spec.tolerance)
    rows = [
        {"check": r.check, "simulated": r.simulated, "analytic": r.analytic,
         "tolerance": r.tolerance, "verdict": r.verdict}
        for r in results
    ]
    if spec.format == "json":
        _emit(spec, _json_text({"checks": rows, "passed": all(r.passed for r in results)}))
    else:
        _emit(spec, _csv_text(VALIDATE_COLUMNS, rows))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


HANDLERS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        spec = parse_config(argv)
        return HANDLERS[spec.command](spec)
    except UsageError as exc:
        print(f"srwin: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, an.ParameterError, an.DomainError, InsufficientDataError) as exc:
        print(f"srwin: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationInvariantError as exc:
        print(f"srwin: simulation invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"srwin: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
