"""``fedsched`` command line: run, sweep, validate."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import List, Optional

from fedsched.config import parse_config
from fedsched.experiment import ConfigError, ExperimentConfig, run_experiment, run_sweep
from fedsched.report import (
    ROUNDS_COLUMNS,
    SWEEP_COLUMNS,
    TIMELINE_COLUMNS,
    csv_text,
    emit_svg,
    rounds_rows,
    sweep_rows,
    sweep_series,
    timeline_rows,
    utilisation_series,
    write_text,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load(path: str, seed: Optional[int]) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, f"{path}:\n{exc}") from exc
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


def _outdir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot create output directory {path}: {exc.strerror or exc}") from exc
    return out


def _write(fn, *args) -> None:
    try:
        fn(*args)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write output: {exc}") from exc


def _points(text: str) -> List[int]:
    try:
        pts = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not pts:
        raise argparse.ArgumentTypeError("no sweep points given")
    return pts


def cmd_run(args) -> int:
    cfg = _load(args.config, args.seed)
    out = _outdir(args.output)
    result = run_experiment(cfg)
    _write(write_text, out / "rounds.csv", csv_text(ROUNDS_COLUMNS, rounds_rows(result, cfg.cluster)))
    _write(write_text, out / "timeline.csv", csv_text(TIMELINE_COLUMNS, timeline_rows(result)))
    if cfg.cluster.gpus:
        series = utilisation_series(result, cfg.cluster)
        _write(emit_svg, series, "simulated time (s)", "VRAM (% of system)", out / "utilisation.svg", result.kind)
    for r in result.reports:
        print(f"round {r.round_index}: makespan {r.makespan_s:.3f} s, oom {r.oom_count}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args.config, args.seed)
    bad = [p for p in args.points if not 1 <= p <= cfg.pool_size]
    if bad:
        raise _Fail(EXIT_CONFIG, f"sweep point(s) {', '.join(map(str, bad))} outside [1, pool_size={cfg.pool_size}]")
    out = _outdir(args.output)
    sweep = run_sweep(cfg, args.points)
    _write(write_text, out / "sweep.csv", csv_text(SWEEP_COLUMNS, sweep_rows(sweep)))
    _write(emit_svg, sweep_series(sweep), "clients per round", "total simulated time (s)", out / "sweep.svg")
    for point, gap in sweep.gaps():
        print(f"{point} clients/round: static - aware = {gap:.3f} s, speedup {sweep.speedup(point):.3f}x")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args.config, args.seed)
    print(f"ok: {cfg.rounds} rounds, {cfg.clients_per_round}/{cfg.pool_size} clients, {len(cfg.cohorts)} cohort(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fedsched", description="Resource-aware federated round scheduling simulator.")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment, write rounds.csv and timeline.csv")
    run.add_argument("config")
    run.add_argument("-o", "--output", required=True)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="compare strategies over clients-per-round points")
    sweep.add_argument("config")
    sweep.add_argument("--points", type=_points, required=True, help="e.g. 10,50,100")
    sweep.add_argument("-o", "--output", required=True)
    sweep.set_defaults(func=cmd_sweep)

    val = sub.add_parser("validate", help="parse and check a config file")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)

    for p in (run, sweep, val):
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"fedsched: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
