"""Multi-round experiments and clients-per-round sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

import numpy as np

from fedsched.core import ClientId, ClusterSpec, ModelParams, validate_resource_spec
from fedsched.profiler import DEFAULT_INTERVAL_S, summary_to_properties
from fedsched.scheduler import COMPLETED, OOM_FAILED, RoundReport, submit_round, utilisation
from fedsched.strategy import (
    RESOURCE_AWARE_FEDAVG,
    STATIC_FEDAVG,
    ClientManagerState,
    StrategyConfig,
    aggregate_fit,
    configure_fit,
    on_failure,
)
from fedsched.workload import WorkloadModelConfig, WorkloadProfile, synth_workload

# Scale of the synthetic local update applied to the global model.
UPDATE_SCALE = 0.01


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Cohort:
    fraction: float
    batch_size: int
    num_samples: int
    speed_factor: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    cluster: ClusterSpec
    strategy: StrategyConfig
    workload: WorkloadModelConfig
    cohorts: Tuple[Cohort, ...]
    seed: int = 0
    rounds: int = 2
    pool_size: int = 100
    clients_per_round: int = 100
    monitor_interval_s: float = DEFAULT_INTERVAL_S
    model_dim: int = 8
    noise_sigma: float = 0.0
    # Off: every round samples the same seed-determined clients.
    resample_each_round: bool = False

    def errors(self) -> List[str]:
        out = []
        if self.rounds < 1:
            out.append("rounds must be a positive integer")
        if self.pool_size < 1:
            out.append("pool_size must be a positive integer")
        if not 1 <= self.clients_per_round <= self.pool_size:
            out.append(f"clients_per_round ({self.clients_per_round}) must lie in [1, pool_size={self.pool_size}]")
        if not self.monitor_interval_s > 0:
            out.append("monitor_interval_s must be positive")
        if self.model_dim < 1:
            out.append("model_dim must be a positive integer")
        if self.noise_sigma < 0:
            out.append("noise_sigma must be non-negative")
        if not self.cohorts:
            out.append("at least one cohort is required")
        elif abs(sum(c.fraction for c in self.cohorts) - 1.0) > 1e-9:
            out.append(f"cohort fractions sum to {sum(c.fraction for c in self.cohorts)!r}, not 1")
        for i, c in enumerate(self.cohorts):
            if not c.fraction >= 0 or c.batch_size < 1 or c.num_samples < 1 or not c.speed_factor > 0:
                out.append(f"cohort {i} has a non-positive parameter")
        why = validate_resource_spec(self.strategy.default_spec, self.cluster)
        if why is not None:
            out.append(f"default spec does not fit the cluster: {why}")
        return out

    def validate(self) -> "ExperimentConfig":
        errs = self.errors()
        if errs:
            raise ConfigError("; ".join(errs))
        return self


@dataclass(frozen=True)
class ClientSetup:
    client: ClientId
    batch_size: int
    num_samples: int
    speed_factor: float


def cohort_sizes(fractions: Sequence[float], pool_size: int) -> List[int]:
    """Split ``pool_size`` by fractions with largest-remainder rounding."""
    raw = [f * pool_size for f in fractions]
    sizes = [math.floor(x) for x in raw]
    by_remainder = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in by_remainder[: pool_size - sum(sizes)]:
        sizes[i] += 1
    return sizes


def build_pool(cfg: ExperimentConfig) -> List[ClientSetup]:
    """Clients in id order; cohorts occupy contiguous id ranges."""
    pool = []
    cid = 0
    for cohort, size in zip(cfg.cohorts, cohort_sizes([c.fraction for c in cfg.cohorts], cfg.pool_size)):
        for _ in range(size):
            pool.append(ClientSetup(cid, cohort.batch_size, cohort.num_samples, cohort.speed_factor))
            cid += 1
    return pool


def _workload(setup: ClientSetup, cfg: ExperimentConfig, round_index: int) -> WorkloadProfile:
    return synth_workload(
        setup.client,
        setup.batch_size,
        setup.num_samples,
        setup.speed_factor,
        cfg.workload,
        seed=cfg.seed * 100_003 + round_index,
        noise_sigma=cfg.noise_sigma,
    )


def _local_update(params: ModelParams, client: ClientId, round_index: int, seed: int) -> ModelParams:
    rng = np.random.default_rng([seed, round_index, client])
    return params + UPDATE_SCALE * rng.standard_normal(params.shape[0])


@dataclass
class ExperimentResult:
    kind: str
    reports: List[RoundReport]
    params: ModelParams
    state: ClientManagerState = field(repr=False)

    @property
    def makespans(self) -> List[float]:
        return [r.makespan_s for r in self.reports]

    @property
    def oom_count(self) -> int:
        return sum(r.oom_count for r in self.reports)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run ``cfg.rounds`` rounds back to back on one simulated clock.

    Unless ``cfg.resample_each_round`` is set, the sample is drawn from the
    experiment seed alone, so the same clients return every round and later
    rounds run on their measured footprints.
    """
    cfg.validate()
    pool = build_pool(cfg)
    setups = {s.client: s for s in pool}
    strat = cfg.strategy
    state = ClientManagerState.fresh(setups, strat.default_spec)
    params = np.zeros(cfg.model_dim)
    reports = []
    clock = 0.0
    for r in range(1, cfg.rounds + 1):
        sample_seed = [cfg.seed, r] if cfg.resample_each_round else cfg.seed
        plan, warnings = configure_fit(r, state, strat, cfg.clients_per_round, sample_seed, cfg.cluster)
        jobs = [(ins.client, ins.spec, _workload(setups[ins.client], cfg, r)) for ins in plan]
        report = submit_round(
            jobs,
            cfg.cluster,
            monitors_on=True,
            round_index=r,
            start_t=clock,
            interval_s=cfg.monitor_interval_s,
            warnings=warnings,
        )
        results = []
        for o in report.clients:
            if o.outcome == COMPLETED:
                props = summary_to_properties(o.summary, o.elapsed_s)
                update = _local_update(params, o.client, r, cfg.seed)
                results.append((o.client, update, setups[o.client].num_samples, props))
        if results:
            params, state = aggregate_fit(results, state)
        for o in report.clients:
            if o.outcome == OOM_FAILED:
                state = on_failure(o.client, state, strat, cfg.cluster)
        reports.append(report)
        clock = report.end_t
    return ExperimentResult(strat.kind, reports, params, state)


def steady_reports(reports: Sequence[RoundReport]) -> Sequence[RoundReport]:
    """Rounds after the first (profiling) round."""
    return reports[1:]


def mean_utilisation(reports: Sequence[RoundReport], cluster: ClusterSpec) -> Tuple[float, float]:
    """Makespan-weighted mean of per-round (allocated %, used %)."""
    total = sum(r.makespan_s for r in reports)
    if total <= 0:
        return 0.0, 0.0
    alloc = used = 0.0
    for r in reports:
        a, u = utilisation(r, cluster)
        alloc += a * r.makespan_s
        used += u * r.makespan_s
    return alloc / total, used / total


@dataclass(frozen=True)
class SweepRow:
    clients_per_round: int
    strategy: str
    total_time_s: float
    total_with_profiling_s: float
    alloc_vram_pct: float
    used_vram_pct: float
    oom_count: int


SWEEP_COLUMNS = (
    "clients_per_round",
    "strategy",
    "total_time_s",
    "total_with_profiling_s",
    "alloc_vram_pct",
    "used_vram_pct",
    "oom_count",
)


@dataclass(frozen=True)
class SweepResult:
    rows: Tuple[SweepRow, ...]

    def row(self, clients_per_round: int, strategy: str) -> SweepRow:
        for r in self.rows:
            if r.clients_per_round == clients_per_round and r.strategy == strategy:
                return r
        raise KeyError((clients_per_round, strategy))

    def gaps(self) -> List[Tuple[int, float]]:
        """``(point, static - aware)`` steady-state time per distinct point, in sweep order."""
        seen, out = set(), []
        for r in self.rows:
            if r.clients_per_round in seen:
                continue
            seen.add(r.clients_per_round)
            s = self.row(r.clients_per_round, STATIC_FEDAVG).total_time_s
            a = self.row(r.clients_per_round, RESOURCE_AWARE_FEDAVG).total_time_s
            out.append((r.clients_per_round, s - a))
        return out

    def speedup(self, clients_per_round: int, include_profiling: bool = False) -> float:
        col = "total_with_profiling_s" if include_profiling else "total_time_s"
        s = getattr(self.row(clients_per_round, STATIC_FEDAVG), col)
        a = getattr(self.row(clients_per_round, RESOURCE_AWARE_FEDAVG), col)
        if a == 0:
            return 1.0 if s == 0 else math.inf
        return s / a


def run_sweep(cfg: ExperimentConfig, sweep_points: Sequence[int]) -> SweepResult:
    """Run both strategies at every clients-per-round point.

    ``total_time_s`` skips the first round, which both strategies run on the
    default spec; ``total_with_profiling_s`` includes it. Utilisation is
    averaged over the same rounds as ``total_time_s`` (all rounds when there
    is only one).
    """
    bad = [p for p in sweep_points if not 1 <= p <= cfg.pool_size]
    if bad:
        raise ConfigError(f"sweep points {bad} outside [1, pool_size={cfg.pool_size}]")
    rows = []
    for point in sweep_points:
        for kind in (STATIC_FEDAVG, RESOURCE_AWARE_FEDAVG):
            run_cfg = replace(cfg, clients_per_round=point, strategy=replace(cfg.strategy, kind=kind))
            res = run_experiment(run_cfg)
            steady = steady_reports(res.reports)
            alloc, used = mean_utilisation(steady or res.reports, cfg.cluster)
            rows.append(
                SweepRow(
                    clients_per_round=point,
                    strategy=kind,
                    total_time_s=sum(r.makespan_s for r in steady),
                    total_with_profiling_s=sum(res.makespans),
                    alloc_vram_pct=alloc,
                    used_vram_pct=used,
                    oom_count=res.oom_count,
                )
            )
    return SweepResult(tuple(rows))
