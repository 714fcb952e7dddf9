"""Synthetic ground-truth client workloads.

A workload is a training duration plus piecewise-constant usage traces.
The scheduler's OOM detector and the synthetic stats provider read them;
strategies only ever see what the profiler measured.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np

from fedsched.core import ClientId

# Number of constant steps used to approximate the linear warm-up ramp.
RAMP_STEPS = 8

WARMUP_CPU_PCT = 100.0
PLATEAU_CPU_PCT = 40.0
WARMUP_GPU_PCT = 20.0
PLATEAU_GPU_PCT = 90.0


@dataclass(frozen=True)
class WorkloadModelConfig:
    model_mb: float = 400.0
    per_sample_mb: float = 2.0
    base_mb: float = 300.0
    step_time_s_per_ksample: float = 2.0
    warmup_fraction: float = 0.1
    num_local_epochs: int = 1

    def __post_init__(self) -> None:
        for name in ("model_mb", "per_sample_mb", "base_mb", "step_time_s_per_ksample"):
            if not getattr(self, name) > 0:
                raise ValueError(f"workload {name} must be positive")
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("workload warmup_fraction must lie in [0, 1)")
        if self.num_local_epochs < 1:
            raise ValueError("workload num_local_epochs must be a positive integer")


@dataclass(frozen=True)
class TracePoint:
    """Usage from ``t`` (elapsed seconds) until the next point."""

    t: float
    vram_mb: int
    ram_mb: int
    cpu_pct: float
    gpu_pct: float


@dataclass(frozen=True)
class WorkloadProfile:
    client: ClientId
    duration_s: float
    trace: Tuple[TracePoint, ...]
    true_peak_vram_mb: int

    @cached_property
    def breakpoints(self) -> Tuple[float, ...]:
        return tuple(p.t for p in self.trace)


def peak_vram_mb(batch_size: int, cfg: WorkloadModelConfig) -> int:
    return round(cfg.base_mb + cfg.model_mb + cfg.per_sample_mb * batch_size)


def synth_workload(
    client: ClientId,
    batch_size: int,
    num_samples: int,
    speed_factor: float,
    cfg: WorkloadModelConfig,
    seed: int = 0,
    noise_sigma: float = 0.0,
    uses_gpu: bool = True,
) -> WorkloadProfile:
    """Build the hidden workload of one client's local training.

    VRAM ramps linearly (in ``RAMP_STEPS`` constant steps) from ``base_mb``
    over the warm-up window, then holds at
    ``base_mb + model_mb + per_sample_mb * batch_size``. Duration is linear in
    epochs and samples and inverse in ``speed_factor``; ``noise_sigma > 0``
    multiplies it by a seeded log-normal factor.
    """
    if batch_size < 1 or num_samples < 1 or not speed_factor > 0:
        raise ValueError("batch_size, num_samples and speed_factor must be positive")
    duration = cfg.num_local_epochs * num_samples * cfg.step_time_s_per_ksample / (1000.0 * speed_factor)
    if noise_sigma > 0:
        rng = np.random.default_rng([seed, client])
        duration *= math.exp(noise_sigma * rng.standard_normal())

    peak = peak_vram_mb(batch_size, cfg) if uses_gpu else 0
    base_vram = round(cfg.base_mb) if uses_gpu else 0
    ram_base = round(cfg.base_mb)
    ram_peak = round(cfg.base_mb + cfg.model_mb)
    gpu_plateau = PLATEAU_GPU_PCT if uses_gpu else 0.0
    gpu_warm = WARMUP_GPU_PCT if uses_gpu else 0.0

    points = []
    warmup_end = cfg.warmup_fraction * duration
    if warmup_end > 0:
        for j in range(RAMP_STEPS):
            points.append(
                TracePoint(
                    t=warmup_end * j / RAMP_STEPS,
                    vram_mb=round(base_vram + (peak - base_vram) * j / RAMP_STEPS),
                    ram_mb=round(ram_base + (ram_peak - ram_base) * j / RAMP_STEPS),
                    cpu_pct=WARMUP_CPU_PCT,
                    gpu_pct=gpu_warm,
                )
            )
    points.append(TracePoint(warmup_end, peak, ram_peak, PLATEAU_CPU_PCT, gpu_plateau))
    return WorkloadProfile(client, duration, tuple(points), max(p.vram_mb for p in points))


def trace_at(w: WorkloadProfile, elapsed: float) -> TracePoint:
    """Usage ``elapsed`` seconds into the run (right-continuous at breakpoints)."""
    if not 0 <= elapsed <= w.duration_s:
        raise ValueError(f"elapsed={elapsed} outside [0, {w.duration_s}] for client {w.client}")
    i = bisect.bisect_right(w.breakpoints, elapsed) - 1
    return w.trace[i]


def constant_workload(client: ClientId, duration_s: float, vram_mb: int, gpu_pct: float = PLATEAU_GPU_PCT) -> WorkloadProfile:
    """Flat trace; handy for hand-traced scheduling scenarios."""
    point = TracePoint(0.0, vram_mb, vram_mb, PLATEAU_CPU_PCT, gpu_pct if vram_mb > 0 else 0.0)
    return WorkloadProfile(client, float(duration_s), (point,), vram_mb)
