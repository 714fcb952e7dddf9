"""Shared domain types: cluster shape, resource requests, usage readings.

Memory is integer MiB everywhere; times are float simulated seconds.
CPU counts and GPU fractions are kept as :class:`fractions.Fraction` so that
capacity bookkeeping never accumulates float error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Tuple, Union

import numpy as np

ClientId = int
ClientProperties = Dict[str, float]
ModelParams = np.ndarray

Number = Union[int, float, str, Fraction]

# Every GPU fraction handed to the ledger is a multiple of 1/GPU_GRANULARITY.
GPU_GRANULARITY = 1024

CANONICAL_PROPERTY_KEYS = (
    "peak_vram_mb",
    "peak_ram_mb",
    "mean_cpu_pct",
    "mean_gpu_pct",
    "cpu_time_s",
    "gpu_time_s",
    "train_duration_s",
    "uses_gpu",
)
# Reserved, never populated.
BATTERY_PROPERTY_KEY = "battery_pct"


def as_fraction(value: Number) -> Fraction:
    """Exact rational for ``value``; floats go through their shortest repr so 0.31 stays 31/100."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite quantity: {value!r}")
        return Fraction(repr(value))
    return Fraction(value)


def quantize_gpu_fraction(value: Number) -> Fraction:
    """Round a GPU share up to the next multiple of 1/1024."""
    frac = as_fraction(value)
    return Fraction(math.ceil(frac * GPU_GRANULARITY), GPU_GRANULARITY)


@dataclass(frozen=True)
class GpuDevice:
    device_index: int
    vram_mb: int

    def __post_init__(self) -> None:
        if self.vram_mb <= 0:
            raise ValueError(f"GPU {self.device_index}: vram_mb must be positive, got {self.vram_mb}")


@dataclass(frozen=True)
class ClusterSpec:
    """Capacities of the single simulated machine."""

    cpu_cores: Fraction
    gpus: Tuple[GpuDevice, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "cpu_cores", as_fraction(self.cpu_cores))
        object.__setattr__(self, "gpus", tuple(self.gpus))
        if self.cpu_cores < 1:
            raise ValueError(f"cluster needs at least 1 CPU core, got {self.cpu_cores}")
        indices = [g.device_index for g in self.gpus]
        if len(set(indices)) != len(indices):
            raise ValueError(f"duplicate GPU device indices: {indices}")

    @classmethod
    def single_node(cls, cpu_cores: Number, gpu_vram_mb: Tuple[int, ...] = ()) -> "ClusterSpec":
        return cls(cpu_cores, tuple(GpuDevice(i, v) for i, v in enumerate(gpu_vram_mb)))

    @property
    def num_gpus(self) -> int:
        return len(self.gpus)

    @property
    def total_vram_mb(self) -> int:
        return sum(g.vram_mb for g in self.gpus)

    @property
    def max_device_vram_mb(self) -> int:
        return max((g.vram_mb for g in self.gpus), default=0)


@dataclass(frozen=True)
class ResourceSpec:
    """Resources requested for one client task.

    ``num_gpus`` is a share of a single device; ``vram_mb`` is the memory
    budget reserved on that device.
    """

    num_cpus: Fraction = Fraction(1)
    num_gpus: Fraction = Fraction(0)
    vram_mb: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "num_cpus", as_fraction(self.num_cpus))
        object.__setattr__(self, "num_gpus", as_fraction(self.num_gpus))
        if int(self.vram_mb) != self.vram_mb:
            raise ValueError(f"vram_mb must be an integer MiB count, got {self.vram_mb!r}")
        object.__setattr__(self, "vram_mb", int(self.vram_mb))

    @property
    def gpu_share(self) -> Fraction:
        """GPU fraction as the ledger books it (quantized up)."""
        return quantize_gpu_fraction(self.num_gpus)

    def replace(self, **changes) -> "ResourceSpec":
        fields = {"num_cpus": self.num_cpus, "num_gpus": self.num_gpus, "vram_mb": self.vram_mb}
        fields.update(changes)
        return ResourceSpec(**fields)


def validate_resource_spec(spec: ResourceSpec, cluster: ClusterSpec) -> Optional[str]:
    """Return ``None`` if ``spec`` can ever be placed on ``cluster``, else a description of why not."""
    if spec.num_cpus < 0 or spec.num_gpus < 0 or spec.vram_mb < 0:
        return "negative resource demand"
    if spec.num_cpus > cluster.cpu_cores:
        return f"cpu demand exceeds capacity ({spec.num_cpus} > {cluster.cpu_cores})"
    if spec.num_gpus > 0:
        if not cluster.gpus:
            return "gpu demand on a cluster without GPUs"
        if spec.gpu_share > 1:
            return f"gpu fraction exceeds a single device ({spec.num_gpus})"
        if spec.vram_mb > cluster.max_device_vram_mb:
            return f"vram demand exceeds device capacity ({spec.vram_mb} > {cluster.max_device_vram_mb} MB)"
    return None


@dataclass(frozen=True)
class UsageSample:
    t: float
    cpu_pct: float
    ram_mb: float
    gpu_pct: float
    vram_mb: float

    def __post_init__(self) -> None:
        for name in ("cpu_pct", "ram_mb", "gpu_pct", "vram_mb"):
            if getattr(self, name) < 0:
                raise ValueError(f"negative {name} in usage sample at t={self.t}")


@dataclass(frozen=True)
class UsageSummary:
    peak_vram_mb: float
    mean_vram_mb: float
    peak_ram_mb: float
    mean_cpu_pct: float
    mean_gpu_pct: float
    cpu_time_s: float
    gpu_time_s: float
    n_samples: int
    mean_ram_mb: float = field(default=0.0)

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("a usage summary needs at least one sample")


def check_params(params: ModelParams, dim: Optional[int] = None) -> ModelParams:
    arr = np.asarray(params, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"model params must be a flat vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"model params have dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("model params contain non-finite entries")
    return arr
