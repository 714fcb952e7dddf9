"""Deterministic simulator for resource-aware scheduling of federated learning rounds."""

from fedsched.core import ClusterSpec, GpuDevice, ResourceSpec, UsageSample, UsageSummary, validate_resource_spec
from fedsched.experiment import ExperimentConfig, run_experiment, run_sweep
from fedsched.scheduler import submit_round, utilisation, vram_to_gpu_ratio

__all__ = [
    "ClusterSpec",
    "ExperimentConfig",
    "GpuDevice",
    "ResourceSpec",
    "UsageSample",
    "UsageSummary",
    "run_experiment",
    "run_sweep",
    "submit_round",
    "utilisation",
    "validate_resource_spec",
    "vram_to_gpu_ratio",
]
