"""Ready-made experiment configurations used by the examples and the acceptance suite."""

from __future__ import annotations

from fractions import Fraction

from fedsched.core import ClusterSpec, ResourceSpec
from fedsched.experiment import Cohort, ExperimentConfig
from fedsched.strategy import RESOURCE_AWARE_FEDAVG, StrategyConfig
from fedsched.workload import WorkloadModelConfig

GTX_1080TI_VRAM_MB = 11264


def scenario_a(kind: str = RESOURCE_AWARE_FEDAVG, rounds: int = 2, clients_per_round: int = 100) -> ExperimentConfig:
    """100 identical clients, each truly using 2600 MB for 10 s, on one 11264 MB GPU.

    The default spec reserves the whole GPU, so the profiling round runs
    clients one at a time.
    """
    return ExperimentConfig(
        cluster=ClusterSpec.single_node(8, (GTX_1080TI_VRAM_MB,)),
        strategy=StrategyConfig(kind=kind, default_spec=ResourceSpec(1, 1, GTX_1080TI_VRAM_MB)),
        # 300 + 400 + 2 * 950 = 2600 MB; 5000 samples * 2 s / 1000 = 10 s
        workload=WorkloadModelConfig(model_mb=400, per_sample_mb=2.0, base_mb=300, step_time_s_per_ksample=2.0, warmup_fraction=0.0),
        cohorts=(Cohort(1.0, batch_size=950, num_samples=5000),),
        rounds=rounds,
        pool_size=100,
        clients_per_round=clients_per_round,
    )


def scenario_b(kind: str = RESOURCE_AWARE_FEDAVG, rounds: int = 2) -> ExperimentConfig:
    """Three equal cohorts with batch sizes 32, 1024 and 2048 (peaks 764, 2748, 4796 MB)."""
    third = float(Fraction(1, 3))
    return ExperimentConfig(
        cluster=ClusterSpec.single_node(16, (GTX_1080TI_VRAM_MB,)),
        strategy=StrategyConfig(kind=kind, default_spec=ResourceSpec(1, 1, GTX_1080TI_VRAM_MB)),
        workload=WorkloadModelConfig(model_mb=400, per_sample_mb=2.0, base_mb=300, step_time_s_per_ksample=2.0, warmup_fraction=0.1),
        cohorts=(
            Cohort(third, batch_size=32, num_samples=5000),
            Cohort(third, batch_size=1024, num_samples=5000),
            Cohort(third, batch_size=2048, num_samples=5000),
        ),
        rounds=rounds,
        pool_size=90,
        clients_per_round=90,
    )


def oom_scenario(rounds: int = 4) -> ExperimentConfig:
    """Two clients that each truly need 6000 MB but start with a 2000 MB budget."""
    cluster = ClusterSpec.single_node(8, (GTX_1080TI_VRAM_MB,))
    # 2000/11264 of the device, rounded up to 182/1024
    default = ResourceSpec(1, Fraction(182, 1024), 2000)
    return ExperimentConfig(
        cluster=cluster,
        strategy=StrategyConfig(kind=RESOURCE_AWARE_FEDAVG, default_spec=default),
        # 300 + 400 + 2 * 2650 = 6000 MB
        workload=WorkloadModelConfig(model_mb=400, per_sample_mb=2.0, base_mb=300, step_time_s_per_ksample=2.0, warmup_fraction=0.0),
        cohorts=(Cohort(1.0, batch_size=2650, num_samples=5000),),
        rounds=rounds,
        pool_size=2,
        clients_per_round=2,
    )
