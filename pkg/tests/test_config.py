import dataclasses
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsched.config import parse_config, serialize_config
from fedsched.experiment import ConfigError
from fedsched.scenarios import oom_scenario, scenario_a, scenario_b

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """\
[experiment]
rounds = 2
pool_size = 10
clients_per_round = 5

[cluster]
cpu_cores = 4
gpu_vram_mb = 8192

[strategy]
kind = static_fedavg   # trailing comment
default_num_gpus = 1
default_vram_mb = 8192

[workload]
model_mb = 100
per_sample_mb = 1.5
base_mb = 200
step_time_s_per_ksample = 1.0

[cohort.0]
fraction = 1
batch_size = 64
num_samples = 300
"""


def test_minimal_file():
    cfg = parse_config(MINIMAL)
    assert len(cfg.cohorts) == 1 and cfg.cohorts[0].fraction == 1.0
    assert cfg.monitor_interval_s == 0.7 and cfg.strategy.safety_margin == 1.1
    assert cfg.cluster.gpus[0].vram_mb == 8192


def test_too_many_clients_names_both_keys():
    text = MINIMAL.replace("clients_per_round = 5", "clients_per_round = 150").replace("pool_size = 10", "pool_size = 100")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msg = str(exc.value)
    assert "clients_per_round" in msg and "pool_size" in msg and "line 4" in msg and "[experiment]" in msg


def test_heterogeneous_thirds():
    text = MINIMAL.replace(
        "[cohort.0]\nfraction = 1\nbatch_size = 64\nnum_samples = 300\n",
        "".join(f"[cohort.{i}]\nfraction = 0.3333333333333333\nbatch_size = {b}\nnum_samples = 300\n\n" for i, b in enumerate((32, 1024, 2048))),
    )
    cfg = parse_config(text)
    assert [c.batch_size for c in cfg.cohorts] == [32, 1024, 2048]


def test_ratio_syntax_for_fractions():
    text = MINIMAL.replace("fraction = 1", "fraction = 1/1")
    assert parse_config(text).cohorts[0].fraction == 1.0


@pytest.mark.parametrize(
    "old, new, fragment",
    [
        ("model_mb = 100", "model_mb = 1,5", "line 16: [workload] model_mb"),
        ("model_mb = 100", "model_mbb = 100", "unknown key"),
        ("rounds = 2\n", "", "[experiment] rounds: missing required key"),
        ("fraction = 1", "fraction = 0.9", "sum to"),
        ("[cluster]", "[clusterz]", "unknown section"),
        ("kind = static_fedavg", "kind = fedprox", "unknown strategy kind"),
        ("default_vram_mb = 8192", "default_vram_mb = 9000", "default spec"),
        ("rounds = 2", "rounds = 2\nrounds = 3", "duplicate key"),
        ("rounds = 2", "rounds 2", "expected 'key = value'"),
        ("seed", "seed = nan\n#", "seed"),
    ],
)
def test_errors_are_located(old, new, fragment):
    text = MINIMAL.replace(old, new) if old != "seed" else MINIMAL.replace("rounds = 2", "seed = nan\nrounds = 2")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert fragment in str(exc.value)


def test_missing_section():
    with pytest.raises(ConfigError, match=r"\[workload\]: missing section"):
        parse_config(MINIMAL.split("[workload]")[0] + "[cohort.0]\nfraction = 1\nbatch_size = 1\nnum_samples = 1\n")


def test_decimal_point_only():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("per_sample_mb = 1.5", "per_sample_mb = 1,5"))


@pytest.mark.parametrize("make", [scenario_a, scenario_b, oom_scenario])
def test_round_trip_presets(make):
    cfg = make()
    assert parse_config(serialize_config(cfg)) == cfg


@settings(max_examples=40)
@given(
    seed=st.integers(0, 2**31),
    resample=st.booleans(),
    rounds=st.integers(1, 10),
    pool=st.integers(1, 200),
    margin=st.floats(1.0, 3.0),
    warmup=st.floats(0.0, 0.9),
    vram=st.lists(st.integers(1024, 81920), min_size=0, max_size=4),
)
def test_round_trip_random(seed, resample, rounds, pool, margin, warmup, vram):
    from fedsched.core import ClusterSpec, ResourceSpec
    from fedsched.strategy import StrategyConfig
    from fedsched.workload import WorkloadModelConfig

    base = scenario_b()
    spec = ResourceSpec(1, 0.5, min(vram)) if vram else ResourceSpec(1, 0, 0)
    cfg = dataclasses.replace(
        base,
        seed=seed,
        resample_each_round=resample,
        rounds=rounds,
        pool_size=pool,
        clients_per_round=max(1, pool // 2),
        cluster=ClusterSpec.single_node(16, tuple(vram)),
        strategy=StrategyConfig(default_spec=spec, safety_margin=margin),
        workload=WorkloadModelConfig(400, 2.0, 300, 2.0, warmup, 1),
    )
    assert parse_config(serialize_config(cfg)) == cfg


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.ini")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    parse_config(path.read_text())
