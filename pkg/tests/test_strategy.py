import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsched.core import ResourceSpec
from fedsched.strategy import (
    RESOURCE_AWARE_FEDAVG,
    STATIC_FEDAVG,
    ClientManagerState,
    StrategyConfig,
    aggregate_fit,
    configure_fit,
    fedavg_aggregate,
    next_resource_estimate,
    on_failure,
    sample_clients,
)

from oracles import weighted_mean

DEFAULT = ResourceSpec(1, 1, 11264)


def props(peak_vram, uses_gpu=1):
    return {
        "peak_vram_mb": peak_vram,
        "peak_ram_mb": 700.0,
        "mean_cpu_pct": 40.0,
        "mean_gpu_pct": 90.0 if uses_gpu else 0.0,
        "cpu_time_s": 4.0,
        "gpu_time_s": 9.0 if uses_gpu else 0.0,
        "train_duration_s": 10.0,
        "uses_gpu": float(uses_gpu),
    }


def aware(**kw):
    return StrategyConfig(kind=RESOURCE_AWARE_FEDAVG, default_spec=DEFAULT, **kw)


# -- sampling ---------------------------------------------------------------


def test_exhaustive_sample():
    assert sample_clients(range(10), 10, 0) == list(range(10))


def test_single_sample_is_member():
    assert sample_clients({3, 8, 11}, 1, 42)[0] in {3, 8, 11}


def test_sample_is_seeded_and_sorted():
    a = sample_clients(range(100), 20, [1, 2])
    assert a == sample_clients(range(100), 20, [1, 2])
    assert a == sorted(a) and len(set(a)) == 20


def test_oversample_is_an_error():
    with pytest.raises(ValueError):
        sample_clients(range(3), 4, 0)


def test_sampling_is_roughly_uniform():
    counts = np.zeros(10)
    for seed in range(2000):
        for c in sample_clients(range(10), 3, seed):
            counts[c] += 1
    expected = 2000 * 3 / 10
    assert np.all(np.abs(counts - expected) < 5 * math.sqrt(expected))


# -- resource estimates -----------------------------------------------------


def test_margin_arithmetic(gtx_cluster):
    spec, warning = next_resource_estimate(props(2600), gtx_cluster, aware())
    assert spec.vram_mb == 2860 and warning is None
    assert spec.num_gpus == Fraction(260, 1024)  # 2860 / 11264 = 260 / 1024 exactly
    assert spec.num_cpus == DEFAULT.num_cpus


def test_cpu_only_client(gtx_cluster):
    spec, _ = next_resource_estimate(props(0, uses_gpu=0), gtx_cluster, aware())
    assert spec.num_gpus == 0 and spec.vram_mb == 0


def test_clamp_with_warning(gtx_cluster):
    spec, warning = next_resource_estimate(props(11000), gtx_cluster, aware())
    assert spec.vram_mb == 11264 and spec.num_gpus == 1  # 12100 > 11264
    assert "clamped" in warning


def test_min_vram_floor(gtx_cluster):
    spec, _ = next_resource_estimate(props(10), gtx_cluster, aware())
    assert spec.vram_mb == 64


def test_missing_keys(gtx_cluster):
    with pytest.raises(KeyError):
        next_resource_estimate({"peak_vram_mb": 1.0}, gtx_cluster, aware())


@given(st.integers(1, 11264 * 10 // 11))
def test_tightening_never_inflates_overprovisioned_defaults(peak):
    from fedsched.core import ClusterSpec

    cluster = ClusterSpec.single_node(8, (11264,))
    spec, _ = next_resource_estimate(props(peak), cluster, aware())
    if math.ceil(peak * Fraction(11, 10)) <= DEFAULT.vram_mb:
        assert spec.vram_mb <= DEFAULT.vram_mb
        assert spec.num_gpus <= DEFAULT.num_gpus


# -- configure_fit ----------------------------------------------------------


def test_cold_start_uses_default(gtx_cluster):
    state = ClientManagerState.fresh(range(10), DEFAULT)
    plan, warnings = configure_fit(1, state, aware(), 5, 0, gtx_cluster)
    assert all(ins.spec == DEFAULT for ins in plan) and warnings == []


def test_second_round_uses_profiled_spec(gtx_cluster):
    state = ClientManagerState.fresh(range(10), DEFAULT)
    state.properties[7] = props(2600)
    plan, _ = configure_fit(2, state, aware(), 10, 0, gtx_cluster)
    by_id = {ins.client: ins.spec for ins in plan}
    assert by_id[7].vram_mb == 2860
    assert by_id[3] == DEFAULT
    assert state.last_round[7] == 2


def test_static_ignores_history(gtx_cluster):
    state = ClientManagerState.fresh(range(10), DEFAULT)
    state.properties[7] = props(2600)
    cfg = StrategyConfig(kind=STATIC_FEDAVG, default_spec=DEFAULT)
    plan, _ = configure_fit(2, state, cfg, 10, 0, gtx_cluster)
    assert all(ins.spec == DEFAULT for ins in plan)


def test_unknown_kind():
    with pytest.raises(ValueError):
        StrategyConfig(kind="fedprox")


# -- aggregation ------------------------------------------------------------


def test_aggregate_identical_params_updates_both():
    state = ClientManagerState.fresh(range(3), DEFAULT)
    theta = np.array([1.0, 2.0])
    out, state = aggregate_fit([(0, theta, 5, props(100)), (1, theta, 9, props(200))], state)
    np.testing.assert_array_equal(out, theta)
    assert state.properties[0]["peak_vram_mb"] == 100 and state.properties[1]["peak_vram_mb"] == 200


def test_aggregate_weighted():
    state = ClientManagerState.fresh(range(2), DEFAULT)
    out, _ = aggregate_fit([(0, np.array([2.0]), 1, props(1)), (1, np.array([4.0]), 3, props(1))], state)
    assert out[0] == pytest.approx(3.5)  # (2 + 12) / 4


def test_aggregate_leaves_non_participants_alone():
    state = ClientManagerState.fresh(range(3), DEFAULT)
    state.properties[2] = props(999)
    _, state = aggregate_fit([(0, np.zeros(1), 1, props(1))], state)
    assert state.properties[2]["peak_vram_mb"] == 999


def test_aggregate_empty():
    with pytest.raises(ValueError, match="no results to aggregate"):
        aggregate_fit([], ClientManagerState.fresh(range(1), DEFAULT))


def test_fedavg_single_entry_is_identity():
    theta = np.array([0.25, -3.0, 7.5])
    np.testing.assert_array_equal(fedavg_aggregate([(theta, 17)]), theta)


def test_fedavg_symmetry():
    out = fedavg_aggregate([(np.array([1.0, 0.0]), 1), (np.array([0.0, 1.0]), 1)])
    np.testing.assert_allclose(out, [0.5, 0.5])


def test_fedavg_equal_weights_is_mean():
    rng = np.random.default_rng(3)
    vecs = [rng.standard_normal(6) for _ in range(5)]
    out = fedavg_aggregate([(v, 4) for v in vecs])
    np.testing.assert_allclose(out, weighted_mean([list(v) for v in vecs], [1.0] * 5), rtol=1e-12)


def test_fedavg_errors():
    with pytest.raises(ValueError):
        fedavg_aggregate([(np.zeros(2), 1), (np.zeros(3), 1)])
    with pytest.raises(ValueError):
        fedavg_aggregate([(np.zeros(2), 0)])
    with pytest.raises(ValueError):
        fedavg_aggregate([])


@settings(max_examples=50)
@given(st.integers(1, 10), st.integers(1, 32), st.integers(0, 2**32 - 1))
def test_fedavg_matches_oracle(n, dim, seed):
    rng = np.random.default_rng(seed)
    vecs = [rng.uniform(-10, 10, dim) for _ in range(n)]
    weights = [int(w) for w in rng.integers(1, 1000, n)]
    out = fedavg_aggregate(list(zip(vecs, weights)))
    ref = np.array(weighted_mean([list(v) for v in vecs], weights))
    assert np.all(np.abs(out - ref) <= 1e-12 * np.maximum(np.abs(ref), 1.0))


# -- OOM backoff ------------------------------------------------------------


def test_backoff_doubles(gtx_cluster):
    state = ClientManagerState.fresh(range(2), ResourceSpec(1, Fraction(182, 1024), 2000))
    state.properties[0] = props(6000)
    state = on_failure(0, state, aware(), gtx_cluster)
    assert state.specs[0].vram_mb == 4000
    assert state.specs[0].num_gpus == Fraction(364, 1024)
    assert 0 not in state.properties
    assert state.specs[1].vram_mb == 2000


def test_backoff_clamps(gtx_cluster):
    state = ClientManagerState.fresh(range(1), ResourceSpec(1, 0.5, 8000))
    assert on_failure(0, state, aware(), gtx_cluster).specs[0].vram_mb == 11264
