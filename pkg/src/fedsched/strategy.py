"""Server-side round logic: sampling, per-client resources, FedAvg.

``static_fedavg`` hands every client the configured default spec.
``resource_aware_fedavg`` saves the properties each participant reports and,
before the next sampling, rewrites that client's spec from its measured peak
VRAM.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from fedsched.core import (
    CANONICAL_PROPERTY_KEYS,
    ClientId,
    ClientProperties,
    ClusterSpec,
    ModelParams,
    ResourceSpec,
    as_fraction,
    check_params,
    validate_resource_spec,
)
from fedsched.scheduler import vram_to_gpu_ratio

log = logging.getLogger(__name__)

STATIC_FEDAVG = "static_fedavg"
RESOURCE_AWARE_FEDAVG = "resource_aware_fedavg"
STRATEGY_KINDS = (STATIC_FEDAVG, RESOURCE_AWARE_FEDAVG)


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = RESOURCE_AWARE_FEDAVG
    default_spec: ResourceSpec = field(default_factory=ResourceSpec)
    safety_margin: float = 1.10
    min_vram_mb: int = 64
    oom_backoff_factor: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; expected one of {STRATEGY_KINDS}")
        if not self.safety_margin >= 1:
            raise ValueError("safety_margin must be >= 1")
        if self.min_vram_mb < 1:
            raise ValueError("min_vram_mb must be positive")
        if not self.oom_backoff_factor > 1:
            raise ValueError("oom_backoff_factor must be > 1")


@dataclass(frozen=True)
class FitInstruction:
    client: ClientId
    spec: ResourceSpec
    config: Dict[str, float] = field(default_factory=dict)


@dataclass
class ClientManagerState:
    pool: Set[ClientId]
    specs: Dict[ClientId, ResourceSpec]
    properties: Dict[ClientId, ClientProperties] = field(default_factory=dict)
    last_round: Dict[ClientId, int] = field(default_factory=dict)

    @classmethod
    def fresh(cls, pool: Iterable[ClientId], default_spec: ResourceSpec) -> "ClientManagerState":
        pool = set(pool)
        return cls(pool=pool, specs={c: default_spec for c in sorted(pool)})


def sample_clients(pool: Iterable[ClientId], n: int, seed) -> List[ClientId]:
    """Uniform sample of ``n`` clients without replacement, returned in id order."""
    members = sorted(pool)
    if n < 1:
        raise ValueError(f"must sample at least one client, got n={n}")
    if n > len(members):
        raise ValueError(f"cannot sample {n} clients from a pool of {len(members)}")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(members), size=n, replace=False)
    return sorted(members[i] for i in picked)


def _clamp_vram(vram_mb: int, cluster: ClusterSpec) -> Tuple[int, bool]:
    cap = cluster.max_device_vram_mb
    if vram_mb > cap:
        return cap, True
    return vram_mb, False


def next_resource_estimate(
    p: ClientProperties, cluster: ClusterSpec, cfg: StrategyConfig
) -> Tuple[ResourceSpec, Optional[str]]:
    """Spec for a client's next fit from its last measurements.

    Returns the spec and a warning string when the estimate had to be
    clamped to the largest device.
    """
    missing = [k for k in CANONICAL_PROPERTY_KEYS if k not in p]
    if missing:
        raise KeyError(f"client properties missing {missing}")
    if not p["uses_gpu"]:
        return cfg.default_spec.replace(num_gpus=0, vram_mb=0), None
    # Exact product: 2600 * 1.1 in floats is 2860.0000000000005.
    vram = max(cfg.min_vram_mb, math.ceil(as_fraction(p["peak_vram_mb"]) * as_fraction(cfg.safety_margin)))
    vram, clamped = _clamp_vram(vram, cluster)
    warning = None
    if clamped:
        warning = f"vram estimate for peak {p['peak_vram_mb']:g} MB clamped to device capacity {vram} MB"
        log.warning(warning)
    return cfg.default_spec.replace(num_gpus=vram_to_gpu_ratio(vram, cluster), vram_mb=vram), warning


def configure_fit(
    round_index: int,
    state: ClientManagerState,
    cfg: StrategyConfig,
    n: int,
    seed,
    cluster: ClusterSpec,
) -> Tuple[List[FitInstruction], List[str]]:
    """Pick this round's clients and the resources each one runs with."""
    warnings: List[str] = []
    if cfg.kind == RESOURCE_AWARE_FEDAVG:
        for cid in sorted(state.properties):
            spec, warning = next_resource_estimate(state.properties[cid], cluster, cfg)
            state.specs[cid] = spec
            if warning:
                warnings.append(f"client {cid}: {warning}")
    picked = sample_clients(state.pool, n, seed)
    out = []
    for cid in picked:
        spec = cfg.default_spec if cfg.kind == STATIC_FEDAVG else state.specs[cid]
        why = validate_resource_spec(spec, cluster)
        if why is not None:
            raise ValueError(f"client {cid} carries an invalid spec: {why}")
        state.last_round[cid] = round_index
        out.append(FitInstruction(cid, spec, {"round": round_index}))
    return out, warnings


def fedavg_aggregate(entries: Sequence[Tuple[ModelParams, int]]) -> ModelParams:
    """Example-weighted mean of parameter vectors."""
    if not entries:
        raise ValueError("no results to aggregate")
    dim = np.asarray(entries[0][0]).shape[0]
    stacked = np.stack([check_params(params, dim) for params, _ in entries])
    weights = np.array([n for _, n in entries], dtype=np.float64)
    if np.any(weights <= 0):
        raise ValueError("every entry needs a positive example count")
    return weights @ stacked / weights.sum()


def aggregate_fit(
    results: Sequence[Tuple[ClientId, ModelParams, int, ClientProperties]],
    state: ClientManagerState,
) -> Tuple[ModelParams, ClientManagerState]:
    """FedAvg the results and save each participant's reported properties."""
    if not results:
        raise ValueError("no results to aggregate")
    params = fedavg_aggregate([(theta, n) for _, theta, n, _ in results])
    for cid, _, _, props in results:
        if cid not in state.pool:
            raise KeyError(f"result from unknown client {cid}")
        state.properties[cid] = dict(props)
    return params, state


def on_failure(client: ClientId, state: ClientManagerState, cfg: StrategyConfig, cluster: ClusterSpec) -> ClientManagerState:
    """Back off an OOM-killed client's VRAM budget and forget its stale measurements."""
    spec = state.specs[client]
    vram = int(math.ceil(as_fraction(spec.vram_mb) * as_fraction(cfg.oom_backoff_factor)))
    vram, _ = _clamp_vram(vram, cluster)
    num_gpus = max(spec.num_gpus, vram_to_gpu_ratio(vram, cluster)) if spec.num_gpus > 0 else Fraction(0)
    state.specs[client] = spec.replace(num_gpus=num_gpus, vram_mb=vram)
    state.properties.pop(client, None)
    return state
