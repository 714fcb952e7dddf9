"""INI-style experiment configuration files.

Grammar, one construct per line::

    # comment (also allowed after a value)
    [section]
    key = value

Sections are ``experiment``, ``cluster``, ``strategy``, ``workload`` and one
``cohort.N`` per cohort. Unknown sections or keys, duplicates and missing
required keys are errors. Numbers use a decimal point regardless of locale;
keys holding exact quantities (CPU cores, GPU shares, cohort fractions)
also accept ``p/q``. ``gpu_vram_mb`` lists one VRAM size per device,
comma-separated, and may be empty for a CPU-only machine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

from fedsched.core import ClusterSpec, ResourceSpec
from fedsched.experiment import Cohort, ConfigError, ExperimentConfig
from fedsched.strategy import StrategyConfig
from fedsched.workload import WorkloadModelConfig

_INT = re.compile(r"[+-]?\d+\Z")
_FLOAT = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\Z")
_RATIO = re.compile(r"[+-]?\d+\s*/\s*\d+\Z")
_SECTION = re.compile(r"\[\s*([A-Za-z_][\w.]*)\s*\]\Z")
_COHORT = re.compile(r"cohort\.(\d+)\Z")

_REQUIRED = object()


def _int(text: str) -> int:
    if not _INT.match(text):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(text)


def _float(text: str) -> float:
    if not _FLOAT.match(text):
        raise ValueError(f"expected a decimal number, got {text!r}")
    return float(text)


def _exact(text: str) -> Fraction:
    if _RATIO.match(text):
        num, den = (s.strip() for s in text.split("/"))
        if int(den) == 0:
            raise ValueError(f"zero denominator in {text!r}")
        return Fraction(int(num), int(den))
    if not _FLOAT.match(text):
        raise ValueError(f"expected a number or p/q ratio, got {text!r}")
    return Fraction(text)


def _ratio_float(text: str) -> float:
    return float(_exact(text))


def _int_list(text: str) -> Tuple[int, ...]:
    if not text.strip():
        return ()
    return tuple(_int(part.strip()) for part in text.split(","))


def _flag(text: str) -> bool:
    if text not in ("0", "1"):
        raise ValueError(f"expected 0 or 1, got {text!r}")
    return text == "1"


def _word(text: str) -> str:
    if not re.match(r"[A-Za-z_]\w*\Z", text):
        raise ValueError(f"expected a name, got {text!r}")
    return text


Schema = Dict[str, Tuple[Callable[[str], object], object]]

SCHEMAS: Dict[str, Schema] = {
    "experiment": {
        "seed": (_int, 0),
        "rounds": (_int, _REQUIRED),
        "pool_size": (_int, _REQUIRED),
        "clients_per_round": (_int, _REQUIRED),
        "monitor_interval_s": (_float, 0.7),
        "model_dim": (_int, 8),
        "noise_sigma": (_float, 0.0),
        "resample_each_round": (_flag, False),
    },
    "cluster": {
        "cpu_cores": (_exact, _REQUIRED),
        "gpu_vram_mb": (_int_list, _REQUIRED),
    },
    "strategy": {
        "kind": (_word, _REQUIRED),
        "default_num_cpus": (_exact, Fraction(1)),
        "default_num_gpus": (_exact, Fraction(0)),
        "default_vram_mb": (_int, 0),
        "safety_margin": (_float, 1.10),
        "min_vram_mb": (_int, 64),
        "oom_backoff_factor": (_float, 2.0),
    },
    "workload": {
        "model_mb": (_float, _REQUIRED),
        "per_sample_mb": (_float, _REQUIRED),
        "base_mb": (_float, _REQUIRED),
        "step_time_s_per_ksample": (_float, _REQUIRED),
        "warmup_fraction": (_float, 0.1),
        "num_local_epochs": (_int, 1),
    },
    "cohort": {
        "fraction": (_ratio_float, _REQUIRED),
        "batch_size": (_int, _REQUIRED),
        "num_samples": (_int, _REQUIRED),
        "speed_factor": (_float, 1.0),
    },
}


@dataclass
class _Section:
    name: str
    line: int
    values: Dict[str, Tuple[str, int]]


def _split(text: str, errors: List[str]) -> Dict[str, _Section]:
    sections: Dict[str, _Section] = {}
    current: Optional[_Section] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            name = m.group(1)
            if name in sections:
                errors.append(f"line {lineno}: [{name}]: duplicate section (first at line {sections[name].line})")
                current = _Section(name, lineno, {})
                continue
            kind = "cohort" if _COHORT.match(name) else name
            if kind not in SCHEMAS:
                errors.append(f"line {lineno}: [{name}]: unknown section")
            current = sections[name] = _Section(name, lineno, {})
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if current is None:
            errors.append(f"line {lineno}: key {key!r} appears before any section")
            continue
        if key in current.values:
            errors.append(f"line {lineno}: [{current.name}] {key}: duplicate key (first at line {current.values[key][1]})")
            continue
        current.values[key] = (value, lineno)
    return sections


def _typed(section: _Section, schema: Schema, errors: List[str]) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for key, (value, lineno) in section.values.items():
        if key not in schema:
            errors.append(f"line {lineno}: [{section.name}] {key}: unknown key")
            continue
        try:
            out[key] = schema[key][0](value)
        except ValueError as exc:
            errors.append(f"line {lineno}: [{section.name}] {key}: {exc}")
    for key, (_, default) in schema.items():
        if key in section.values:
            continue
        if default is _REQUIRED:
            errors.append(f"line {section.line}: [{section.name}] {key}: missing required key")
        else:
            out[key] = default
    return out


def _where(section: Optional[_Section], key: str) -> str:
    if section is None:
        return f"[?] {key}"
    lineno = section.values.get(key, ("", section.line))[1]
    return f"line {lineno}: [{section.name}] {key}"


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a configuration document.

    Raises :class:`ConfigError` listing every problem found, each with its
    line number, section and key.
    """
    errors: List[str] = []
    sections = _split(text, errors)
    typed: Dict[str, Dict[str, object]] = {}
    for name in ("experiment", "cluster", "strategy", "workload"):
        if name not in sections:
            errors.append(f"[{name}]: missing section")
            continue
        typed[name] = _typed(sections[name], SCHEMAS[name], errors)
    cohort_names = sorted((n for n in sections if _COHORT.match(n)), key=lambda n: int(_COHORT.match(n).group(1)))
    if not cohort_names:
        errors.append("[cohort.N]: at least one cohort section is required")
    cohorts = [_typed(sections[n], SCHEMAS["cohort"], errors) for n in cohort_names]
    if errors:
        raise ConfigError("\n".join(errors))

    exp, clu, strat, wl = typed["experiment"], typed["cluster"], typed["strategy"], typed["workload"]
    if exp["clients_per_round"] > exp["pool_size"]:
        sec = sections["experiment"]
        errors.append(
            f"{_where(sec, 'clients_per_round')}: clients_per_round = {exp['clients_per_round']} exceeds "
            f"pool_size = {exp['pool_size']} ({_where(sec, 'pool_size')})"
        )
    total = sum(c["fraction"] for c in cohorts)
    if abs(total - 1.0) > 1e-9:
        errors.append(f"[cohort.N] fraction: cohort fractions sum to {total!r}, expected 1")

    def build(section: str, key: str, fn):
        try:
            return fn()
        except ValueError as exc:
            errors.append(f"{_where(sections.get(section), key)}: {exc}")
            return None

    cluster = build("cluster", "cpu_cores", lambda: ClusterSpec.single_node(clu["cpu_cores"], clu["gpu_vram_mb"]))
    spec = build(
        "strategy",
        "default_vram_mb",
        lambda: ResourceSpec(strat["default_num_cpus"], strat["default_num_gpus"], strat["default_vram_mb"]),
    )
    strategy = build(
        "strategy",
        "kind",
        lambda: StrategyConfig(
            kind=strat["kind"],
            default_spec=spec or ResourceSpec(),
            safety_margin=strat["safety_margin"],
            min_vram_mb=strat["min_vram_mb"],
            oom_backoff_factor=strat["oom_backoff_factor"],
        ),
    )
    workload = build("workload", "model_mb", lambda: WorkloadModelConfig(**wl))
    if errors:
        raise ConfigError("\n".join(errors))

    cfg = ExperimentConfig(
        cluster=cluster,
        strategy=strategy,
        workload=workload,
        cohorts=tuple(Cohort(**c) for c in cohorts),
        **exp,
    )
    problems = cfg.errors()
    if problems:
        raise ConfigError("\n".join(f"{p}" for p in problems))
    return cfg


def _fmt_exact(x: Fraction) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def serialize_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config`."""
    s, w = cfg.strategy, cfg.workload
    lines = [
        "[experiment]",
        f"seed = {cfg.seed}",
        f"rounds = {cfg.rounds}",
        f"pool_size = {cfg.pool_size}",
        f"clients_per_round = {cfg.clients_per_round}",
        f"monitor_interval_s = {cfg.monitor_interval_s!r}",
        f"model_dim = {cfg.model_dim}",
        f"noise_sigma = {cfg.noise_sigma!r}",
        f"resample_each_round = {int(cfg.resample_each_round)}",
        "",
        "[cluster]",
        f"cpu_cores = {_fmt_exact(cfg.cluster.cpu_cores)}",
        f"gpu_vram_mb = {', '.join(str(g.vram_mb) for g in cfg.cluster.gpus)}",
        "",
        "[strategy]",
        f"kind = {s.kind}",
        f"default_num_cpus = {_fmt_exact(s.default_spec.num_cpus)}",
        f"default_num_gpus = {_fmt_exact(s.default_spec.num_gpus)}",
        f"default_vram_mb = {s.default_spec.vram_mb}",
        f"safety_margin = {float(s.safety_margin)!r}",
        f"min_vram_mb = {s.min_vram_mb}",
        f"oom_backoff_factor = {float(s.oom_backoff_factor)!r}",
        "",
        "[workload]",
        f"model_mb = {float(w.model_mb)!r}",
        f"per_sample_mb = {float(w.per_sample_mb)!r}",
        f"base_mb = {float(w.base_mb)!r}",
        f"step_time_s_per_ksample = {float(w.step_time_s_per_ksample)!r}",
        f"warmup_fraction = {float(w.warmup_fraction)!r}",
        f"num_local_epochs = {w.num_local_epochs}",
    ]
    for i, c in enumerate(cfg.cohorts):
        lines += [
            "",
            f"[cohort.{i}]",
            f"fraction = {float(c.fraction)!r}",
            f"batch_size = {c.batch_size}",
            f"num_samples = {c.num_samples}",
            f"speed_factor = {float(c.speed_factor)!r}",
        ]
    return "\n".join(lines) + "\n"
