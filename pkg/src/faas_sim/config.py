"""Scenario files: a versioned TOML schema mapped onto dataclasses.

Every key is validated up front and errors carry the dotted field path.
Precedence for the effective config is CLI override > file > dataclass default.
"""

from __future__ import annotations

import dataclasses
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .autoscaler import SELECTIONS, ScalingConfig, VerticalConfig
from .errors import ConfigError
from .loadbalancer import SELECTORS
from .scheduler import POLICIES, UTILIZATION_MODES
from .workload import EXEC_DISTS, PROFILES

SCHEMA_VERSION = 1


@dataclass
class ClusterConfig:
    vm_count: int = 20
    vcpus: float = 4.0
    mem_mb: float = 3072.0
    vms_per_host: int = 1
    startup_delay_s: float = 0.5
    keep_alive_s: float = 600.0
    utilization_mode: str = "cpu"


@dataclass
class ArchitectureConfig:
    scale_per_request: bool = True
    container_idling: bool = False
    request_concurrency: bool = False
    retry_interval_s: float = 1.0
    max_retries: int = 5


@dataclass
class FunctionDefaults:
    cpu_demand_vcpu: float = 0.25
    mem_demand_mb: float = 128.0
    container_cpu: float = 0.25
    container_mem_mb: float = 256.0
    max_concurrency: int = 1
    startup_delay_s: float | None = None


@dataclass
class FunctionConfig:
    function_id: str
    cpu_demand_vcpu: float | None = None
    mem_demand_mb: float | None = None
    container_cpu: float | None = None
    container_mem_mb: float | None = None
    max_concurrency: int | None = None
    startup_delay_s: float | None = None
    min_replicas: int | None = None
    max_replicas: int | None = None


@dataclass
class SyntheticFunctionConfig:
    function_id: str
    base_rate: float | None = None
    peak_multiplier: float | None = None
    profile: str | None = None
    period_s: float | None = None
    phase_s: float | None = None
    step_at_s: float | None = None
    exec_dist: str | None = None
    exec_mu: float | None = None
    exec_sigma: float | None = None
    exec_time_s: float | None = None


@dataclass
class SyntheticConfig:
    duration_s: float = 3600.0
    # functions f1..fN are generated when the explicit list is empty
    function_count: int = 1
    base_rate: float = 1.0
    peak_multiplier: float = 1.0
    profile: str = "constant"
    period_s: float | None = None
    # phase offset added per generated function index
    phase_step_s: float = 0.0
    step_at_s: float | None = None
    exec_dist: str = "lognormal"
    exec_mu: float = math.log(0.5)
    exec_sigma: float = 0.6
    exec_time_s: float = 0.5
    functions: list[SyntheticFunctionConfig] = field(default_factory=list)


@dataclass
class WorkloadConfig:
    trace: str | None = None
    synthetic: SyntheticConfig | None = None


@dataclass
class MonitoringConfig:
    enabled: bool = True
    vm_seconds_mode: str = "fixed"


@dataclass
class ScenarioConfig:
    schema_version: int = SCHEMA_VERSION
    name: str = "scenario"
    seed: int = 0
    end_time_s: float | None = None
    output_dir: str | None = None
    scheduler: str = "first_fit"
    load_balancer: str = "first_fit"
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    scaling: ScalingConfig = field(default_factory=ScalingConfig)
    function_defaults: FunctionDefaults = field(default_factory=FunctionDefaults)
    functions: list[FunctionConfig] = field(default_factory=list)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    monitoring: MonitoringConfig = field(default_factory=MonitoringConfig)
    # directory relative trace paths resolve against; not serialized
    base_dir: str | None = field(default=None, metadata={"internal": True})


# --- generic dict <-> dataclass ---------------------------------------------------

def _convert(value, tp, path):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _convert(value, args[0], path)
    if origin is list:
        (item_tp,) = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        return [_convert(v, item_tp, f"{path}[{i}]") for i, v in enumerate(value)]
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a table, got {type(value).__name__}")
        return from_dict(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise ConfigError(path, f"unsupported field type {tp}")


def from_dict(cls, data: dict, path: str = ""):
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls) if not f.metadata.get("internal")}
    unknown = sorted(set(data) - set(known))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, "unknown key")
    kwargs = {}
    for name, f in known.items():
        sub = f"{path}.{name}" if path else name
        if name in data:
            kwargs[name] = _convert(data[name], hints[name], sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(sub, "required key is missing")
    return cls(**kwargs)


def to_dict(obj) -> dict:
    """Serializable form; ``None`` fields are dropped since TOML has no null."""
    out = {}
    for f in dataclasses.fields(obj):
        if f.metadata.get("internal"):
            continue
        value = getattr(obj, f.name)
        if value is None:
            continue
        if dataclasses.is_dataclass(value):
            value = to_dict(value)
        elif isinstance(value, list):
            value = [to_dict(v) if dataclasses.is_dataclass(v) else v for v in value]
        out[f.name] = value
    return out


# --- validation -------------------------------------------------------------------

def _check(cond, path, message):
    if not cond:
        raise ConfigError(path, message)


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    _check(cfg.schema_version == SCHEMA_VERSION, "schema_version",
           f"unsupported schema version {cfg.schema_version} (expected {SCHEMA_VERSION})")
    _check(cfg.scheduler in POLICIES, "scheduler", f"unknown policy {cfg.scheduler!r}; known {sorted(POLICIES)}")
    _check(cfg.load_balancer in SELECTORS, "load_balancer",
           f"unknown policy {cfg.load_balancer!r}; known {sorted(SELECTORS)}")
    _check(cfg.end_time_s is None or cfg.end_time_s > 0, "end_time_s", "must be > 0")

    c = cfg.cluster
    _check(c.vm_count >= 1, "cluster.vm_count", "must be >= 1")
    _check(c.vcpus > 0, "cluster.vcpus", "must be > 0")
    _check(c.mem_mb > 0, "cluster.mem_mb", "must be > 0")
    _check(c.vms_per_host >= 1, "cluster.vms_per_host", "must be >= 1")
    _check(c.startup_delay_s >= 0, "cluster.startup_delay_s", "must be >= 0")
    _check(c.keep_alive_s >= 0, "cluster.keep_alive_s", "must be >= 0")
    _check(c.utilization_mode in UTILIZATION_MODES, "cluster.utilization_mode", f"one of {UTILIZATION_MODES}")

    a = cfg.architecture
    _check(not (a.scale_per_request and a.request_concurrency), "architecture",
           "scale_per_request and request_concurrency are mutually exclusive")
    _check(a.retry_interval_s > 0, "architecture.retry_interval_s", "must be > 0")
    _check(a.max_retries >= 0, "architecture.max_retries", "must be >= 0")

    try:
        cfg.scaling.validate(c.vcpus, c.mem_mb)
    except ValueError as exc:
        raise ConfigError("scaling", str(exc)) from None
    _check(cfg.scaling.selection in SELECTIONS, "scaling.selection", f"one of {SELECTIONS}")

    seen = set()
    for i, fc in enumerate(cfg.functions):
        _check(fc.function_id not in seen, f"functions[{i}].function_id", "duplicate function id")
        seen.add(fc.function_id)

    w = cfg.workload
    _check((w.trace is None) != (w.synthetic is None), "workload", "exactly one of trace / synthetic is required")
    if w.synthetic is not None:
        s = w.synthetic
        _check(s.duration_s > 0, "workload.synthetic.duration_s", "must be > 0")
        _check(s.function_count >= 1, "workload.synthetic.function_count", "must be >= 1")
        for i, fn in enumerate(synthetic_functions(s)):
            p = f"workload.synthetic.functions[{i}]" if s.functions else "workload.synthetic"
            _check(fn["base_rate"] >= 0, f"{p}.base_rate", "must be >= 0")
            _check(fn["peak_multiplier"] >= 0, f"{p}.peak_multiplier", "must be >= 0")
            _check(fn["profile"] in PROFILES, f"{p}.profile", f"one of {PROFILES}")
            _check(fn["exec_dist"] in EXEC_DISTS, f"{p}.exec_dist", f"one of {EXEC_DISTS}")
            _check(fn["exec_sigma"] >= 0, f"{p}.exec_sigma", "must be >= 0")
            _check(fn["exec_time_s"] > 0, f"{p}.exec_time_s", "must be > 0")

    _check(cfg.monitoring.vm_seconds_mode in ("fixed", "elastic"), "monitoring.vm_seconds_mode",
           "one of ('fixed', 'elastic')")

    for fid in function_ids(cfg):
        ft = function_type_fields(cfg, fid)
        where = f"functions[{fid}]"
        _check(ft["max_concurrency"] >= 1, f"{where}.max_concurrency", "must be >= 1")
        _check(ft["cpu_demand_vcpu"] > 0 and ft["mem_demand_mb"] > 0, where, "demands must be > 0")
        _check(ft["cpu_demand_vcpu"] <= ft["container_cpu"] + 1e-9, f"{where}.cpu_demand_vcpu",
               "exceeds container_cpu")
        _check(ft["mem_demand_mb"] <= ft["container_mem_mb"] + 1e-9, f"{where}.mem_demand_mb",
               "exceeds container_mem_mb")
        _check(ft["container_cpu"] <= c.vcpus and ft["container_mem_mb"] <= c.mem_mb, where,
               "container does not fit on a VM")
        if cfg.scaling.enabled and cfg.scaling.vertical.enabled:
            v = cfg.scaling.vertical
            _check(ft["container_cpu"] <= v.cpu_max + 1e-9 and ft["container_mem_mb"] <= v.mem_max + 1e-9,
                   where, "initial container size exceeds scaling.vertical maxima")
    return cfg


def synthetic_functions(s: SyntheticConfig) -> list[dict]:
    shared = ("base_rate", "peak_multiplier", "profile", "period_s", "step_at_s",
              "exec_dist", "exec_mu", "exec_sigma", "exec_time_s")
    if s.functions:
        out = []
        for i, fc in enumerate(s.functions):
            d = {k: getattr(s, k) if getattr(fc, k) is None else getattr(fc, k) for k in shared}
            d["function_id"] = fc.function_id
            d["phase_s"] = i * s.phase_step_s if fc.phase_s is None else fc.phase_s
            out.append(d)
        return out
    return [dict({k: getattr(s, k) for k in shared}, function_id=f"f{i + 1}", phase_s=i * s.phase_step_s)
            for i in range(s.function_count)]


def function_ids(cfg: ScenarioConfig) -> list[str]:
    ids = [fc.function_id for fc in cfg.functions]
    if cfg.workload.synthetic is not None:
        for fn in synthetic_functions(cfg.workload.synthetic):
            if fn["function_id"] not in ids:
                ids.append(fn["function_id"])
    return ids


def function_type_fields(cfg: ScenarioConfig, function_id: str) -> dict:
    d = dataclasses.asdict(cfg.function_defaults)
    d.update(min_replicas=None, max_replicas=None)
    for fc in cfg.functions:
        if fc.function_id == function_id:
            for k, v in dataclasses.asdict(fc).items():
                if v is not None and k != "function_id":
                    d[k] = v
    if not cfg.architecture.request_concurrency:
        d["max_concurrency"] = 1
    d["function_id"] = function_id
    return d


# --- file I/O -----------------------------------------------------------------------

def loads(text: str, base_dir=None) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"invalid TOML: {exc}") from None
    cfg = from_dict(ScenarioConfig, data)
    cfg.base_dir = None if base_dir is None else str(base_dir)
    return validate(cfg)


def load(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from None
    return loads(text, base_dir=path.parent)


def dumps(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def dump(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps(cfg), encoding="utf-8")


def apply_overrides(cfg: ScenarioConfig, seed=None, end_time_s=None, output_dir=None,
                    sets: dict[str, object] | None = None) -> ScenarioConfig:
    """Return a validated copy with CLI-level overrides applied.

    ``sets`` maps dotted paths (``scaling.interval_s``) to already-parsed values.
    """
    data = to_dict(cfg)
    for dotted, value in (sets or {}).items():
        node = data
        parts = dotted.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(dotted, "cannot override inside a non-table value")
        node[parts[-1]] = value
    if seed is not None:
        data["seed"] = seed
    if end_time_s is not None:
        data["end_time_s"] = end_time_s
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    out = from_dict(ScenarioConfig, data)
    out.base_dir = cfg.base_dir
    return validate(out)


def resolve_path(cfg: ScenarioConfig, p: str) -> Path:
    path = Path(p)
    if not path.is_absolute() and cfg.base_dir is not None:
        path = Path(cfg.base_dir) / path
    return path


SCENARIO_DIR = Path(__file__).parent / "scenarios"


def find_scenario(name_or_path) -> Path:
    """Accept a file path or the name of a shipped scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    for candidate in (SCENARIO_DIR / f"{name_or_path}.toml", SCENARIO_DIR / str(name_or_path)):
        if candidate.exists():
            return candidate
    stem = str(name_or_path).removeprefix("scenario_")
    candidate = SCENARIO_DIR / f"{stem}.toml"
    if candidate.exists():
        return candidate
    raise ConfigError("", f"no scenario file or shipped scenario named {name_or_path!r}")


__all__ = [
    "ArchitectureConfig", "ClusterConfig", "FunctionConfig", "FunctionDefaults", "MonitoringConfig",
    "ScalingConfig", "ScenarioConfig", "SyntheticConfig", "SyntheticFunctionConfig", "VerticalConfig",
    "WorkloadConfig", "apply_overrides", "dump", "dumps", "find_scenario", "load", "loads", "validate",
]
