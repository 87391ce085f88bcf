"""Experiment configuration.

A config file is JSON or YAML with optional blocks ``topology``,
``catalog``, ``workload``, ``cache``, ``scheme``, plus ``seed`` and
``sweep``.  Keys may also be given flat in dotted form
(``"cache.size_fraction": 0.01``).  Unknown keys are errors.
"""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

SCHEMES = ("sdpc", "ndn-e2e", "ndn-groupkey", "mcac", "eu-re", "ndn-plain")
CACHE_POLICIES = ("lfru", "lru", "lfu")
# leave/join requests per unit time for the group-key cases
CHURN_CASES = {1: 5.0, 2: 15.0, 3: 25.0}
WEAKEN_KNOBS = ("plain-names", "plain-payloads", "no-auth", "no-nonce-check", "leak-keymsg")


class ConfigError(ValueError):
    """Schema violation; ``path`` is the dotted field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class TopologyConfig:
    n_routers: int = 50
    ba_m: int = 2
    n_publishers: int = 5
    n_gateways: int = 10
    link_capacity_bps: float = 1e9
    propagation_delay: float = 1e-3


@dataclass
class CatalogConfig:
    items_per_publisher: int = 1000
    segments_per_item: int = 10
    segment_bytes: int = 1_000_000
    zipf_alpha: float = 0.7

    @property
    def total_bytes(self) -> int:
        return self.items_per_publisher * self.segments_per_item * self.segment_bytes


@dataclass
class WorkloadConfig:
    lambda_per_gateway: float = 20.0
    consumers_per_gateway: int = 20
    duration: float = 10.0
    horizon: float = 600.0
    churn_rate: float = 0.0
    interest_bytes: int = 1000
    control_bytes: int = 1000
    timeout_floor: float = 2.0
    timeout_rtt_factor: float = 4.0
    max_retx: int = 3


@dataclass
class CacheConfig:
    size_fraction: float = 0.01
    size_bytes: int | None = None
    policy: str = "lfru"
    privileged_fraction: float = 0.5


@dataclass
class SchemeConfig:
    name: str = "sdpc"
    churn_case: int = 0
    h_fraction: float = 0.2
    n_fraction: float = 0.0
    tcb_delay: float = 0.5e-3
    sym_op_cost: float = 1e-6
    asym_ratio: float = 3000.0
    ticket_deadline: float = 5.0
    weaken: list[str] = field(default_factory=list)

    @property
    def asym_op_cost(self) -> float:
        return self.sym_op_cost * self.asym_ratio


@dataclass
class SimConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    catalog: CatalogConfig = field(default_factory=CatalogConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    cache: CacheConfig = field(default_factory=CacheConfig)
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    seed: int = 1
    sweep: dict[str, list] = field(default_factory=dict)

    # -- derived --
    def catalog_bytes(self) -> int:
        return self.topology.n_publishers * self.catalog.total_bytes

    def cache_bytes(self) -> int:
        if self.cache.size_bytes is not None:
            return int(self.cache.size_bytes)
        return int(round(self.cache.size_fraction * self.catalog_bytes()))

    def churn_rate(self) -> float:
        if self.scheme.churn_case:
            return CHURN_CASES[self.scheme.churn_case]
        return self.workload.churn_rate

    def flat(self) -> dict[str, object]:
        """Dotted-key view of every field (sweep excluded)."""
        out: dict[str, object] = {}
        for block in ("topology", "catalog", "workload", "cache", "scheme"):
            for f in dataclasses.fields(getattr(self, block)):
                v = getattr(getattr(self, block), f.name)
                if isinstance(v, list):
                    v = "+".join(map(str, v))
                out[f"{block}.{f.name}"] = v
        out["seed"] = self.seed
        return out

    def replace(self, **dotted) -> "SimConfig":
        new = copy.deepcopy(self)
        for key, value in dotted.items():
            set_field(new, key.replace("__", "."), value)
        new.validate()
        return new

    def validate(self) -> "SimConfig":
        t, c, w, k, s = self.topology, self.catalog, self.workload, self.cache, self.scheme
        _check(t.n_routers > t.ba_m >= 1, "topology.ba_m", "need n_routers > ba_m >= 1")
        _check(t.n_publishers >= 1, "topology.n_publishers", "must be >= 1")
        _check(t.n_gateways >= 1, "topology.n_gateways", "must be >= 1")
        _check(
            t.n_publishers + t.n_gateways <= t.n_routers,
            "topology.n_gateways",
            "publisher and gateway routers must fit in the topology",
        )
        _check(t.link_capacity_bps > 0, "topology.link_capacity_bps", "must be > 0")
        _check(t.propagation_delay >= 0, "topology.propagation_delay", "must be >= 0")
        _check(c.items_per_publisher >= 1, "catalog.items_per_publisher", "must be >= 1")
        _check(c.segments_per_item >= 1, "catalog.segments_per_item", "must be >= 1")
        _check(c.segment_bytes >= 1, "catalog.segment_bytes", "must be >= 1")
        _check(c.zipf_alpha >= 0, "catalog.zipf_alpha", "must be >= 0")
        _check(w.lambda_per_gateway > 0, "workload.lambda_per_gateway", "must be > 0")
        _check(w.consumers_per_gateway >= 1, "workload.consumers_per_gateway", "must be >= 1")
        _check(w.duration > 0, "workload.duration", "must be > 0")
        _check(w.horizon >= w.duration, "workload.horizon", "must be >= duration")
        _check(w.churn_rate >= 0, "workload.churn_rate", "must be >= 0")
        _check(w.max_retx >= 0, "workload.max_retx", "must be >= 0")
        _check(k.policy in CACHE_POLICIES, "cache.policy", f"one of {CACHE_POLICIES}")
        _check(k.size_fraction >= 0, "cache.size_fraction", "must be >= 0")
        _check(0 <= k.privileged_fraction <= 1, "cache.privileged_fraction", "must be in [0, 1]")
        _check(k.size_bytes is None or k.size_bytes >= 0, "cache.size_bytes", "must be >= 0")
        _check(s.name in SCHEMES, "scheme.name", f"one of {SCHEMES}")
        _check(s.churn_case in (0, 1, 2, 3), "scheme.churn_case", "one of 0, 1, 2, 3")
        _check(0 <= s.h_fraction <= 1, "scheme.h_fraction", "must be in [0, 1]")
        _check(0 <= s.n_fraction <= 1 - s.h_fraction, "scheme.n_fraction", "h + n must be <= 1")
        _check(s.ticket_deadline > 0, "scheme.ticket_deadline", "must be > 0")
        for knob in s.weaken:
            _check(knob in WEAKEN_KNOBS, "scheme.weaken", f"unknown knob {knob!r}")
        for key in self.sweep:
            _check(_resolve(self, key) is not None, f"sweep.{key}", "unknown field")
        return self


def _check(ok: bool, path: str, msg: str) -> None:
    if not ok:
        raise ConfigError(path, msg)


_BLOCKS = {
    "topology": TopologyConfig,
    "catalog": CatalogConfig,
    "workload": WorkloadConfig,
    "cache": CacheConfig,
    "scheme": SchemeConfig,
}


def _resolve(cfg: SimConfig, dotted: str):
    if dotted == "seed":
        return (cfg, "seed")
    parts = dotted.split(".")
    if len(parts) != 2 or parts[0] not in _BLOCKS:
        return None
    block = getattr(cfg, parts[0])
    names = {f.name for f in dataclasses.fields(block)}
    if parts[1] not in names:
        return None
    return (block, parts[1])


def _coerce(current, value, path: str):
    if isinstance(value, str) and not isinstance(current, str):
        text = value.strip()
        if isinstance(current, bool):
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        if isinstance(current, list):
            return [v for v in text.split("+") if v]
        try:
            value = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(path, f"cannot parse {value!r}") from exc
    if isinstance(current, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, "expected a boolean")
        return value
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(current, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(current, list):
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list):
            raise ConfigError(path, "expected a list")
        return list(value)
    if current is None:
        if value is None or isinstance(value, (int, float)):
            return value
        raise ConfigError(path, "expected a number or null")
    if isinstance(current, str) and not isinstance(value, str):
        raise ConfigError(path, "expected a string")
    return value


def set_field(cfg: SimConfig, dotted: str, value) -> None:
    target = _resolve(cfg, dotted)
    if target is None:
        raise ConfigError(dotted, "unknown field")
    obj, attr = target
    setattr(obj, attr, _coerce(getattr(obj, attr), value, dotted))


def from_dict(data: dict) -> SimConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    cfg = SimConfig()
    for key, value in data.items():
        if key == "sweep":
            if not isinstance(value, dict):
                raise ConfigError("sweep", "must map field paths to value lists")
            for k, vals in value.items():
                if not isinstance(vals, list) or not vals:
                    raise ConfigError(f"sweep.{k}", "must be a non-empty list")
            cfg.sweep = {k: list(v) for k, v in value.items()}
        elif key in _BLOCKS:
            if not isinstance(value, dict):
                raise ConfigError(key, "block must be a mapping")
            for sub, v in value.items():
                set_field(cfg, f"{key}.{sub}", v)
        else:
            set_field(cfg, key, value)
    return cfg.validate()


def load(path: str | Path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from exc
    if path.suffix in (".yaml", ".yml"):
        import yaml

        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(str(path), f"invalid YAML: {exc}") from exc
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    return from_dict(data)


def parse_sweep_arg(arg: str) -> tuple[str, list]:
    """``key=v1,v2,...`` -> (key, [v1, v2, ...]) with values left as strings."""
    if "=" not in arg:
        raise ConfigError(arg, "sweep must look like key=v1,v2")
    key, vals = arg.split("=", 1)
    values = [v for v in vals.split(",") if v != ""]
    if not values:
        raise ConfigError(key, "empty sweep list")
    return key.strip(), values
