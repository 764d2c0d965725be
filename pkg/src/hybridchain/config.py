"""Run configuration: nested YAML sections mapped onto dataclasses.

Unknown keys are rejected and every section re-checks its invariants on load,
so a config that loads is a config that can run.
"""

from __future__ import annotations

import copy
import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .simnet import AdversaryConfig, NetConfig
from .validation import ConfigError, check_byzantine_bound, check_int, check_positive
from .workload import WorkloadConfig

log = logging.getLogger(__name__)

SEED_ENV = "HYBRIDCHAIN_SEED"


@dataclass
class ProtocolConfig:
    M: int = 60
    f: int = 4
    mu1: float = 1.0
    mu2: float = 0.5
    zeta1: float = 0.98
    zeta2: float = 0.9
    cadence: int = 20
    eq5_literal_xor: bool = False
    forced_tie: str = "reject"
    retrain_warm_start: bool = True
    retrain_max_iter: int = 200
    retrain_reg: float = 0.1
    retrain_anchor: bool = True
    validator_reliability_range: tuple[float, float] = (0.3, 0.8)
    user_reliability_range: tuple[float, float] = (0.3, 0.8)

    def __post_init__(self):
        check_byzantine_bound(self.M, self.f)
        if not 0 <= self.mu2 < self.mu1:
            raise ConfigError(f"need 0 <= protocol.mu2 < protocol.mu1, got {self.mu1}, {self.mu2}")
        for name in ("zeta1", "zeta2"):
            z = getattr(self, name)
            if not 0 < z < 1:
                raise ConfigError(f"protocol.{name} must lie strictly between 0 and 1, got {z}")
        check_int(self.cadence, "protocol.cadence", minimum=1)
        check_int(self.retrain_max_iter, "protocol.retrain_max_iter", minimum=1)
        check_positive(self.retrain_reg, "protocol.retrain_reg", strict=False)
        if self.forced_tie != "reject":
            raise ConfigError("protocol.forced_tie only supports 'reject'")
        for name in ("validator_reliability_range", "user_reliability_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi <= 1:
                raise ConfigError(f"protocol.{name} must satisfy 0 <= low <= high <= 1")
            setattr(self, name, (float(lo), float(hi)))

    @property
    def community_count(self):
        return self.M // (2 * self.f + 2)


@dataclass
class BootstrapConfig:
    training_size: int = 10_000
    heldout_size: int = 5_000
    reg: float = 1e-4
    step_size: float = 0.5
    max_iter: int = 2000
    weights_file: str | None = None

    def __post_init__(self):
        check_int(self.training_size, "bootstrap.training_size", minimum=2)
        check_int(self.heldout_size, "bootstrap.heldout_size", minimum=0)
        check_positive(self.reg, "bootstrap.reg", strict=False)
        check_positive(self.step_size, "bootstrap.step_size")
        check_int(self.max_iter, "bootstrap.max_iter", minimum=1)


@dataclass
class RunSection:
    horizon_minutes: float | None = None
    genesis_size: int | None = None
    max_epochs: int | None = None

    def __post_init__(self):
        if self.horizon_minutes is not None:
            check_positive(self.horizon_minutes, "run.horizon_minutes")
        if self.genesis_size is not None:
            check_int(self.genesis_size, "run.genesis_size", minimum=1)
        if self.max_epochs is not None:
            check_int(self.max_epochs, "run.max_epochs", minimum=1)


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "out"
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    net: NetConfig = field(default_factory=NetConfig)
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    run: RunSection = field(default_factory=RunSection)

    def __post_init__(self):
        check_int(self.seed, "seed", minimum=0)
        dishonest = (
            len(set(self.adversary.validators))
            if self.adversary.validators is not None
            else round(self.adversary.tau * self.protocol.M)
        )
        if dishonest > self.protocol.f:
            log.warning(
                "%d dishonest validators exceed f=%d; the resilience guarantees do not apply",
                dishonest, self.protocol.f,
            )

    def to_dict(self):
        return _to_plain(dataclasses.asdict(self))

    def replace(self, **sections):
        """Copy with some sections (or top-level fields) overridden by dicts."""
        data = self.to_dict()
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return config_from_dict(data)


_SECTIONS = {
    "workload": WorkloadConfig,
    "net": NetConfig,
    "adversary": AdversaryConfig,
    "protocol": ProtocolConfig,
    "bootstrap": BootstrapConfig,
    "run": RunSection,
}

PRESETS = {
    "desk": {"protocol": {"M": 60, "f": 4}, "workload": {"gamma": 600.0}},
    "paper": {"protocol": {"M": 1000, "f": 45}, "workload": {"gamma": 6000.0, "duration": 5.0}},
}


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _build_section(name, cls, data):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    kwargs = dict(data)
    for key in ("validator_reliability_range", "user_reliability_range"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad value in {name}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _deep_merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def config_from_dict(data, preset=None):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        data = _deep_merge(PRESETS[preset], data)
    known = set(_SECTIONS) | {"seed", "output_dir"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    sections = {name: _build_section(name, cls, data.get(name)) for name, cls in _SECTIONS.items()}
    try:
        return RunConfig(
            seed=data.get("seed", 0),
            output_dir=data.get("output_dir", "out"),
            **sections,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, preset=None, seed=None):
    """Read a YAML run config; ``seed`` (or $HYBRIDCHAIN_SEED) overrides the file."""
    data = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"${SEED_ENV} must be an integer") from None
    if seed is not None:
        data = {**data, "seed": seed}
    return config_from_dict(data, preset=preset)


def dump_config(config: RunConfig, path=None):
    text = yaml.safe_dump(config.to_dict(), sort_keys=True)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
