"""Experiment configuration: TOML sections with command-line overrides."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "DEFAULT_ALPHA"]

DEFAULT_ALPHA = 10.0


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (usage error)."""


@dataclass(frozen=True)
class CavitySection:
    g: float = 50.12
    kappa_in: float = 0.01
    gamma: float = 1.0
    T2: float = 1e6
    loss_model: str = "average"


@dataclass(frozen=True)
class PulseSection:
    window_factor: float = 6.0
    latency: float = 0.0


@dataclass(frozen=True)
class DecoderSection:
    kind: str = "weighted"
    alpha: float = DEFAULT_ALPHA
    erasure_time_edge: str = "free"
    loss_prior: bool = False


@dataclass(frozen=True)
class RunSection:
    structure: str = "n"
    distances: tuple[int, ...] = (3, 5, 7)
    cycles: int = 0  # 0 means one noisy cycle per unit of distance
    shots: int = 10_000
    seed: int = 0
    threads: int = 1
    p_sw: float = 0.0
    p_cir: float = 0.0
    published_table: bool = False
    synthetic_loss: float | None = None
    synthetic_infidelity: float | None = None


@dataclass(frozen=True)
class CampaignSection:
    kappa_in: tuple[float, ...] = (0.01,)
    g_min: float = 2.0
    g_max: float = 100.0
    bisections: int = 6
    d_low: int = 3
    d_high: int = 5
    decoders: tuple[str, ...] = ("uniform", "weighted")
    alphas: tuple[float, ...] = (2.0, 5.0, 10.0, 20.0)


_SECTIONS = {
    "cavity": CavitySection,
    "pulse": PulseSection,
    "decoder": DecoderSection,
    "run": RunSection,
    "campaign": CampaignSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    cavity: CavitySection = field(default_factory=CavitySection)
    pulse: PulseSection = field(default_factory=PulseSection)
    decoder: DecoderSection = field(default_factory=DecoderSection)
    run: RunSection = field(default_factory=RunSection)
    campaign: CampaignSection = field(default_factory=CampaignSection)

    def __post_init__(self):
        c, r, dec, camp = self.cavity, self.run, self.decoder, self.campaign
        if not (c.g > 0 and c.kappa_in >= 0 and c.gamma > 0 and c.T2 > 0):
            raise ConfigError("cavity rates must be positive (kappa_in >= 0)")
        if c.loss_model not in ("average", "worst_case"):
            raise ConfigError(f"unknown loss_model {c.loss_model!r}")
        if dec.kind not in ("uniform", "weighted"):
            raise ConfigError(f"decoder kind must be uniform or weighted, got {dec.kind!r}")
        if not dec.alpha > 1:
            raise ConfigError("alpha must exceed 1")
        if dec.erasure_time_edge not in ("free", "keep"):
            raise ConfigError("erasure_time_edge must be free or keep")
        if r.shots < 1:
            raise ConfigError("shots must be >= 1")
        if r.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not r.distances or any(d < 2 for d in r.distances):
            raise ConfigError("distances must be a non-empty list of integers >= 2")
        if r.cycles < 0:
            raise ConfigError("cycles must be >= 0")
        if not (0 <= r.p_sw <= 1 and 0 <= r.p_cir <= 1):
            raise ConfigError("peripheral losses must be probabilities")
        if (r.synthetic_loss is None) != (r.synthetic_infidelity is None):
            raise ConfigError("synthetic mode needs both synthetic_loss and synthetic_infidelity")
        if r.synthetic_infidelity is not None and not 0 <= r.synthetic_infidelity <= 0.5:
            raise ConfigError("synthetic_infidelity must lie in [0, 0.5]")
        if r.synthetic_loss is not None and not 0 <= r.synthetic_loss <= 1:
            raise ConfigError("synthetic_loss must lie in [0, 1]")
        if not camp.kappa_in or not 0 < camp.g_min < camp.g_max:
            raise ConfigError("campaign needs kappa_in values and 0 < g_min < g_max")
        if camp.d_high != camp.d_low + 2:
            raise ConfigError("campaign d_high must equal d_low + 2")
        if camp.bisections < 1:
            raise ConfigError("bisections must be >= 1")

    @property
    def synthetic(self) -> bool:
        return self.run.synthetic_loss is not None

    def to_dict(self) -> dict:
        out = {}
        for name in _SECTIONS:
            sec = asdict(getattr(self, name))
            out[name] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sec.items()}
        return out

    def with_overrides(self, **sections) -> ExperimentConfig:
        """``with_overrides(run={"shots": 100})`` replaces individual keys."""
        updated = {}
        for name, values in sections.items():
            values = {k: v for k, v in values.items() if v is not None}
            if values:
                updated[name] = _section(name, {**asdict(getattr(self, name)), **values})
        return replace(self, **updated)


def _coerce(cls, key: str, value):
    types = {f.name: f.type for f in fields(cls)}
    if key not in types:
        raise ConfigError(f"unknown key {key!r} in [{_name_of(cls)}]")
    t = types[key]
    try:
        if "tuple" in t:
            inner = int if "int" in t else (str if "str" in t else float)
            if not isinstance(value, (list, tuple)):
                value = [value]
            return tuple(inner(v) for v in value)
        if t == "bool":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if t == "int":
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if t == "float":
            return _float(value)
        if "None" in t:
            return None if value is None else _float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value {value!r} for [{_name_of(cls)}] {key}") from None


def _float(value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool):
        raise TypeError
    return float(value)


def _name_of(cls) -> str:
    return next(k for k, v in _SECTIONS.items() if v is cls)


def _section(name: str, values: dict):
    cls = _SECTIONS[name]
    return cls(**{k: _coerce(cls, k, v) for k, v in values.items()})


def config_from_dict(doc: dict) -> ExperimentConfig:
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    return ExperimentConfig(**{name: _section(name, doc.get(name, {})) for name in _SECTIONS})


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read a TOML config, or the ``config`` block of a run manifest (JSON)."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            doc = json.loads(raw)
            doc = doc.get("config", doc)
        else:
            doc = tomli.loads(raw.decode())
    except (ValueError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(doc)
