"""JSON run configurations for the experiment commands.

Every document carries ``format_version``; unknown fields anywhere are an
error. Sections are dataclasses so defaults live in one place.
"""
from __future__ import annotations

import contextlib
import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .flow_matching import PretrainConfig
from .grpo import GrpoConfig
from .rewards import HeadConfig, RewardWeights
from .samplers import SamplerSchedule

CONFIG_FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return from_mapping(tp, value, where)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, where)
    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        (inner, *_) = typing.get_args(tp) or (typing.Any,)
        items = [_coerce(inner, v, f"{where}[{i}]") for i, v in enumerate(value)]
        return items if origin is list else tuple(items)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def from_mapping(cls, data, where: str = "config"):
    """Build dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {unknown}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@contextlib.contextmanager
def _as_config_error(where: str):
    try:
        yield
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where}: {exc}") from exc


def to_mapping(obj) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(obj)))


@dataclass
class ModelSection:
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    activation: str = "silu"
    init_seed: int = 0


@dataclass
class PretrainRun:
    format_version: int = CONFIG_FORMAT_VERSION
    seed: int = 0
    steps: int = 20_000
    batch_size: int = 256
    lr: float = 1e-3
    cond_dropout: float = 0.1
    record_wallclock: bool = False
    model: ModelSection = field(default_factory=ModelSection)
    check_coverage: bool = True
    coverage_samples: int = 2000
    coverage_threshold: float = 0.95

    def pretrain_config(self) -> PretrainConfig:
        with _as_config_error("pretrain"):
            return PretrainConfig(self.steps, self.batch_size, self.lr, self.cond_dropout, self.seed,
                                  self.record_wallclock)


@dataclass
class HeadsSection:
    semantic_targets: list[list[float]] = field(default_factory=lambda: [[3.0, 0.0], [2.0, 2.0]])
    temporal_directions: list[list[float]] = field(default_factory=lambda: [[1.0, 0.0], [1.0, 0.0]])
    temporal_offsets: list[float] = field(default_factory=lambda: [2.0, 1.5])
    aesthetic_radius: float = 3.0

    def head_config(self) -> HeadConfig:
        return HeadConfig.from_dict(dataclasses.asdict(self))


@dataclass
class GrpoSection:
    group_size: int = 16
    clip_eps: float = 0.2
    kl_beta: float = 0.04
    adv_eps: float = 1e-6
    lr: float = 3e-4
    iterations: int = 300
    conditions: list[int] = field(default_factory=lambda: [0, 1])
    T: int = 24
    w: int = 2
    noise_level: float = 0.7
    weights: list[float] = field(default_factory=lambda: [0.25, 0.25, 0.25, 0.25])
    heads: HeadsSection = field(default_factory=HeadsSection)
    mode: str = "fast"
    inner_epochs: int = 1
    checkpoint_every: int = 0
    record_wallclock: bool = False

    def grpo_config(self, seed: int) -> GrpoConfig:
        with _as_config_error("grpo"):
            return self._grpo_config(seed)

    def _grpo_config(self, seed: int) -> GrpoConfig:
        return GrpoConfig(
            group_size=self.group_size,
            clip_eps=self.clip_eps,
            kl_beta=self.kl_beta,
            adv_eps=self.adv_eps,
            lr=self.lr,
            iterations=self.iterations,
            conditions=tuple(self.conditions),
            schedule=SamplerSchedule(self.T, self.w, self.noise_level),
            weights=RewardWeights(tuple(self.weights)),
            heads=self.heads.head_config(),
            mode=self.mode,
            inner_epochs=self.inner_epochs,
            seed=seed,
            checkpoint_every=self.checkpoint_every,
            record_wallclock=self.record_wallclock,
        )

    def override(self, changes: dict, where: str) -> GrpoSection:
        merged = to_mapping(self)
        for k, v in changes.items():
            if k == "heads" and isinstance(v, dict):
                merged["heads"].update(v)
            else:
                merged[k] = v
        return from_mapping(GrpoSection, merged, where)


@dataclass
class RunSpec:
    name: str
    overrides: dict = field(default_factory=dict)


@dataclass
class EfficiencySection:
    fast: str = "fast"
    baseline: str = "baseline"
    max_nfe_fraction: float = 1.0 / 3.0
    smoothing: int = 50


@dataclass
class KlSection:
    no_kl: str = "no_kl"
    kl: str = "kl"
    eval_samples: int = 1500
    eval_seed: int = 7


@dataclass
class GrpoRun:
    pretrained_checkpoint: str
    format_version: int = CONFIG_FORMAT_VERSION
    seed: int = 0
    grpo: GrpoSection = field(default_factory=GrpoSection)
    runs: list[RunSpec] = field(default_factory=lambda: [RunSpec("fast")])
    efficiency: typing.Optional[EfficiencySection] = None
    kl_comparison: typing.Optional[KlSection] = None
    eval_samples: int = 4096
    eval_seed: int = 12345
    save_trajectories: bool = False


@dataclass
class OracleSection:
    mean: list[float] = field(default_factory=lambda: [3.0, 0.0])
    std: float = 0.5


@dataclass
class EquivalenceRun:
    format_version: int = CONFIG_FORMAT_VERSION
    seed: int = 0
    n_samples: int = 50_000
    oracle: OracleSection = field(default_factory=OracleSection)
    T: int = 24
    w: int = 2
    noise_level: float = 0.7
    window_start: typing.Optional[int] = None
    mean_tol: float = 0.05
    var_tol: float = 0.1
    alpha: float = 0.01
    permutations: int = 1000
    test_samples: int = 2000
    checkpoint: typing.Optional[str] = None
    checkpoint_condition: int = 0


@dataclass
class AblateRun:
    pretrained_checkpoint: str
    format_version: int = CONFIG_FORMAT_VERSION
    seed: int = 0
    grpo: GrpoSection = field(default_factory=lambda: GrpoSection(iterations=200))
    eval_samples: int = 4096
    eval_seed: int = 12345


@dataclass
class SeriesSpec:
    csv: str
    y: str
    x: typing.Optional[str] = None
    label: typing.Optional[str] = None
    cumulative_x: bool = False


@dataclass
class PlotSpec:
    output: str
    series: list[SeriesSpec]
    kind: str = "line"
    title: str = ""
    x_label: str = ""
    y_label: str = ""


@dataclass
class PlotRun:
    plots: list[PlotSpec]
    format_version: int = CONFIG_FORMAT_VERSION
    seed: int = 0


COMMAND_CONFIGS = {
    "pretrain": PretrainRun,
    "grpo": GrpoRun,
    "equivalence": EquivalenceRun,
    "ablate": AblateRun,
    "plot": PlotRun,
}


def load_run_config(command: str, path) -> object:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cfg = from_mapping(COMMAND_CONFIGS[command], data, where=str(path))
    if cfg.format_version != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format_version {cfg.format_version}")
    return cfg
