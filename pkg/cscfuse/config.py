"""Configuration settings for training, fusion and evaluation runs."""

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

from cscfuse.errors import ConfigError

TASKS = ("ivf", "mef", "mmf")
ACTIVATIONS = ("sst", "prelu", "relu", "identity")
STRATEGIES = ("average", "l1", "saliency")
OPTIMIZERS = ("adam", "sgd")


def load_config(config_path: Path) -> dict:
    """
    Load a configuration file.

    JSON files are read with the json module; `.yaml`/`.yml` files with pyyaml.

    Args:
        config_path: Path to the config file

    Returns:
        Dictionary with configuration values
    """
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"Configuration file not found: {config_path}")

    text = config_path.read_text()
    try:
        if config_path.suffix.lower() in (".yaml", ".yml"):
            config = yaml.safe_load(text)
        else:
            config = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Could not parse configuration file {config_path}: {e}")

    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ConfigError(f"Configuration file {config_path} must contain a mapping at the top level")
    return config


def get_thread_count() -> int:
    """
    Get the worker thread bound.

    Priority:
    1. Environment variable CSCFUSE_THREADS
    2. Default of 1 (bit-determinism)
    """
    env_value = os.getenv("CSCFUSE_THREADS")
    if env_value:
        try:
            threads = int(env_value)
        except ValueError:
            raise ConfigError(f"CSCFUSE_THREADS must be an integer, got {env_value!r}")
        if threads < 1:
            raise ConfigError(f"CSCFUSE_THREADS must be >= 1, got {threads}")
        return threads
    return 1


@dataclass
class ModelConfig:
    """Network shape. Fields a task does not use are ignored by its builder."""

    units: int = 7
    code_channels: int = 64
    kernel_size: int = 3
    in_channels: int = 1
    base_activation: str = "prelu"
    detail_activation: str = "sst"
    activation: str = "sst"
    base_radius: int = 15
    guide_channels: int = 3
    scale: int = 4
    fgf_radius: int = 8
    fgf_eps: float = 1e-2
    fgf_subsample: int = 4
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def validate(self) -> None:
        for name in ("units", "code_channels", "in_channels", "guide_channels", "scale",
                     "fgf_radius", "fgf_subsample", "base_radius"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1, got {getattr(self, name)}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"model.kernel_size must be a positive odd integer, got {self.kernel_size}")
        for name in ("base_activation", "detail_activation", "activation"):
            if getattr(self, name) not in ACTIVATIONS:
                raise ConfigError(f"model.{name} must be one of {ACTIVATIONS}, got {getattr(self, name)!r}")
        if self.fgf_eps <= 0 or self.bn_eps <= 0:
            raise ConfigError("model.fgf_eps and model.bn_eps must be positive")
        if not 0.0 <= self.bn_momentum <= 1.0:
            raise ConfigError(f"model.bn_momentum must lie in [0, 1], got {self.bn_momentum}")


@dataclass
class TrainConfig:
    """Optimization settings."""

    epochs: int = 60
    optimizer: str = "adam"
    lr: float = 1e-2
    lr_milestones: List[int] = field(default_factory=lambda: [30])
    lr_gamma: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 8
    crop_size: int = 64
    seed: int = 0
    lambda_ivf: float = 5.0
    lambda_mef_max: float = 10.0
    flip: bool = True
    validation_fraction: float = 0.0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be >= 1, got {self.epochs}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"train.optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        # lr = 0 is allowed: it freezes the parameters, which the determinism checks rely on
        if self.lr < 0 or self.lr_gamma <= 0:
            raise ConfigError("train.lr must be >= 0 and train.lr_gamma > 0")
        if self.batch_size < 1 or self.crop_size < 4:
            raise ConfigError("train.batch_size must be >= 1 and train.crop_size >= 4")
        if self.lambda_ivf < 0 or self.lambda_mef_max < 0:
            raise ConfigError("train.lambda_ivf and train.lambda_mef_max must be >= 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError(f"train.validation_fraction must lie in [0, 1), got {self.validation_fraction}")
        if any(m < 1 for m in self.lr_milestones):
            raise ConfigError("train.lr_milestones must be positive epoch numbers")


@dataclass
class FusionConfig:
    """Test-time fusion settings."""

    base_strategy: str = "saliency"
    detail_strategy: str = "l1"
    saliency_radius: int = 8
    saliency_eps: float = 1e-2
    stretch_lo: float = 0.5
    stretch_hi: float = 99.5

    def validate(self) -> None:
        for name in ("base_strategy", "detail_strategy"):
            if getattr(self, name) not in STRATEGIES:
                raise ConfigError(f"fusion.{name} must be one of {STRATEGIES}, got {getattr(self, name)!r}")
        if self.saliency_radius < 1 or self.saliency_eps <= 0:
            raise ConfigError("fusion.saliency_radius must be >= 1 and fusion.saliency_eps > 0")
        if not 0.0 <= self.stretch_lo < self.stretch_hi <= 100.0:
            raise ConfigError("fusion.stretch_lo/stretch_hi must satisfy 0 <= lo < hi <= 100")


@dataclass
class RunConfig:
    """Everything a command needs; echoed into checkpoints and reports."""

    task: str
    model: ModelConfig
    train: TrainConfig
    fusion: FusionConfig = field(default_factory=FusionConfig)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


TASK_DEFAULTS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "ivf": {
        "model": {"units": 7, "in_channels": 1, "base_activation": "prelu", "detail_activation": "sst"},
        "train": {"epochs": 60, "lr": 1e-2, "lr_milestones": [30], "lambda_ivf": 5.0},
    },
    "mef": {
        "model": {"units": 3, "in_channels": 1, "activation": "sst"},
        "train": {"epochs": 50, "lr": 5e-4, "lr_milestones": [], "lambda_mef_max": 10.0},
    },
    "mmf": {
        "model": {"units": 4, "in_channels": 31, "activation": "sst", "scale": 4},
        "train": {"epochs": 100, "lr": 5e-4, "lr_milestones": []},
    },
}


def _section(name: str, cls, values: Dict[str, Any]):
    """Build one config dataclass, rejecting keys it does not declare."""
    if not isinstance(values, dict):
        raise ConfigError(f"Config section '{name}' must be a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(
            f"Unknown key(s) in '{name}': {', '.join(unknown)}. Allowed: {', '.join(sorted(allowed))}"
        )
    try:
        section = cls(**values)
    except TypeError as e:
        raise ConfigError(f"Invalid values in '{name}': {e}")
    section.validate()
    return section


def _merge(base: Dict[str, Any], update: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in (update or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def build_run_config(task: str, raw: Optional[Dict[str, Any]] = None,
                     overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Merge task defaults, file values and flag overrides into a RunConfig.

    Args:
        task: One of 'ivf', 'mef', 'mmf'
        raw: Parsed config file contents (may contain 'task', 'model', 'train', 'fusion')
        overrides: Same shape as raw; applied last (CLI flags)

    Returns:
        Validated RunConfig
    """
    if task not in TASKS:
        raise ConfigError(f"Unknown task {task!r}; expected one of {TASKS}")

    merged = _merge(TASK_DEFAULTS[task], raw)
    merged = _merge(merged, overrides)

    file_task = merged.pop("task", task)
    if file_task != task:
        raise ConfigError(f"Config is for task {file_task!r} but command runs task {task!r}")

    unknown = sorted(set(merged) - {"model", "train", "fusion"})
    if unknown:
        raise ConfigError(f"Unknown top-level key(s): {', '.join(unknown)}. Allowed: fusion, model, task, train")

    return RunConfig(
        task=task,
        model=_section("model", ModelConfig, merged.get("model", {})),
        train=_section("train", TrainConfig, merged.get("train", {})),
        fusion=_section("fusion", FusionConfig, merged.get("fusion", {})),
    )


def load_run_config(task: str, config_path: Optional[Path] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Load a config file (if given) and build the RunConfig for a task."""
    raw = load_config(config_path) if config_path is not None else None
    return build_run_config(task, raw, overrides)


def run_config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """Rebuild a RunConfig from its `to_dict()` echo (checkpoints)."""
    if "task" not in data:
        raise ConfigError("Configuration echo has no 'task'")
    return build_run_config(data["task"], data)
