"""Benchmark run configuration: YAML schema parsing and validation.

Only the output directory may come from the environment
(``BENCH_OUT_DIR``); everything else lives in the config file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .adapters import AdapterSpec, TrainConfig
from .errors import ConfigError
from .sampling import DEFAULT_SHOT_GRID, SCENARIOS
from .synth import SynthConfig

OUTPUT_DIR_ENV = "BENCH_OUT_DIR"


@dataclass(frozen=True)
class TaskConfig:
    """Either a synthetic spec or a triplet of interchange paths."""

    name: str
    synth: SynthConfig | None = None
    train_path: Path | None = None
    test_path: Path | None = None
    text_path: Path | None = None

    def __post_init__(self):
        from_files = self.train_path or self.test_path or self.text_path
        if self.synth is None:
            if not (self.train_path and self.test_path and self.text_path):
                raise ConfigError(f"task {self.name!r}: need synth spec or train/test/text paths")
        elif from_files:
            raise ConfigError(f"task {self.name!r}: synth spec and file paths are exclusive")


@dataclass(frozen=True)
class ValStudyConfig:
    shots: tuple = (2, 4, 8)
    grid_lrs: tuple = (0.1, 0.01, 0.001)
    grid_steps: tuple = (100, 300, 500)

    def __post_init__(self):
        if any(k < 2 for k in self.shots):
            raise ConfigError("val-study needs K >= 2 (train/val halves)")


@dataclass(frozen=True)
class BenchConfig:
    tasks: tuple
    adapters: tuple
    scenarios: tuple = SCENARIOS
    shots: tuple = DEFAULT_SHOT_GRID
    seeds: int = 20
    global_seed: int = 0
    temperature: float | None = None
    output_dir: Path = Path("bench_out")
    workers: int = 1
    val_study: ValStudyConfig = field(default_factory=ValStudyConfig)

    def __post_init__(self):
        if not self.tasks:
            raise ConfigError("config needs at least one task")
        if not self.adapters:
            raise ConfigError("config needs at least one adapter")
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ConfigError("task names must be unique")
        labels = [a.display_name for a in self.adapters]
        if len(set(labels)) != len(labels):
            raise ConfigError("adapter display names must be unique (set name: on duplicates)")
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise ConfigError(f"unknown scenario {s!r}")
        if any(k < 1 for k in self.shots):
            raise ConfigError("shot counts must be positive")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.temperature is not None and self.temperature <= 0:
            raise ConfigError("temperature override must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


_TRAIN_KEYS = ("steps", "momentum", "lr0", "loss", "ldam_margin_scale")


def _parse_adapter(entry: dict) -> AdapterSpec:
    if not isinstance(entry, dict) or "method" not in entry:
        raise ConfigError(f"adapter entries need a method: {entry!r}")
    entry = dict(entry)
    method = entry.pop("method")
    train_kwargs = {k: entry.pop(k) for k in _TRAIN_KEYS if k in entry}
    known = {
        "name": entry.pop("name", None),
        "alpha": entry.pop("alpha", None),
        "beta": entry.pop("beta", None),
        "hidden_ratio": entry.pop("hidden_ratio", 4),
        "lam": entry.pop("lambda", None),
        "lam_scale": entry.pop("lambda_scale", None),
        "repel": entry.pop("repel", None),
    }
    if entry:
        raise ConfigError(f"unknown adapter keys {sorted(entry)} for method {method!r}")
    try:
        return AdapterSpec(method=method, train=TrainConfig(**train_kwargs), **known)
    except Exception as exc:  # surfaces UnknownMethod / value errors as config errors
        raise ConfigError(f"bad adapter entry for {method!r}: {exc}") from exc


def _parse_task(entry: dict) -> TaskConfig:
    if not isinstance(entry, dict) or "name" not in entry:
        raise ConfigError(f"task entries need a name: {entry!r}")
    entry = dict(entry)
    name = entry.pop("name")
    synth = entry.pop("synth", None)
    paths = {k: entry.pop(k, None) for k in ("train", "test", "text")}
    if entry:
        raise ConfigError(f"unknown task keys {sorted(entry)} for task {name!r}")
    try:
        return TaskConfig(
            name=name,
            synth=SynthConfig(**synth) if synth is not None else None,
            train_path=Path(paths["train"]) if paths["train"] else None,
            test_path=Path(paths["test"]) if paths["test"] else None,
            text_path=Path(paths["text"]) if paths["text"] else None,
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"bad task entry {name!r}: {exc}") from exc


def parse_config(data: dict, output_dir_override: str | None = None) -> BenchConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    data = dict(data)
    tasks = tuple(_parse_task(t) for t in data.pop("tasks", []))
    adapters = tuple(_parse_adapter(a) for a in data.pop("adapters", []))
    val_study = data.pop("val_study", None)
    out = output_dir_override or os.environ.get(OUTPUT_DIR_ENV) or data.pop("output_dir", "bench_out")
    data.pop("output_dir", None)
    kwargs = {}
    for key in ("seeds", "global_seed", "temperature", "workers"):
        if key in data:
            kwargs[key] = data.pop(key)
    for key in ("scenarios", "shots"):
        if key in data:
            kwargs[key] = tuple(data.pop(key))
    if data:
        raise ConfigError(f"unknown config keys {sorted(data)}")
    try:
        vs = ValStudyConfig(**{k: tuple(v) if isinstance(v, list) else v
                               for k, v in (val_study or {}).items()})
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"bad val_study section: {exc}") from exc
    return BenchConfig(tasks=tasks, adapters=adapters, output_dir=Path(out),
                       val_study=vs, **kwargs)


def load_config(path, output_dir_override: str | None = None) -> BenchConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return parse_config(data, output_dir_override)
