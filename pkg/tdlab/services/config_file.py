# tdlab/services/config_file.py
"""
Config Files

Experiment configs are flat ``key=value`` files with ``#`` comments, parsed
with python-dotenv and validated by ExperimentConfig. ``gen-config`` writes
the presets that reproduce the two published experiments.
"""

import logging
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple, Union

from dotenv import dotenv_values
from pydantic import ValidationError

from tdlab.core.exceptions import ConfigError
from tdlab.schemas.experiment import ExperimentConfig

logger = logging.getLogger(__name__)

PRESETS: Dict[str, Dict[str, str]] = {
    "minimax-fig1": {
        "instance": "minimax",
        "minimax_states": "10",
        "minimax_dim": "3",
        "minimax_gamma": "0.2",
        "minimax_epsilon": "0.01",
        "algorithm": "averaged_td",
        "start": "fixed_point",
        "stepsize_mode": "fixed",
        "eta": "0.01",
        "T": "100000",
        "n_trials": "100",
        "seed": "20230101",
        "checkpoints": "log:50",
        "output": "results/minimax-fig1",
    },
    "baird-fig3": {
        "instance": "baird",
        "algorithm": "tdc",
        "stepsize_mode": "fixed",
        "eta": "0.02",
        "alpha": "0.02",
        "beta": "0.002",
        "theta0": "1,1,1,1,1,1,10,1",
        "T": "100000",
        "n_trials": "100",
        "seed": "20230101",
        "checkpoints": "log:50",
        "output": "results/baird-fig3",
    },
}


def parse_config(values: Dict[str, Optional[str]], source: str = "<config>") -> ExperimentConfig:
    """Validate raw key/value pairs; empty values count as unset."""
    cleaned = {key.strip(): value for key, value in values.items() if value not in (None, "")}
    try:
        return ExperimentConfig.model_validate(cleaned)
    except ValidationError as exc:
        raise ConfigError(f"Invalid config {source}: {exc}") from exc


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate a config file.

    Raises:
        FileNotFoundError: the file does not exist
        ConfigError: the content does not validate
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    config = parse_config(dotenv_values(path), str(path))
    logger.info(f"Loaded config {path}: {config.algorithm.value} on {config.instance}")
    return config


def config_items(config: ExperimentConfig) -> Iterator[Tuple[str, str]]:
    """(key, text) pairs in schema order, skipping unset values."""
    for key, value in config.model_dump(mode="json").items():
        if value is None:
            continue
        if isinstance(value, list):
            text = ",".join(repr(float(x)) for x in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        yield key, text


def dump_config(config: ExperimentConfig, header: Optional[str] = None) -> str:
    lines = [f"# {line}" for line in (header or "").splitlines()]
    lines.extend(f"{key}={text}" for key, text in config_items(config))
    return "\n".join(lines) + "\n"


def preset_config(name: str, **overrides: str) -> ExperimentConfig:
    """
    Build a preset config, optionally overriding keys.

    Raises:
        ConfigError: unknown preset or invalid override
    """
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    values = dict(PRESETS[name])
    values.update({key: value for key, value in overrides.items() if value is not None})
    return parse_config(values, f"preset {name}")
