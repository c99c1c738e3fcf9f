"""
Helpers for loading and saving run configurations.

A run configuration is an INI document with the sections [model], [train],
[solver], [data] and [paths]. Every key maps onto a field of the matching
record in ``mswt.models``; missing keys keep their defaults, unknown
sections or keys are rejected. Lists are comma separated.
"""

import configparser
import dataclasses
import logging
import math

from mswt.errors import ConfigError
from mswt.models import DataConfig, ModelConfig, PathsConfig, RunConfig, SolverConfig, TrainConfig

logger = logging.getLogger(__name__)

SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "solver": SolverConfig,
    "data": DataConfig,
    "paths": PathsConfig,
}


def _parse_value(section, key, raw, kind):
    text = raw.strip()
    try:
        if kind is bool:
            return text.lower() in ("true", "1", "yes", "on")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = '{raw}' is not a valid {kind.__name__}") from exc
    return text


def _format_value(value):
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return str(value)


def run_config_from_parser(parser):
    """Build a RunConfig from a parsed INI document."""
    unknown = [name for name in parser.sections() if name not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    sections = {}
    for name, record in SECTIONS.items():
        known = {f.name: f.type for f in dataclasses.fields(record)}
        values = {}
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in known:
                    raise ConfigError(f"unknown key '{key}' in section [{name}]")
                values[key] = _parse_value(name, key, raw, known[key])
        sections[name] = record(**values)
    return RunConfig(**sections).validate()


def load_run_config(path=None):
    """Read and validate an INI file; ``None`` gives the validated defaults."""
    if path is None:
        return RunConfig().validate()
    parser = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as handle:
        parser.read_file(handle)
    config = run_config_from_parser(parser)
    logger.info(f"Loaded run configuration from {path}")
    return config


def parse_run_config(text):
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    return run_config_from_parser(parser)


def dump_run_config(config):
    """Render a RunConfig as INI text that ``parse_run_config`` reads back unchanged."""
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for key, value in dataclasses.asdict(getattr(config, name)).items():
            lines.append(f"{key} = {_format_value(value)}")
        lines.append("")
    return "\n".join(lines)


def run_config_to_dict(config):
    return {name: dataclasses.asdict(getattr(config, name)) for name in SECTIONS}


def run_config_from_dict(data):
    sections = {}
    for name, record in SECTIONS.items():
        values = dict(data.get(name, {}))
        for f in dataclasses.fields(record):
            if f.type is tuple and f.name in values:
                values[f.name] = tuple(values[f.name])
        sections[name] = record(**values)
    return RunConfig(**sections).validate()


def with_seed(config, seed):
    """Override the training and solver seeds; ``None`` leaves the config unchanged."""
    if seed is None:
        return config
    return dataclasses.replace(
        config,
        train=dataclasses.replace(config.train, seed=seed),
        solver=dataclasses.replace(config.solver, seed=seed),
    )


def describe_run_config(config):
    """Log the configuration inside a banner."""
    logger.info("=" * 60)
    logger.info("RUN CONFIGURATION")
    logger.info("=" * 60)
    for name in SECTIONS:
        for key, value in dataclasses.asdict(getattr(config, name)).items():
            logger.info(f"{name}.{key}: {_format_value(value)}")
    logger.info("=" * 60)
