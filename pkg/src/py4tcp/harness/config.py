from __future__ import annotations
from typing import Any, Mapping, Optional
from py4tcp.custom_types import ExperimentConfig, ExperimentKind
from py4tcp.exceptions import ConfigError
import json
import logging
import os
import toml


logger = logging.getLogger(__name__)


def read_config_values(path: str) -> dict[str, Any]:
    """
        Reads an experiment config file (.json or .toml) into a flat mapping of ExperimentConfig fields.
    """
    extension = os.path.splitext(path)[1].lower()
    try:
        with open(path, "r", encoding="utf-8") as handle:
            if extension == ".json":
                values = json.load(handle)
            elif extension == ".toml":
                values = toml.load(handle)
            else:
                raise ConfigError(f"{path}: config files have to end in .json or .toml.")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except (json.JSONDecodeError, toml.TomlDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    if not isinstance(values, dict):
        raise ConfigError(f"{path}: the top level has to be a table of config fields.")
    logger.debug(f"CONFIG -- read({path}) -- OK")
    return values


def resolve_config(kind: ExperimentKind | str,
                   flags: Mapping[str, Any],
                   config_path: Optional[str] = None) -> ExperimentConfig:
    """
        Builds the config of one CLI run: kind defaults, then the flags that were given, then the
        values of the config file, which win over flags.

        Parameters
        ----------
        kind : ExperimentKind | str
            Experiment kind of the subcommand.
        flags : Mapping[str, Any]
            Flag values keyed by config field; None means the flag was not given.
        config_path : str, optional
            JSON or TOML config file.

        Returns
        -------
        ExperimentConfig
    """
    config = ExperimentConfig.for_kind(kind, **flags)
    if config_path is None:
        return config

    values = read_config_values(config_path)
    file_kind = values.pop("kind", None)
    try:
        mismatch = file_kind is not None and ExperimentKind(file_kind) != config.kind
    except ValueError as exc:
        raise ConfigError(f"{config_path}: {exc}") from exc
    if mismatch:
        raise ConfigError(f"{config_path}: kind {file_kind} does not match the subcommand {config.kind}.")
    return config.override(values)
