# ==============================================================================
# GROOVESYNTH - CONFIG UTILS
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Load settings.yaml, apply --set overrides, resolve project paths
# ==============================================================================

import copy
import logging
import os
from typing import Any, Iterable, Optional

import yaml

from src.core.errors import ConfigError

logger = logging.getLogger(__name__)

CACHE_ENV_VAR = "GROOVESYNTH_CACHE"


def project_root() -> str:
    """ Absolute path of the repository root (works from any directory). """
    current_dir = os.path.dirname(os.path.abspath(__file__))
    return os.path.abspath(os.path.join(current_dir, '../../'))


def load_settings(path: Optional[str] = None) -> dict[str, Any]:
    """
    Load the system configuration from the YAML file.

    Parameters
    ----------
    path : str, optional
        Explicit settings file. Defaults to ``config/settings.yaml``.

    Returns
    -------
    dict
        The parsed settings mapping.
    """
    config_path = path or os.path.join(project_root(), 'config', 'settings.yaml')

    if not os.path.exists(config_path):
        raise ConfigError(f'Settings file not found at: {config_path}')

    try:
        with open(config_path, 'r') as f:
            settings = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f'Settings file {config_path} is not valid YAML: {e}') from e

    if not isinstance(settings, dict):
        raise ConfigError(f'Settings file {config_path} must contain a mapping')

    env_cache = os.environ.get(CACHE_ENV_VAR)
    if env_cache:
        settings.setdefault('data', {})['cache_dir'] = env_cache

    return settings


def apply_overrides(settings: dict[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    """
    Apply ``section.key=value`` overrides on a copy of the settings.

    Values go through ``yaml.safe_load`` so numbers, booleans and lists keep
    their types. The top-level section must already exist.
    """
    result = copy.deepcopy(settings)

    for item in overrides:
        if '=' not in item:
            raise ConfigError(f"Override '{item}' must look like section.key=value")

        dotted, raw_value = item.split('=', 1)
        keys = [k for k in dotted.strip().split('.') if k]
        if not keys:
            raise ConfigError(f"Override '{item}' has an empty key")
        if keys[0] not in result:
            raise ConfigError(f"Override '{item}' targets unknown section '{keys[0]}'")

        try:
            value = yaml.safe_load(raw_value)
        except yaml.YAMLError as e:
            raise ConfigError(f"Override '{item}' has an unparsable value: {e}") from e

        node = result
        for key in keys[:-1]:
            child = node.get(key)
            if child is None:
                child = node[key] = {}
            if not isinstance(child, dict):
                raise ConfigError(f"Override '{item}': '{key}' is not a section")
            node = child
        node[keys[-1]] = value
        logger.debug(f"Config override applied: {dotted} = {value!r}")

    return result


def resolve_path(path: str) -> str:
    """ Paths in settings are relative to the project root. """
    if os.path.isabs(path):
        return path
    return os.path.join(project_root(), path)
