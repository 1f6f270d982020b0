# ==============================================================================
# GROOVESYNTH - LOGGER UTILS
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Non-blocking logging system using QueueHandler
# ==============================================================================

import logging
import logging.config
import logging.handlers
import os
import queue
from typing import Any, Optional

import yaml

from src.core.errors import ConfigError


def load_config(project_root: str) -> dict[str, Any]:
    """
    Load logging configuration from the YAML file.

    Returns
    -------
    dict
        Dictionary configuration compatible with logging.config.dictConfig
    """
    config_path = os.path.join(project_root, 'config', 'log_config.yaml')

    if not os.path.exists(config_path):
        raise ConfigError(f'Log config file not found at: {config_path}')

    with open(config_path, 'r') as f:
        return yaml.safe_load(f)


def setup_logging(project_root: str, log_dir: Optional[str] = None,
                  console_level: Optional[str] = None) -> logging.handlers.QueueListener:
    """
    Initialize the Non-Blocking Logging System.

    Training loops and loader threads write to a RAM queue (QueueHandler);
    a background QueueListener drains it to the console and the rotating
    log file, so disk latency never stalls an optimization step.

    Parameters
    ----------
    project_root : str
        Repository root; ``config/log_config.yaml`` is read from here.
    log_dir : str, optional
        Directory for ``app.log``. Defaults to ``<project_root>/logs``.
    console_level : str, optional
        Overrides the console handler level (e.g. "WARNING" for quiet runs).

    Returns
    -------
    QueueListener
        The background listener thread (must be stopped on exit).
    """
    logs_path = log_dir or os.path.join(project_root, 'logs')
    os.makedirs(logs_path, exist_ok=True)

    config = load_config(project_root)
    config['handlers']['file']['filename'] = os.path.join(logs_path, 'app.log')
    if console_level:
        config['handlers']['console']['level'] = console_level
    logging.config.dictConfig(config)

    log_queue = queue.Queue()
    root = logging.getLogger()

    original_handlers = list(root.handlers)
    root.handlers.clear()
    root.addHandler(logging.handlers.QueueHandler(log_queue))

    listener = logging.handlers.QueueListener(
        log_queue,
        *original_handlers,
        respect_handler_level=True
    )
    listener.start()

    return listener
