# ==============================================================================
# GROOVESYNTH - RUN STATE
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Thread-safe persistent record of checkpoints, counters and loss history
# ==============================================================================

import copy
import json
import logging
import os
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

logger = logging.getLogger(__name__)


class RunState:
    """
    Persistent memory of one run directory.

    Sections:
    - ``checkpoints``: stage name -> latest checkpoint path
    - ``counters``: integer event counters (e.g. skipped RTC samples)
    - ``history``: stage name -> list of per-epoch loss records
    - ``metadata``: timestamps and version

    Every write is saved atomically (tmp file + replace) under a lock, so
    producer threads and the training loop can share one instance.
    """

    def __init__(self, json_path: str):
        self._lock = threading.Lock()
        self._json_path = Path(json_path)
        self._data: dict[str, Any] = {}
        self._load_from_disk()

    @staticmethod
    def _get_default_state() -> dict[str, Any]:
        """ Returns the factory-default state structure. """
        return {
            "checkpoints": {},
            "counters": {},
            "history": {},
            "metadata": {
                "version": "1.0",
                "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "lastUpdated": None,
            },
        }

    def _load_from_disk(self) -> None:
        """ Loads JSON state. Falls back to defaults on failure. """
        try:
            if not self._json_path.exists():
                raise FileNotFoundError(str(self._json_path))
            with open(self._json_path, "r") as f:
                data = json.load(f)
            if not isinstance(data, dict):
                raise json.JSONDecodeError("state root is not an object", "", 0)
            defaults = self._get_default_state()
            defaults.update(data)
            self._data = defaults
            logger.info(f"Run state loaded from {self._json_path}")
        except (FileNotFoundError, json.JSONDecodeError) as e:
            logger.warning(f"Run state load failed ({e}). Using factory defaults.")
            self._data = self._get_default_state()
            self._save_to_disk()

    def _save_to_disk(self) -> None:
        """ Atomic save of the state to JSON. """
        try:
            self._json_path.parent.mkdir(parents=True, exist_ok=True)
            self._data["metadata"]["lastUpdated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
            tmp_path = str(self._json_path) + ".tmp"
            with open(tmp_path, "w") as f:
                json.dump(self._data, f, indent=4)
            os.replace(tmp_path, self._json_path)
        except OSError as e:
            logger.error(f"CRITICAL: Failed to save run state to disk: {e}")

    @property
    def path(self) -> str:
        return str(self._json_path)

    # --- checkpoints -------------------------------------------------------

    def get_checkpoint(self, stage: str) -> Optional[str]:
        with self._lock:
            return self._data["checkpoints"].get(stage)

    def set_checkpoint(self, stage: str, path: str) -> None:
        with self._lock:
            self._data["checkpoints"][stage] = str(path)
            self._save_to_disk()

    # --- counters ----------------------------------------------------------

    def get_counter(self, key: str) -> int:
        with self._lock:
            return int(self._data["counters"].get(key, 0))

    def increment(self, key: str, amount: int = 1) -> int:
        with self._lock:
            value = int(self._data["counters"].get(key, 0)) + amount
            self._data["counters"][key] = value
            self._save_to_disk()
            return value

    # --- history -----------------------------------------------------------

    def append_history(self, stage: str, record: dict[str, Any]) -> None:
        with self._lock:
            self._data["history"].setdefault(stage, []).append(dict(record))
            self._save_to_disk()

    def truncate_history(self, stage: str, epochs: int) -> None:
        """ Keep the first ``epochs`` records of a stage (used when resuming). """
        with self._lock:
            self._data["history"][stage] = self._data["history"].get(stage, [])[:epochs]
            self._save_to_disk()

    def get_history(self, stage: str) -> list[dict[str, Any]]:
        with self._lock:
            return copy.deepcopy(self._data["history"].get(stage, []))

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            return copy.deepcopy(self._data)
