# ==============================================================================
# GROOVESYNTH - BASE SERVICE
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Template for threaded workers and the clip-windowing sample producer
# ==============================================================================

import logging
import queue
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

from src.core.errors import DataError
from src.dance.dataset import window_clip


class BaseService(ABC, threading.Thread):
    """
    Abstract base class for threaded workers.

    Handles the lifecycle (start/stop), the catch-all safety net and the
    health counters read by the ServiceManager watchdog.

    Parameters
    ----------
    run_state : RunState
        Shared persistent state (counters, checkpoints).
    config : dict
        The global settings mapping.
    """

    def __init__(self, run_state, config):
        super().__init__(daemon=True)
        self.run_state = run_state
        self.config = config

        self._stop_event = threading.Event()
        self.logger = logging.getLogger(self.__class__.__name__)

        # Watchdog inputs
        self.consecutive_errors = 0
        self.completed = False
        self.name = self.__class__.__name__

    def report_error(self):
        """ Raise the 'sickness' level seen by the watchdog. """
        self.consecutive_errors += 1

    def report_health(self):
        """ Reset the 'sickness' level after a successful unit of work. """
        self.consecutive_errors = 0

    def stop(self):
        """ Ask the loop to exit at its next check; does not kill the thread. """
        self.logger.info("Stopping service signal received...")
        self._stop_event.set()

    @property
    def stopping(self) -> bool:
        return self._stop_event.is_set()

    def run(self):
        """
        Thread entry point. Do not override: the catch-all keeps one crashed
        worker from taking the process down; the manager sees it dead and
        restarts it.
        """
        self.logger.debug("Initializing service thread...")
        try:
            self._main_loop()
            self.completed = True
        except Exception as e:
            self.logger.critical(f"UNHANDLED CRASH in {self.name}: {e}", exc_info=True)
        finally:
            self.logger.debug("Service thread finished.")

    @abstractmethod
    def _main_loop(self):
        """
        Worker logic.

        1. Loop while ``not self._stop_event.is_set()``.
        2. Call ``self.report_error()`` on recoverable failures.
        3. Call ``self.report_health()`` after each success.
        """


@dataclass
class ClipResult:
    """ Samples windowed out of one clip, or the data error that stopped it. """

    clip_index: int
    samples: list = field(default_factory=list)
    error: Optional[str] = None


class SampleProducer(BaseService):
    """
    Stateless producer: takes (clip index, clip) tasks, windows each clip
    into training samples and puts one ClipResult per clip on the bounded
    result queue.

    ``current_task`` holds the task in progress so the manager can hand it
    to a replacement worker after a crash.
    """

    def __init__(self, run_state, config, tasks: queue.Queue, results: queue.Queue,
                 window, audio_cfg, cache=None):
        super().__init__(run_state, config)
        self.tasks = tasks
        self.results = results
        self.window = window
        self.audio_cfg = audio_cfg
        self.cache = cache
        self.current_task = None
        self.put_timeout = float(config.get("runtime", {}).get("watchdog_interval", 0.5))

    def clone(self) -> "SampleProducer":
        """ Fresh worker wired to the same queues, used by soft restarts. """
        return SampleProducer(self.run_state, self.config, self.tasks, self.results,
                              self.window, self.audio_cfg, self.cache)

    def _put(self, result: ClipResult) -> bool:
        while not self.stopping:
            try:
                self.results.put(result, timeout=self.put_timeout)
                return True
            except queue.Full:
                continue
        return False

    def _main_loop(self):
        while not self.stopping:
            try:
                self.current_task = self.tasks.get_nowait()
            except queue.Empty:
                self.current_task = None
                return

            clip_index, clip = self.current_task
            try:
                samples = window_clip(clip, self.window, self.audio_cfg, self.cache, clip_index)
                result = ClipResult(clip_index, samples)
                self.report_health()
            except DataError as e:
                self.logger.error(f"Clip {clip_index} ({clip.name}) rejected: {e}")
                result = ClipResult(clip_index, error=str(e))
                self.report_error()

            if not self._put(result):
                return
            self.current_task = None
