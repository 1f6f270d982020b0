# ==============================================================================
# GROOVESYNTH - SERVICE MANAGER
# ==============================================================================
# Version: 1.0
# Last Updated: October 2026
# Author: GrooveSynth Team
# Purpose: Stage registry plus the sample producer pool (Start, Monitor, Heal)
# ==============================================================================

import importlib
import json
import logging
import os
import queue

from src.core.base_service import SampleProducer
from src.core.errors import ConfigError, DataError

RESTART_COUNTER = "producer_restarts_exhausted"


class ServiceManager:
    """
    Orchestrator of the data side of a run.

    Responsibilities:
    1. Loading the training stages dynamically from ``config/stages_list.json``.
    2. Running a pool of SampleProducer threads over a bounded queue, with
       the manager as the single consumer.
    3. Monitoring producer health (Watchdog) between queue reads.
    4. Recovering crashed or sick producers (Soft Restart), and giving up with
       a DataError once ``runtime.max_thread_restarts`` is exceeded.

    Parameters
    ----------
    config : dict
        The global settings mapping.
    run_state : RunState
        Persistent counters and checkpoints.
    project_root : str
        Repository root, used to locate ``config/stages_list.json``.
    """

    def __init__(self, config, run_state, project_root):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.config = config
        self.run_state = run_state
        self.project_root = project_root
        self.services = []

        # Format: {'SampleProducer-0': 1}
        self.restart_counts = {}
        self.tasks = None

    # --- stage registry ----------------------------------------------------

    def _load_stages_list(self):
        """
        Read the ordered stage list from JSON.

        Returns
        -------
        list
            Dotted function paths (e.g. "src.core.pipeline.train_bps").
        """
        stages_path = os.path.join(self.project_root, "config", "stages_list.json")
        try:
            with open(stages_path, "r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"stages_list.json could not be read: {e}") from e
        stages = data.get("stages") if isinstance(data, dict) else None
        if not isinstance(stages, list) or not stages:
            raise ConfigError(f"{stages_path} must hold a non-empty 'stages' list")
        return stages

    def load_stages(self):
        """
        Resolve every stage path by reflection.

        Returns
        -------
        list of (name, callable)
            In the canonical training order.
        """
        resolved = []
        for stage_path in self._load_stages_list():
            module_name, func_name = stage_path.rsplit(".", 1)
            try:
                module = importlib.import_module(module_name)
                resolved.append((func_name, getattr(module, func_name)))
            except (ImportError, AttributeError) as e:
                raise ConfigError(f"Stage '{stage_path}' cannot be resolved: {e}") from e
        self.logger.debug(f"Stages loaded: {[name for name, _ in resolved]}")
        return resolved

    # --- producer pool -----------------------------------------------------

    def _runtime(self, key, default):
        return self.config.get("runtime", {}).get(key, default)

    def produce_samples(self, clips, window, audio_cfg, cache=None):
        """
        Window ``clips`` into training samples on worker threads.

        Clips rejected with a DataError are logged and skipped. The returned
        samples are sorted by (clip index, window index), so the result does
        not depend on thread scheduling.
        """
        self.tasks = queue.Queue()
        for index, clip in enumerate(clips):
            self.tasks.put((index, clip))
        results = queue.Queue(maxsize=int(self._runtime("queue_size", 16)))
        n_workers = max(1, min(int(self._runtime("loader_workers", 2)), len(clips)))
        interval = float(self._runtime("watchdog_interval", 0.5))

        self.services = []
        self.restart_counts = {}
        for worker in range(n_workers):
            producer = SampleProducer(self.run_state, self.config, self.tasks, results,
                                      window, audio_cfg, cache)
            producer.name = f"SampleProducer-{worker}"
            self.restart_counts[producer.name] = 0
            producer.start()
            self.services.append(producer)
        self.logger.info(f"Windowing {len(clips)} clips with {n_workers} producers")

        samples, rejected, seen = [], [], set()
        try:
            while len(seen) < len(clips):
                try:
                    result = results.get(timeout=interval)
                except queue.Empty:
                    self.check_health()
                    continue
                if result.clip_index in seen:
                    # A requeued clip whose first result had already landed.
                    self.logger.debug(f"Duplicate result for clip {result.clip_index} dropped")
                    continue
                seen.add(result.clip_index)
                if result.error is not None:
                    rejected.append(result.clip_index)
                else:
                    samples.extend(result.samples)
                self.check_health()
        finally:
            self.stop_all()

        if rejected:
            self.logger.warning(f"{len(rejected)} clips rejected: {sorted(rejected)}")
        samples.sort(key=lambda s: s.key)
        self.logger.info(f"Produced {len(samples)} samples from {len(clips) - len(rejected)} clips")
        return samples

    def check_health(self):
        """
        Watchdog routine.

        A producer is 'Dead' when its thread ended without finishing its
        queue and 'Sick' after 3 consecutive rejected clips. Both get a soft
        restart until the restart budget runs out.
        """
        max_thread_restarts = int(self._runtime("max_thread_restarts", 3))

        for service in list(self.services):
            is_dead = not service.is_alive() and not service.completed
            is_sick = service.consecutive_errors >= 3
            if not (is_dead or is_sick):
                continue

            reason = "DEAD" if is_dead else f"SICK ({service.consecutive_errors} errors)"
            self.logger.warning(f"WATCHDOG: The service {service.name} is {reason}.")
            self.restart_counts[service.name] += 1
            current_restarts = self.restart_counts[service.name]

            if current_restarts > max_thread_restarts:
                self.logger.critical(f"{service.name} has failed {current_restarts} times. Giving up.")
                self.run_state.increment(RESTART_COUNTER)
                self.stop_all()
                raise DataError(f"{service.name} exceeded {max_thread_restarts} restarts")

            self.logger.info(f"Applying soft restart ({current_restarts}/{max_thread_restarts})...")
            self._restart_service(service)

    def _restart_service(self, old_service):
        """
        Soft Restart: replaces a broken producer with a fresh one.

        The clip the old producer was holding goes back on the task queue.
        """
        if old_service.is_alive():
            old_service.stop()
            old_service.join(timeout=2.0)

        if old_service in self.services:
            self.services.remove(old_service)

        task = old_service.current_task
        if task is not None and self.tasks is not None:
            self.tasks.put(task)
            self.logger.info(f"Requeued clip {task[0]} from {old_service.name}")

        new_service = old_service.clone()
        new_service.name = old_service.name
        new_service.start()
        self.services.append(new_service)

        # restart_counts is keyed by name and kept across restarts.
        self.logger.info(f"Service {new_service.name} restarted successfully.")

    def stop_all(self):
        """ Signal every producer to stop and wait for it. """
        for service in self.services:
            service.stop()

        for service in self.services:
            service.join(timeout=5.0)
            if service.is_alive():
                self.logger.warning(f"ZOMBIE THREAD DETECTED: {service.name}")

        self.logger.debug("All producers have been stopped.")
