import logging
import os
import time

import pytest

from src.core.errors import ConfigError
from src.utils.config import project_root
from src.utils.logger import load_config, setup_logging

# Configuration Constants
MESSAGE_COUNT = 1000
PERFORMANCE_THRESHOLD_SEC = 0.1


@pytest.fixture
def async_logger(tmp_path):
    """
    Pytest Fixture: Initializes the non-blocking logger in a private log
    directory and guarantees the listener stops after the test.
    """
    listener = setup_logging(project_root(), log_dir=str(tmp_path / "logs"))

    if not listener:
        pytest.fail("Failed to initialize logging listener.")

    logger = logging.getLogger("TestLogger")

    yield logger, listener, tmp_path / "logs" / "app.log"

    # --- TEARDOWN ---
    listener.stop()


def test_logger_non_blocking_performance(async_logger):
    """
    Performance Test: Queuing 1,000 debug lines from a training loop must not
    block on disk I/O.
    """
    logger, _, _ = async_logger
    start_time = time.time()

    for i in range(MESSAGE_COUNT):
        logger.debug(f"Stress test message sequence: {i}")

    duration = time.time() - start_time

    assert duration < PERFORMANCE_THRESHOLD_SEC, (
        f"SYSTEM SLOWDOWN DETECTED: Logger blocking main thread. "
        f"Took {duration:.4f}s (Threshold: {PERFORMANCE_THRESHOLD_SEC}s)"
    )


def test_log_dir_receives_app_log(tmp_path):
    """ Records reach <log_dir>/app.log once the listener drains the queue. """
    listener = setup_logging(project_root(), log_dir=str(tmp_path))
    logging.getLogger("TestLogger").info("epoch 1 bps total=0.5")
    listener.stop()
    log_file = tmp_path / "app.log"

    assert log_file.exists(), "app.log was not created in the requested log directory"
    assert "epoch 1 bps total=0.5" in log_file.read_text(encoding="utf-8")


def test_quiet_console_level(tmp_path):
    """ console_level overrides the console handler only; the file keeps DEBUG. """
    listener = setup_logging(project_root(), log_dir=str(tmp_path), console_level="WARNING")
    try:
        levels = {type(h).__name__: h.level for h in listener.handlers}
        assert levels["StreamHandler"] == logging.WARNING
        assert levels["RotatingFileHandler"] == logging.DEBUG
    finally:
        listener.stop()


def test_missing_log_config_raises(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path))


def test_log_config_is_dictconfig_shaped():
    config = load_config(project_root())
    assert config["version"] == 1
    assert set(config["handlers"]) == {"console", "file"}
    assert os.path.basename(config["handlers"]["file"]["filename"]) == "app.log"
