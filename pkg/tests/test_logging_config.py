"""
Tests for the per-component logging setup
"""

import logging

import logging_config
from logging_config import COMPONENT_LOGGERS, LOGS_DIR, set_console_level, setup_logger


def console_handlers(name):
    return [h for h in logging.getLogger(name).handlers if not isinstance(h, logging.FileHandler)]


def test_component_logger_writes_to_the_log_dir():
    logger = setup_logger('selector', 'selector.log')
    assert logger.propagate is False
    files = [h for h in logger.handlers if isinstance(h, logging.FileHandler)]
    assert len(files) == 1
    assert files[0].baseFilename == str(LOGS_DIR / 'selector.log')
    assert setup_logger('selector', 'selector.log').handlers == logger.handlers


def test_console_level_reaches_every_component():
    for name in COMPONENT_LOGGERS:
        setup_logger(name, f"{name}.log")
    try:
        set_console_level(logging.WARNING)
        for name in COMPONENT_LOGGERS:
            assert [h.level for h in console_handlers(name)] == [logging.WARNING]
            files = [h for h in logging.getLogger(name).handlers if isinstance(h, logging.FileHandler)]
            assert all(h.level == logging.DEBUG for h in files)
    finally:
        set_console_level(logging.INFO)


def test_loggers_are_created_by_their_modules():
    assert not any(hasattr(logging_config, f"{name}_logger") for name in COMPONENT_LOGGERS)
