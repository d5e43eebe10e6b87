# Unit tests for the logging setup

import logging
import pytest

from src.ranopt.logs import LOG_ENV_VAR, log_level_from_env


@pytest.mark.parametrize(
    "environ, expected",
    [
        ({}, logging.WARNING),
        ({LOG_ENV_VAR: "debug"}, logging.DEBUG),
        ({LOG_ENV_VAR: " INFO "}, logging.INFO),
        ({LOG_ENV_VAR: "chatty"}, logging.WARNING),
    ],
)
def test_log_level_from_env(environ: dict, expected: int) -> None:
    assert log_level_from_env(environ) == expected
