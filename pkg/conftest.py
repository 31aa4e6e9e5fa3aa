"""Shared pytest setup: quiet structured logging to stderr."""
import pytest

from src.logging_setup import configure_logging


@pytest.fixture(autouse=True, scope="session")
def _quiet_logging():
    configure_logging("WARNING", force=True)
