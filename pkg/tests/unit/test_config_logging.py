"""Tests for environment settings and structured logging."""

from __future__ import annotations

import json
from collections.abc import Iterator
from pathlib import Path

import pytest
import structlog
from pydantic import ValidationError

from fkcorr.core.config import Settings, get_settings
from fkcorr.utils.logging import get_logger, log_performance, setup_logging


@pytest.fixture
def restore_logging() -> Iterator[None]:
    yield
    structlog.reset_defaults()
    setup_logging("WARNING")


class TestSettings:
    """Tests for ``FKCORR_`` environment variables."""

    def test_defaults(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.delenv("FKCORR_LOG_LEVEL", raising=False)
        monkeypatch.delenv("FKCORR_CACHE_DIR", raising=False)
        config = Settings()
        assert config.log_level == "INFO"
        assert config.threads >= 1
        assert config.cache_dir is None

    def test_environment(self, monkeypatch: pytest.MonkeyPatch, temp_dir: Path) -> None:
        monkeypatch.setenv("FKCORR_THREADS", "3")
        monkeypatch.setenv("FKCORR_LOG_LEVEL", "debug")
        monkeypatch.setenv("FKCORR_CACHE_DIR", str(temp_dir))
        config = Settings()
        assert config.threads == 3
        assert config.log_level == "DEBUG"
        assert config.cache_dir == temp_dir

    def test_invalid_threads(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("FKCORR_THREADS", "0")
        with pytest.raises(ValidationError):
            Settings()

    def test_overrides_skip_none(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Command-line flags left unset keep the environment value."""
        monkeypatch.setenv("FKCORR_THREADS", "5")
        assert get_settings(threads=None).threads == 5
        assert get_settings(threads=2).threads == 2


@pytest.mark.usefixtures("restore_logging")
class TestLogging:
    """Tests for the structlog setup."""

    def test_json_events(self, capsys: pytest.CaptureFixture[str]) -> None:
        setup_logging("INFO", json_logs=True, include_timestamp=False)
        get_logger("fkcorr.test").info("chain_finished", chain=2)
        event = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert event == {"event": "chain_finished", "chain": 2, "level": "info", "logger": "fkcorr.test"}

    def test_level_filter(self, capsys: pytest.CaptureFixture[str]) -> None:
        setup_logging("WARNING", json_logs=True)
        get_logger("fkcorr.test").info("hidden")
        assert capsys.readouterr().err == ""

    def test_performance_event(self, capsys: pytest.CaptureFixture[str]) -> None:
        setup_logging("INFO", json_logs=True)
        log_performance(get_logger("fkcorr.test"), "enumerate_fk", 12.3456, edges=7)
        event = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert event["operation"] == "enumerate_fk"
        assert event["duration_ms"] == 12.35
        assert event["edges"] == 7
        assert "timestamp" in event
