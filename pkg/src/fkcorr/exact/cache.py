"""JSON cache for oracle results, one file per graph hash."""

from __future__ import annotations

import hashlib
import json
import threading
from collections.abc import Callable
from pathlib import Path
from typing import Any

from fkcorr.utils.logging import get_logger


logger = get_logger(__name__)


def query_hash(query: dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(query, sort_keys=True, default=str).encode()).hexdigest()[:16]


class OracleCache:
    """Stores ``{query_hash: {"query": ..., "value": ...}}`` under ``<directory>/<graph_hash>.json``.

    A cache built with ``directory=None`` computes every request and stores nothing.
    """

    def __init__(self, directory: Path | None) -> None:
        self.directory = directory
        self._lock = threading.Lock()
        if directory is not None:
            directory.mkdir(parents=True, exist_ok=True)

    def _path(self, graph_hash: str) -> Path:
        assert self.directory is not None
        return self.directory / f"{graph_hash}.json"

    def _load(self, graph_hash: str) -> dict[str, Any]:
        path = self._path(graph_hash)
        if not path.exists():
            return {}
        try:
            data: dict[str, Any] = json.loads(path.read_text())
        except json.JSONDecodeError:
            logger.warning("oracle_cache_corrupt", path=str(path))
            return {}
        return data

    def get(self, graph_hash: str, query: dict[str, Any]) -> Any | None:
        if self.directory is None:
            return None
        entry = self._load(graph_hash).get(query_hash(query))
        return None if entry is None else entry["value"]

    def put(self, graph_hash: str, query: dict[str, Any], value: Any) -> None:
        if self.directory is None:
            return
        with self._lock:
            data = self._load(graph_hash)
            data[query_hash(query)] = {"query": query, "value": value}
            self._path(graph_hash).write_text(json.dumps(data, indent=2, sort_keys=True))

    def get_or_compute(self, graph_hash: str, query: dict[str, Any], compute: Callable[[], Any]) -> Any:
        """Cached value for ``query`` or the result of ``compute()``, stored on the way out."""
        cached = self.get(graph_hash, query)
        if cached is not None:
            logger.debug("oracle_cache_hit", graph=graph_hash, query=query_hash(query))
            return cached
        value = compute()
        self.put(graph_hash, query, value)
        return value
