"""Pluggable persistence: namespaced key/value tables plus append-only logs.

Two implementations share one contract: an in-memory store for tests and
a file-backed store for the service. Values must be JSON-serializable;
the domain layers own (de)serialization of their records.

Writes are serialized through a single lock (single-writer model).
Readers work on plain dict lookups of immutable values, which the CPython
memory model makes safe to run concurrently with a writer: a reader sees
either the old value or the new one, never a torn record.
"""

from __future__ import annotations

import json
import threading
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Iterator


class KeyValueStore(ABC):
    """Contract every storage backend implements."""

    @abstractmethod
    def get(self, namespace: str, key: str) -> Any | None:
        ...

    @abstractmethod
    def put(self, namespace: str, key: str, value: Any) -> None:
        ...

    @abstractmethod
    def keys(self, namespace: str) -> list[str]:
        ...

    @abstractmethod
    def items(self, namespace: str) -> Iterator[tuple[str, Any]]:
        ...

    @abstractmethod
    def append(self, log: str, record: Any) -> None:
        ...

    @abstractmethod
    def log_records(self, log: str) -> list[Any]:
        ...

    @abstractmethod
    def log_len(self, log: str) -> int:
        ...


class InMemoryStore(KeyValueStore):
    """Dict-backed store; the default for tests and throwaway corpora."""

    def __init__(self) -> None:
        self._tables: dict[str, dict[str, Any]] = {}
        self._logs: dict[str, list[Any]] = {}
        self._write_lock = threading.RLock()

    def get(self, namespace: str, key: str) -> Any | None:
        table = self._tables.get(namespace)
        if table is None:
            return None
        return table.get(key)

    def put(self, namespace: str, key: str, value: Any) -> None:
        with self._write_lock:
            self._tables.setdefault(namespace, {})[key] = value

    def keys(self, namespace: str) -> list[str]:
        return list(self._tables.get(namespace, {}))

    def items(self, namespace: str) -> Iterator[tuple[str, Any]]:
        return iter(list(self._tables.get(namespace, {}).items()))

    def append(self, log: str, record: Any) -> None:
        with self._write_lock:
            self._logs.setdefault(log, []).append(record)

    def log_records(self, log: str) -> list[Any]:
        return list(self._logs.get(log, []))

    def log_len(self, log: str) -> int:
        return len(self._logs.get(log, []))


class FileStore(InMemoryStore):
    """Durable store: one JSON-lines file per table or log under a directory.

    Tables replay last-write-wins on load; logs replay in append order.
    Every write is appended and flushed before the in-memory view updates,
    so a crash loses at most the write in flight.
    """

    _TABLE_PREFIX = "table__"
    _LOG_PREFIX = "log__"

    def __init__(self, root: str | Path) -> None:
        super().__init__()
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._handles: dict[Path, Any] = {}
        self._load()

    def _load(self) -> None:
        for path in sorted(self._root.glob(f"{self._TABLE_PREFIX}*.jsonl")):
            name = path.stem[len(self._TABLE_PREFIX):]
            table = self._tables.setdefault(name, {})
            with path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        entry = json.loads(line)
                        table[entry["k"]] = entry["v"]
        for path in sorted(self._root.glob(f"{self._LOG_PREFIX}*.jsonl")):
            name = path.stem[len(self._LOG_PREFIX):]
            log = self._logs.setdefault(name, [])
            with path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        log.append(json.loads(line))

    def _handle(self, path: Path):
        fh = self._handles.get(path)
        if fh is None:
            fh = path.open("a", encoding="utf-8")
            self._handles[path] = fh
        return fh

    def _write_line(self, path: Path, payload: Any) -> None:
        fh = self._handle(path)
        fh.write(json.dumps(payload, ensure_ascii=False) + "\n")
        fh.flush()

    def put(self, namespace: str, key: str, value: Any) -> None:
        with self._write_lock:
            path = self._root / f"{self._TABLE_PREFIX}{namespace}.jsonl"
            self._write_line(path, {"k": key, "v": value})
            super().put(namespace, key, value)

    def append(self, log: str, record: Any) -> None:
        with self._write_lock:
            path = self._root / f"{self._LOG_PREFIX}{log}.jsonl"
            self._write_line(path, record)
            super().append(log, record)

    def close(self) -> None:
        with self._write_lock:
            for fh in self._handles.values():
                fh.close()
            self._handles.clear()
