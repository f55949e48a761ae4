"""SQLite store of previous verification outcomes, keyed by normalized title."""

from __future__ import annotations

import datetime as dt
import json
import os
import sqlite3
import threading
from dataclasses import dataclass
from pathlib import Path

from refaudit.model import BiblioRecord, ConstraintViolation, Source, Status


class StorageFailure(RuntimeError):
    pass


def utcnow() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc).replace(microsecond=0)


@dataclass(frozen=True)
class CacheEntry:
    key: str
    result_status: Status
    matched: BiblioRecord | None = None
    best_similarity: float | None = None
    stored_at: dt.datetime | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "result_status", Status(self.result_status))
        if self.result_status not in (Status.VALID, Status.INVALID):
            raise ConstraintViolation(f"only Valid/Invalid outcomes are cached, got {self.result_status.value}")
        if self.result_status is Status.VALID and (self.matched is None or self.best_similarity is None):
            raise ConstraintViolation("a Valid cache entry needs a matched record and similarity")
        if self.stored_at is None:
            object.__setattr__(self, "stored_at", utcnow())


_SCHEMA = """
CREATE TABLE IF NOT EXISTS verification_cache (
    key TEXT PRIMARY KEY,
    status TEXT NOT NULL,
    matched_title TEXT,
    matched_authors TEXT,
    matched_year INT,
    matched_venue TEXT,
    similarity REAL,
    stored_at TEXT NOT NULL,
    matched_source TEXT,
    matched_external_id TEXT
)
"""


class ResultCache:
    """Last-writer-wins store of cascade outcomes.

    Invalid entries older than ``invalid_ttl`` read as misses so that
    recently indexed papers get another chance; Valid entries never expire.
    Writes are serialized through one connection guarded by a lock.
    """

    def __init__(self, path: str | os.PathLike = ":memory:", *, invalid_ttl: dt.timedelta = dt.timedelta(days=30)):
        self.path = str(path)
        self.invalid_ttl = invalid_ttl
        self._lock = threading.Lock()
        try:
            if self.path != ":memory:":
                Path(self.path).parent.mkdir(parents=True, exist_ok=True)
            self._conn = sqlite3.connect(self.path, check_same_thread=False)
            if self.path != ":memory:":
                self._conn.execute("PRAGMA journal_mode=WAL")
                self._conn.execute("PRAGMA synchronous=NORMAL")
            self._conn.execute(_SCHEMA)
            self._conn.commit()
        except (OSError, sqlite3.Error) as exc:
            raise StorageFailure(f"cannot open cache {self.path}: {exc}") from exc

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    def __enter__(self) -> ResultCache:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def get(self, key: str, *, now: dt.datetime | None = None) -> CacheEntry | None:
        try:
            with self._lock:
                row = self._conn.execute(
                    "SELECT key, status, matched_title, matched_authors, matched_year, matched_venue,"
                    " similarity, stored_at, matched_source, matched_external_id"
                    " FROM verification_cache WHERE key = ?",
                    (key,),
                ).fetchone()
        except sqlite3.Error as exc:
            raise StorageFailure(f"cache read failed: {exc}") from exc
        if row is None:
            return None
        entry = _entry_from_row(row)
        if entry.result_status is Status.INVALID:
            assert entry.stored_at is not None
            if (now or utcnow()) - entry.stored_at > self.invalid_ttl:
                return None
        return entry

    def put(self, entry: CacheEntry) -> None:
        m = entry.matched
        assert entry.stored_at is not None
        row = (
            entry.key,
            entry.result_status.value,
            m.title if m else None,
            json.dumps(list(m.authors), ensure_ascii=False) if m else None,
            m.year if m else None,
            m.venue if m else None,
            entry.best_similarity,
            entry.stored_at.isoformat(),
            m.source.value if m else None,
            m.external_id if m else None,
        )
        try:
            with self._lock:
                self._conn.execute("INSERT OR REPLACE INTO verification_cache VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)", row)
                self._conn.commit()
        except sqlite3.Error as exc:
            raise StorageFailure(f"cache write failed: {exc}") from exc

    def __len__(self) -> int:
        with self._lock:
            return self._conn.execute("SELECT COUNT(*) FROM verification_cache").fetchone()[0]


def _entry_from_row(row: tuple) -> CacheEntry:
    key, status, title, authors, year, venue, sim, stored_at, source, external_id = row
    matched = None
    if title is not None:
        matched = BiblioRecord(
            title=title,
            source=Source(source) if source else Source.CACHE,
            authors=tuple(json.loads(authors)) if authors else (),
            year=year,
            venue=venue,
            external_id=external_id,
        )
    return CacheEntry(
        key=key,
        result_status=Status(status),
        matched=matched,
        best_similarity=sim,
        stored_at=dt.datetime.fromisoformat(stored_at),
    )

