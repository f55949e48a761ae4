from __future__ import annotations

import datetime as dt

import pytest

from conftest import record
from refaudit.cache import CacheEntry, ResultCache, StorageFailure
from refaudit.model import ConstraintViolation, Source, Status

T0 = dt.datetime(2025, 1, 1, tzinfo=dt.timezone.utc)


def valid_entry(key="deep learning", sim=0.97, when=T0):
    rec = record("Deep Learning", Source.ACADEMIC_DB, authors=("Y. LeCun",), year=2015, venue="Nature", external_id="x1")
    return CacheEntry(key=key, result_status=Status.VALID, matched=rec, best_similarity=sim, stored_at=when)


def test_put_then_get(tmp_path):
    with ResultCache(tmp_path / "c.sqlite") as cache:
        e = valid_entry()
        cache.put(e)
        assert cache.get(e.key) == e
        assert cache.get("unknown") is None
        assert len(cache) == 1


def test_last_writer_wins():
    cache = ResultCache()
    cache.put(valid_entry(sim=0.95))
    cache.put(valid_entry(sim=0.99))
    assert cache.get("deep learning").best_similarity == 0.99
    assert len(cache) == 1


def test_survives_restart(tmp_path):
    path = tmp_path / "c.sqlite"
    with ResultCache(path) as cache:
        cache.put(valid_entry())
    with ResultCache(path) as cache:
        assert cache.get("deep learning") == valid_entry()


def test_invalid_entries_expire_valid_do_not():
    cache = ResultCache(invalid_ttl=dt.timedelta(days=30))
    cache.put(CacheEntry(key="ghost", result_status=Status.INVALID, best_similarity=0.4, stored_at=T0))
    cache.put(valid_entry(when=T0))
    assert cache.get("ghost", now=T0 + dt.timedelta(days=29)) is not None
    assert cache.get("ghost", now=T0 + dt.timedelta(days=31)) is None
    assert cache.get("deep learning", now=T0 + dt.timedelta(days=3650)) is not None


def test_entry_constraints():
    with pytest.raises(ConstraintViolation):
        CacheEntry(key="k", result_status=Status.NON_ACADEMIC)
    with pytest.raises(ConstraintViolation):
        CacheEntry(key="k", result_status=Status.VALID)
    assert CacheEntry(key="k", result_status="Invalid").stored_at is not None


def test_unwritable_location(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(StorageFailure):
        ResultCache(blocker / "sub" / "c.sqlite")


def test_schema_columns(tmp_path):
    with ResultCache(tmp_path / "c.sqlite") as cache:
        cols = [row[1] for row in cache._conn.execute("PRAGMA table_info(verification_cache)")]
    assert cols[:8] == [
        "key", "status", "matched_title", "matched_authors", "matched_year", "matched_venue", "similarity", "stored_at"
    ]
