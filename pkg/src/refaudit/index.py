"""Local bibliographic index built from a DBLP-style XML dump.

The index is a single SQLite file.  Besides the exact normalized-title
lookup it keeps two near-match structures:

* a segment index that guarantees recall: every stored title is cut into
  ``D + 1`` contiguous pieces, where ``D`` is the largest edit distance any
  query could have while still reaching ``min_similarity``.  A query within
  that distance must contain at least one piece verbatim, near its original
  offset, so probing those substrings finds every such record.
* a word 3-gram index for looser candidates below the recall threshold.
"""

from __future__ import annotations

import datetime as dt
import html.entities
import json
import math
import os
import sqlite3
import threading
import xml.etree.ElementTree as ET
import zlib
from collections import Counter
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO

from refaudit.matching import normalize_title, similarity
from refaudit.model import BiblioRecord, Source

MAGIC = "refaudit-biblio-index"
FORMAT_VERSION = 1
# stored in the SQLite file header, so a foreign file is recognisable without a query
APPLICATION_ID = 0x52464158

PUBLICATION_TAGS = frozenset(
    {"article", "inproceedings", "incollection", "proceedings", "book", "phdthesis", "mastersthesis"}
)
_FIELD_TAGS = frozenset({"title", "author", "editor", "year", "journal", "booktitle"})
_EPS = 1e-9
_CHUNK = 1 << 16


class MalformedDump(ValueError):
    """Dump is not well-formed; ``position`` is the (line, column) of the error."""

    def __init__(self, message: str, position: tuple[int, int] | None = None):
        super().__init__(message)
        self.position = position


class IoFailure(OSError):
    pass


class IndexUnavailable(RuntimeError):
    pass


# -- dump parsing -----------------------------------------------------------


@dataclass
class DumpRecord:
    tag: str
    key: str | None
    title: str = ""
    authors: list[str] = field(default_factory=list)
    year: int | None = None
    venue: str | None = None


class _DumpTarget:
    """Streaming parser target; yields records as their end tags close."""

    def __init__(self) -> None:
        self.depth = 0
        self.current: DumpRecord | None = None
        self.field: str | None = None
        self.buffer: list[str] = []
        self.done: list[DumpRecord] = []

    def start(self, tag: str, attrib: dict[str, str]) -> None:
        self.depth += 1
        if self.depth == 2 and tag in PUBLICATION_TAGS:
            self.current = DumpRecord(tag=tag, key=attrib.get("key"))
        elif self.depth == 3 and self.current is not None and tag in _FIELD_TAGS:
            self.field = tag
            self.buffer = []

    def data(self, text: str) -> None:
        if self.field is not None:
            self.buffer.append(text)

    def end(self, tag: str) -> None:
        if self.depth == 3 and self.field == tag and self.current is not None:
            self._close_field(" ".join("".join(self.buffer).split()))
            self.field = None
        elif self.depth == 2 and self.current is not None:
            self.done.append(self.current)
            self.current = None
        self.depth -= 1

    def _close_field(self, value: str) -> None:
        rec = self.current
        assert rec is not None
        if not value:
            return
        if self.field == "title":
            rec.title = value
        elif self.field == "author" or (self.field == "editor" and rec.tag in ("book", "proceedings")):
            rec.authors.append(value)
        elif self.field == "year":
            rec.year = int(value) if value.isdigit() else None
        elif self.field == "journal" and rec.tag == "article":
            rec.venue = value
        elif self.field == "booktitle" and rec.tag in ("inproceedings", "incollection"):
            rec.venue = value

    def close(self) -> None:
        return None


def _byte_chunks(stream: BinaryIO) -> Iterator[bytes]:
    first = stream.read(_CHUNK)
    if not first:
        return
    if first[:2] == b"\x1f\x8b":
        inflater = zlib.decompressobj(wbits=47)
        chunk = first
        while chunk:
            try:
                out = inflater.decompress(chunk)
            except zlib.error as exc:
                raise MalformedDump(f"corrupt gzip stream: {exc}") from exc
            if out:
                yield out
            chunk = stream.read(_CHUNK)
        tail = inflater.flush()
        if tail:
            yield tail
        if not inflater.eof:
            raise MalformedDump("truncated gzip stream")
        return
    yield first
    while chunk := stream.read(_CHUNK):
        yield chunk


def iter_dump_records(stream: BinaryIO) -> Iterator[DumpRecord]:
    """Stream publication records out of a (possibly gzipped) dump.

    Memory stays bounded by the chunk size plus one record.  HTML named
    entities used by the DBLP DTD resolve without fetching the DTD.
    """
    target = _DumpTarget()
    parser = ET.XMLParser(target=target)
    parser.entity.update({name: chr(cp) for name, cp in html.entities.name2codepoint.items()})
    fed = False
    try:
        for chunk in _byte_chunks(stream):
            if chunk.strip():
                fed = True
            parser.feed(chunk)
            if target.done:
                yield from target.done
                target.done.clear()
        if fed:
            parser.close()
    except ET.ParseError as exc:
        raise MalformedDump(f"malformed XML: {exc}", exc.position) from exc
    yield from target.done
    target.done.clear()


# -- partitioning -----------------------------------------------------------


def max_edit_distance(length: int, min_similarity: float) -> int:
    """Largest distance at which some query can still reach ``min_similarity``
    against a stored title of ``length`` characters (queries may be longer)."""
    return math.floor((1.0 - min_similarity) / min_similarity * length + _EPS)


def segments(length: int, min_similarity: float) -> list[tuple[int, int]]:
    """(start, size) of the pieces a title of ``length`` is cut into."""
    if length == 0:
        return []
    count = max_edit_distance(length, min_similarity) + 1
    base, extra = divmod(length, count)
    out = []
    start = 0
    for i in range(count):
        size = base + (1 if i >= count - extra else 0)
        out.append((start, size))
        start += size
    return out


def word_grams(norm: str, n: int = 3) -> set[str]:
    words = norm.split()
    if not words:
        return set()
    if len(words) < n:
        return {" ".join(words)}
    return {" ".join(words[i : i + n]) for i in range(len(words) - n + 1)}


# -- build ------------------------------------------------------------------


_SCHEMA = """
CREATE TABLE meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE records (
    id INTEGER PRIMARY KEY,
    norm_title TEXT NOT NULL,
    title TEXT NOT NULL,
    authors TEXT NOT NULL,      -- JSON array
    year INTEGER,
    venue TEXT,
    dblp_key TEXT,
    kind TEXT NOT NULL
);
CREATE TABLE segments (key TEXT NOT NULL, rec INTEGER NOT NULL, PRIMARY KEY (key, rec)) WITHOUT ROWID;
CREATE TABLE grams (gram TEXT NOT NULL, rec INTEGER NOT NULL, PRIMARY KEY (gram, rec)) WITHOUT ROWID;
CREATE TABLE gram_df (gram TEXT PRIMARY KEY, df INTEGER NOT NULL) WITHOUT ROWID;
"""


@dataclass
class IndexHandle:
    """An opened index file.  Queries are read-only and thread-safe."""

    path: Path
    record_count: int
    built_at: dt.datetime
    min_similarity: float = 0.9
    _conn: sqlite3.Connection | None = field(default=None, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def connection(self) -> sqlite3.Connection:
        if self._conn is None:
            try:
                self._conn = sqlite3.connect(f"file:{self.path}?mode=ro", uri=True, check_same_thread=False)
            except sqlite3.Error as exc:
                raise IndexUnavailable(f"cannot open index {self.path}: {exc}") from exc
        return self._conn

    def lookup(self, title: str, k: int = 10) -> list[BiblioRecord]:
        return query_by_title(self, title, k)

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def __enter__(self) -> IndexHandle:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def build_index(dump: str | os.PathLike | BinaryIO, out: str | os.PathLike, *, min_similarity: float = 0.9, batch: int = 5000) -> IndexHandle:
    """Build an index file at ``out`` from a DBLP-style dump (plain or gzip).

    An existing file at ``out`` is replaced only after a successful build.
    """
    out = Path(out)
    tmp = out.with_name(out.name + ".building")
    try:
        if tmp.exists():
            tmp.unlink()
        out.parent.mkdir(parents=True, exist_ok=True)
        conn = sqlite3.connect(tmp)
    except (OSError, sqlite3.Error) as exc:
        raise IoFailure(f"cannot create index at {out}: {exc}") from exc

    try:
        conn.executescript(_SCHEMA)
        conn.execute(f"PRAGMA application_id = {APPLICATION_ID}")
        conn.execute(f"PRAGMA user_version = {FORMAT_VERSION}")
        if isinstance(dump, (str, os.PathLike)):
            try:
                with open(dump, "rb") as fh:
                    count = _load(conn, iter_dump_records(fh), min_similarity, batch)
            except OSError as exc:
                raise IoFailure(f"cannot read dump {dump}: {exc}") from exc
        else:
            count = _load(conn, iter_dump_records(dump), min_similarity, batch)
        conn.execute("INSERT INTO gram_df SELECT gram, COUNT(*) FROM grams GROUP BY gram")
        conn.execute("CREATE INDEX records_norm ON records (norm_title)")
        built_at = dt.datetime.now(dt.timezone.utc).replace(microsecond=0)
        conn.executemany(
            "INSERT INTO meta VALUES (?, ?)",
            [
                ("magic", MAGIC),
                ("format_version", str(FORMAT_VERSION)),
                ("min_similarity", repr(min_similarity)),
                ("record_count", str(count)),
                ("built_at", built_at.isoformat()),
            ],
        )
        conn.commit()
    except sqlite3.Error as exc:
        conn.close()
        tmp.unlink(missing_ok=True)
        raise IoFailure(f"cannot write index {out}: {exc}") from exc
    except BaseException:
        conn.close()
        tmp.unlink(missing_ok=True)
        raise
    conn.close()
    os.replace(tmp, out)
    return IndexHandle(path=out, record_count=count, built_at=built_at, min_similarity=min_similarity)


def _load(conn: sqlite3.Connection, records: Iterable[DumpRecord], min_similarity: float, batch: int) -> int:
    rows, seg_rows, gram_rows = [], [], []
    count = 0

    def flush() -> None:
        conn.executemany("INSERT INTO records VALUES (?, ?, ?, ?, ?, ?, ?, ?)", rows)
        conn.executemany("INSERT OR IGNORE INTO segments VALUES (?, ?)", seg_rows)
        conn.executemany("INSERT OR IGNORE INTO grams VALUES (?, ?)", gram_rows)
        rows.clear()
        seg_rows.clear()
        gram_rows.clear()

    for rec in records:
        title = rec.title.rstrip(". ").strip() if rec.title else ""
        norm = normalize_title(title)
        if not norm:
            continue
        count += 1
        rows.append((count, norm, title, json.dumps(rec.authors, ensure_ascii=False), rec.year, rec.venue, rec.key, rec.tag))
        length = len(norm)
        for i, (start, size) in enumerate(segments(length, min_similarity)):
            seg_rows.append((f"{length}:{i}:{norm[start:start + size]}", count))
        gram_rows.extend((g, count) for g in word_grams(norm))
        if len(rows) >= batch:
            flush()
    flush()
    return count


def open_index(path: str | os.PathLike) -> IndexHandle:
    """Open an existing index, checking its header and format version."""
    path = Path(path)
    if not path.is_file():
        raise IndexUnavailable(f"no index at {path}")
    try:
        conn = sqlite3.connect(f"file:{path}?mode=ro", uri=True, check_same_thread=False)
        app_id = conn.execute("PRAGMA application_id").fetchone()[0]
        meta = dict(conn.execute("SELECT key, value FROM meta").fetchall())
    except sqlite3.Error as exc:
        raise IndexUnavailable(f"{path} is not a bibliographic index: {exc}") from exc
    if app_id != APPLICATION_ID or meta.get("magic") != MAGIC:
        conn.close()
        raise IndexUnavailable(f"{path} is not a bibliographic index")
    if meta.get("format_version") != str(FORMAT_VERSION):
        conn.close()
        raise IndexUnavailable(
            f"{path} has index format {meta.get('format_version')}, expected {FORMAT_VERSION}; rebuild it with build-index"
        )
    return IndexHandle(
        path=path,
        record_count=int(meta["record_count"]),
        built_at=dt.datetime.fromisoformat(meta["built_at"]),
        min_similarity=float(meta["min_similarity"]),
        _conn=conn,
    )


# -- query ------------------------------------------------------------------


def _probe_keys(query: str, min_similarity: float) -> set[str]:
    qlen = len(query)
    keys: set[str] = set()
    lo = max(1, math.floor(qlen * min_similarity) - 1)
    hi = math.ceil(qlen / min_similarity) + 1
    for length in range(lo, hi + 1):
        allowed = math.floor((1.0 - min_similarity) * max(length, qlen) + _EPS)
        allowed = min(allowed, max_edit_distance(length, min_similarity))
        if abs(length - qlen) > allowed:
            continue
        for i, (start, size) in enumerate(segments(length, min_similarity)):
            for pos in range(max(0, start - allowed), min(qlen - size, start + allowed) + 1):
                keys.add(f"{length}:{i}:{query[pos:pos + size]}")
    return keys


def _in_chunks(conn: sqlite3.Connection, sql: str, values: list, size: int = 900) -> list[tuple]:
    out: list[tuple] = []
    for i in range(0, len(values), size):
        part = values[i : i + size]
        out.extend(conn.execute(sql.format(",".join("?" * len(part))), part).fetchall())
    return out


def candidate_ids(idx: IndexHandle, title: str, *, gram_pool: int = 50, max_df: int = 5000) -> set[int]:
    """Record ids worth scoring for ``title``.

    Contains every record whose normalized title reaches the index's
    ``min_similarity`` (exact and segment hits), plus up to ``gram_pool``
    records sharing the most word 3-grams.
    """
    query = normalize_title(title)
    if not query:
        return set()
    conn = idx.connection()
    with idx._lock:
        try:
            ids = {row[0] for row in conn.execute("SELECT id FROM records WHERE norm_title = ?", (query,))}
            keys = sorted(_probe_keys(query, idx.min_similarity))
            ids.update(row[0] for row in _in_chunks(conn, "SELECT rec FROM segments WHERE key IN ({})", keys))
            grams = sorted(word_grams(query))
            usable = [
                g for g, df in _in_chunks(conn, "SELECT gram, df FROM gram_df WHERE gram IN ({})", grams) if df <= max_df
            ]
            shared = Counter(row[0] for row in _in_chunks(conn, "SELECT rec FROM grams WHERE gram IN ({})", usable))
        except sqlite3.Error as exc:
            raise IndexUnavailable(f"index query failed: {exc}") from exc
    ids.update(rec for rec, _ in sorted(shared.items(), key=lambda kv: (-kv[1], kv[0]))[:gram_pool])
    return ids


def fetch_records(idx: IndexHandle, ids: Iterable[int]) -> dict[int, tuple[str, BiblioRecord]]:
    conn = idx.connection()
    with idx._lock:
        rows = _in_chunks(
            conn, "SELECT id, norm_title, title, authors, year, venue, dblp_key FROM records WHERE id IN ({})", sorted(ids)
        )
    return {
        rid: (
            norm,
            BiblioRecord(
                title=title,
                source=Source.LOCAL_INDEX,
                authors=tuple(json.loads(authors)),
                year=year,
                venue=venue,
                external_id=key,
            ),
        )
        for rid, norm, title, authors, year, venue, key in rows
    }


def query_by_title(idx: IndexHandle, title: str, k: int = 10, *, floor: float = 0.0) -> list[BiblioRecord]:
    """Up to ``k`` records ranked by normalized-title similarity.

    Exact normalized matches come first; ties keep insertion order.
    Candidates scoring below ``floor`` are dropped.
    """
    return [rec for _, rec in scored_query(idx, title, k, floor=floor)]


def scored_query(idx: IndexHandle, title: str, k: int = 10, *, floor: float = 0.0) -> list[tuple[float, BiblioRecord]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    query = normalize_title(title)
    found = fetch_records(idx, candidate_ids(idx, title))
    scored = sorted(
        ((similarity(query, norm), rid, rec) for rid, (norm, rec) in found.items()),
        key=lambda t: (-t[0], t[1]),
    )
    return [(s, rec) for s, _, rec in scored if s >= floor][:k]
