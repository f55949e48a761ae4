from __future__ import annotations

import asyncio
import sys
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from refaudit.cache import CacheEntry  # noqa: E402
from refaudit.model import BiblioRecord, Source  # noqa: E402
from refaudit.remote import ProviderError  # noqa: E402

AUGMIX_TRUE = "AugMix: A Simple Data Processing Method to Improve Robustness and Uncertainty"
AUGMIX_WRONG = "Augmix: A Simple Method To Improve Robustness And Uncertainty Under Data Shift"


def dblp_xml(records: Iterable[dict], *, doctype: bool = True) -> bytes:
    """A small DBLP-style dump.  Each record: tag, title, authors, year, venue, key."""
    parts = ['<?xml version="1.0" encoding="UTF-8"?>']
    if doctype:
        parts.append('<!DOCTYPE dblp SYSTEM "dblp.dtd">')
    parts.append("<dblp>")
    for i, rec in enumerate(records):
        tag = rec.get("tag", "article")
        venue_tag = "journal" if tag == "article" else "booktitle"
        body = "".join(f"<author>{escape(a)}</author>" for a in rec.get("authors", ()))
        body += f"<title>{rec['title']}</title>"
        if rec.get("year") is not None:
            body += f"<year>{rec['year']}</year>"
        if rec.get("venue"):
            body += f"<{venue_tag}>{escape(rec['venue'])}</{venue_tag}>"
        parts.append(f'<{tag} key="{rec.get("key", f"rec/{i}")}" mdate="2024-01-01">{body}</{tag}>')
    parts.append("</dblp>")
    return "\n".join(parts).encode("utf-8")


def run(coro):
    return asyncio.run(coro)


@dataclass
class CallLog:
    calls: list[str] = field(default_factory=list)


class FakeIndex:
    def __init__(self, log: CallLog, records: Sequence[BiblioRecord] = ()):
        self.log = log
        self.records = list(records)

    def lookup(self, title: str, k: int = 10) -> list[BiblioRecord]:
        self.log.calls.append("LocalIndex")
        return self.records[:k]


class FakeCache:
    def __init__(self, log: CallLog):
        self.log = log
        self.store: dict[str, CacheEntry] = {}

    def get(self, key: str) -> CacheEntry | None:
        self.log.calls.append("Cache")
        return self.store.get(key)

    def put(self, entry: CacheEntry) -> None:
        self.store[entry.key] = entry


class ScriptedProvider:
    """Returns canned records per call; tracks concurrent in-flight calls."""

    def __init__(
        self,
        name: str,
        kind: str,
        log: CallLog | None = None,
        responder: Callable[[str], list[BiblioRecord]] | None = None,
        *,
        fail: bool = False,
        delay: float = 0.0,
    ):
        self.name = name
        self.kind = kind
        self.log = log
        self.responder = responder or (lambda q: [])
        self.fail = fail
        self.delay = delay
        self.in_flight = 0
        self.peak = 0
        self.queries: list[str] = []

    async def search(self, query: str, k: int) -> list[BiblioRecord]:
        if self.log is not None:
            self.log.calls.append("AcademicDB" if self.kind == "academic" else "WebSearch")
        self.queries.append(query)
        self.in_flight += 1
        self.peak = max(self.peak, self.in_flight)
        try:
            await asyncio.sleep(self.delay)
            if self.fail:
                raise ProviderError(f"{self.name} is down")
            return self.responder(query)[:k]
        finally:
            self.in_flight -= 1


class ScriptedLLM:
    def __init__(self, log: CallLog | None, reply: str | Callable[[str], str]):
        self.log = log
        self.reply = reply
        self.prompts: list[str] = []

    async def complete(self, prompt: str) -> str:
        if self.log is not None:
            self.log.calls.append("LLMReparse")
        self.prompts.append(prompt)
        return self.reply(prompt) if callable(self.reply) else self.reply


def record(title: str, source: Source = Source.LOCAL_INDEX, **kw) -> BiblioRecord:
    return BiblioRecord(title=title, source=source, **kw)


@pytest.fixture
def log() -> CallLog:
    return CallLog()


# -- acceptance reporting ------------------------------------------------------

ACCEPTANCE_LINES: dict[str, str] = {}


def criterion(label: str, ok: bool, detail: str) -> None:
    """Record one acceptance line, then fail the calling test if ``ok`` is false."""
    ACCEPTANCE_LINES[label] = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    print(ACCEPTANCE_LINES[label])
    assert ok, detail


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[1:].split()[0])):
        terminalreporter.write_line(ACCEPTANCE_LINES[label])
