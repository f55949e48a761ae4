"""Remote bibliographic search: provider contract, retries and a shared limiter."""

from __future__ import annotations

import asyncio
import logging
import os
from collections.abc import Awaitable, Callable
from dataclasses import dataclass
from typing import Any, Protocol, TypeVar

import httpx

from refaudit.model import BiblioRecord, Source

logger = logging.getLogger(__name__)

T = TypeVar("T")


class RemoteError(Exception):
    pass


class TransientError(RemoteError):
    """Transport-level failure worth retrying (connection, timeout, 429, 5xx)."""

    def __init__(self, message: str, *, kind: str = "server", retry_after: float | None = None):
        super().__init__(message)
        self.kind = kind
        self.retry_after = retry_after


class ProviderError(RemoteError):
    pass


class RateLimited(ProviderError):
    pass


class ProviderTimeout(ProviderError):
    pass


class ConcurrencyLimiter:
    """Counting guard admitting at most ``limit`` remote operations at once.

    Also records the peak number of concurrently admitted operations, which
    tests use to check the bound.
    """

    def __init__(self, limit: int = 10):
        if limit < 1:
            raise ValueError("limit must be >= 1")
        self.limit = limit
        self._sem: asyncio.Semaphore | None = None
        self.in_flight = 0
        self.peak = 0
        self.admitted = 0

    async def __aenter__(self) -> ConcurrencyLimiter:
        if self._sem is None:
            self._sem = asyncio.Semaphore(self.limit)
        await self._sem.acquire()
        self.in_flight += 1
        self.admitted += 1
        self.peak = max(self.peak, self.in_flight)
        return self

    async def __aexit__(self, *exc: object) -> None:
        self.in_flight -= 1
        assert self._sem is not None
        self._sem.release()


@dataclass(frozen=True)
class RetryPolicy:
    retries: int = 2
    base_delay: float = 1.0
    factor: float = 2.0
    max_delay: float = 60.0

    def delay(self, attempt: int) -> float:
        return min(self.base_delay * self.factor**attempt, self.max_delay)


async def with_retries(
    op: Callable[[], Awaitable[T]],
    retry: RetryPolicy | None = None,
    limiter: ConcurrencyLimiter | None = None,
    sleep: Callable[[float], Awaitable[Any]] = asyncio.sleep,
) -> T:
    """Run ``op`` under the limiter, retrying :class:`TransientError` per ``retry``."""
    retry = retry or RetryPolicy()
    attempt = 0
    while True:
        try:
            if limiter is None:
                return await op()
            async with limiter:
                return await op()
        except TransientError as exc:
            if attempt >= retry.retries:
                raise _exhausted(exc, attempt + 1) from exc
            delay = retry.delay(attempt)
            if exc.retry_after is not None:
                delay = min(max(delay, exc.retry_after), retry.max_delay)
            logger.debug("transient failure (%s), retry %d in %.2fs", exc, attempt + 1, delay)
            attempt += 1
            if delay > 0:
                await sleep(delay)


def _exhausted(exc: TransientError, attempts: int) -> ProviderError:
    msg = f"{exc} (after {attempts} attempts)"
    if exc.kind == "rate":
        return RateLimited(msg)
    if exc.kind == "timeout":
        return ProviderTimeout(msg)
    return ProviderError(msg)


def raise_for_transport(response: httpx.Response, name: str) -> None:
    """Map an HTTP status to the retry taxonomy."""
    status = response.status_code
    if status == 429:
        retry_after = response.headers.get("retry-after")
        try:
            seconds = float(retry_after) if retry_after is not None else None
        except ValueError:
            seconds = None
        raise TransientError(f"{name}: HTTP 429", kind="rate", retry_after=seconds)
    if status >= 500:
        raise TransientError(f"{name}: HTTP {status}", kind="server")
    if status >= 400:
        raise ProviderError(f"{name}: HTTP {status}")


class SearchProvider(Protocol):
    name: str
    kind: str  # "academic" or "websearch"

    async def search(self, query: str, k: int) -> list[BiblioRecord]: ...


def source_for_kind(kind: str) -> Source:
    if kind == "academic":
        return Source.ACADEMIC_DB
    if kind == "websearch":
        return Source.WEB_SEARCH
    raise ValueError(f"unknown provider kind {kind!r}")


async def remote_search(
    provider: SearchProvider,
    query: str,
    k: int = 10,
    *,
    retry: RetryPolicy | None = None,
    limiter: ConcurrencyLimiter | None = None,
) -> list[BiblioRecord]:
    if not query.strip():
        raise ValueError("empty query")
    records = await with_retries(lambda: provider.search(query, k), retry, limiter)
    return list(records)[:k]


_LIST_KEYS = ("results", "data", "items", "hits", "organic_results", "scholar_results", "papers")


class HttpSearchProvider:
    """JSON search endpoint adapter.

    Sends ``GET endpoint?q=<query>&limit=<k>`` and accepts either a bare list
    of hits or an object holding the list under a common key.  Each hit needs
    a ``title``; ``authors``/``year``/``venue`` are read when present.  The
    API key is sent as a bearer token, or as a query parameter when
    ``auth_param`` is set (the style scraping proxies use).
    """

    def __init__(
        self,
        name: str,
        kind: str,
        endpoint: str,
        *,
        api_key_env: str | None = None,
        auth_param: str | None = None,
        query_param: str = "q",
        limit_param: str | None = "limit",
        timeout: float = 30.0,
        transport: httpx.AsyncBaseTransport | None = None,
    ):
        self.name = name
        self.kind = kind
        self.source = source_for_kind(kind)
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.auth_param = auth_param
        self.query_param = query_param
        self.limit_param = limit_param
        self._client = httpx.AsyncClient(timeout=timeout, transport=transport)

    async def aclose(self) -> None:
        await self._client.aclose()

    async def search(self, query: str, k: int) -> list[BiblioRecord]:
        params: dict[str, Any] = {self.query_param: query}
        if self.limit_param:
            params[self.limit_param] = k
        headers = {}
        key = os.environ.get(self.api_key_env) if self.api_key_env else None
        if key:
            if self.auth_param:
                params[self.auth_param] = key
            else:
                headers["Authorization"] = f"Bearer {key}"
        try:
            response = await self._client.get(self.endpoint, params=params, headers=headers)
        except httpx.TimeoutException as exc:
            raise TransientError(f"{self.name}: timeout", kind="timeout") from exc
        except httpx.TransportError as exc:
            raise TransientError(f"{self.name}: {exc.__class__.__name__}", kind="server") from exc
        raise_for_transport(response, self.name)
        try:
            payload = response.json()
        except ValueError as exc:
            raise ProviderError(f"{self.name}: response is not JSON") from exc
        return parse_hits(payload, self.source)[:k]


def parse_hits(payload: Any, source: Source) -> list[BiblioRecord]:
    hits: Any = payload
    if isinstance(payload, dict) and isinstance(payload.get("message"), dict):
        payload = payload["message"]  # Crossref envelope
    if isinstance(payload, dict):
        hits = next((payload[key] for key in _LIST_KEYS if isinstance(payload.get(key), list)), [])
    if not isinstance(hits, list):
        return []
    records = []
    for hit in hits:
        if not isinstance(hit, dict):
            continue
        title = _first(hit.get("title"))
        if not isinstance(title, str) or not title.strip():
            continue
        records.append(
            BiblioRecord(
                title=title.strip(),
                source=source,
                authors=_authors(hit.get("authors", hit.get("author"))),
                year=_year(hit.get("year", hit.get("issued"))),
                venue=_str_or_none(
                    _first(hit.get("venue") or hit.get("journal") or hit.get("publication") or hit.get("container-title"))
                ),
                external_id=_str_or_none(
                    hit.get("id") or hit.get("paperId") or hit.get("DOI") or hit.get("link") or hit.get("url")
                ),
            )
        )
    return records


def _first(value: Any) -> Any:
    if isinstance(value, list):
        return value[0] if value else None
    return value


def _authors(value: Any) -> tuple[str, ...]:
    if isinstance(value, str):
        return tuple(a.strip() for a in value.split(",") if a.strip())
    if isinstance(value, list):
        names = []
        for item in value:
            if isinstance(item, str):
                names.append(item)
            elif isinstance(item, dict) and isinstance(item.get("name"), str):
                names.append(item["name"])
            elif isinstance(item, dict) and isinstance(item.get("family"), str):
                names.append(" ".join(p for p in (item.get("given"), item["family"]) if isinstance(p, str)))
        return tuple(names)
    return ()


def _year(value: Any) -> int | None:
    if isinstance(value, dict):  # Crossref "issued": {"date-parts": [[2020, 1]]}
        parts = value.get("date-parts") or [[None]]
        value = parts[0][0] if parts and parts[0] else None
    try:
        year = int(value)
    except (TypeError, ValueError):
        return None
    return year if 1800 <= year <= 2100 else None


def _str_or_none(value: Any) -> str | None:
    return value.strip() or None if isinstance(value, str) else None
