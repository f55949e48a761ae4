"""Clients for the reference-extraction service and the LLM reparser."""

from __future__ import annotations

import json
import os
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Any, Protocol

import httpx
import jsonschema

from refaudit.model import ConstraintViolation, ParsedReference, RawReference, ReferenceType
from refaudit.parsing import YEAR_MAX, YEAR_MIN
from refaudit.remote import ConcurrencyLimiter, ProviderError, RetryPolicy, TransientError, raise_for_transport, with_retries

TEI_NS = {"tei": "http://www.tei-c.org/ns/1.0"}


class ServiceUnavailable(Exception):
    pass


class MalformedServiceResponse(Exception):
    pass


class SchemaViolation(ValueError):
    pass


@dataclass(frozen=True)
class ExtractionDocument:
    doc_id: str
    references: tuple[RawReference, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        indices = [r.ref_index for r in self.references]
        if indices != sorted(indices):
            raise ConstraintViolation("references must be in bibliography order")


class ExtractionClient:
    """Talks to a GROBID-style reference extraction endpoint.

    The document is posted as multipart ``input``; the reply is TEI XML with
    one ``biblStruct`` per reference, or JSON with a ``references`` list of
    strings or ``{"raw": ...}`` objects.
    """

    def __init__(self, endpoint: str, *, timeout: float = 120.0, transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def process(self, doc_bytes: bytes) -> httpx.Response:
        try:
            response = self._client.post(
                self.endpoint,
                files={"input": ("document.pdf", doc_bytes, "application/pdf")},
                data={"includeRawCitations": "1", "consolidateCitations": "0"},
            )
        except httpx.TransportError as exc:
            raise ServiceUnavailable(f"extraction service unreachable: {exc}") from exc
        if response.status_code >= 500 or response.status_code == 429:
            raise ServiceUnavailable(f"extraction service returned HTTP {response.status_code}")
        if response.status_code >= 400:
            raise MalformedServiceResponse(f"extraction service rejected the document: HTTP {response.status_code}")
        return response


def extract_references(doc_bytes: bytes, client: ExtractionClient, doc_id: str = "document") -> ExtractionDocument:
    if not doc_bytes:
        return ExtractionDocument(doc_id=doc_id)
    response = client.process(doc_bytes)
    body = response.content
    if not body.strip():
        return ExtractionDocument(doc_id=doc_id)
    content_type = response.headers.get("content-type", "")
    if "json" in content_type or body.lstrip()[:1] in (b"{", b"["):
        texts = _references_from_json(body)
    else:
        texts = _references_from_tei(body)
    refs = tuple(RawReference(text=t, paper_id=doc_id, ref_index=i) for i, t in enumerate(texts))
    return ExtractionDocument(doc_id=doc_id, references=refs)


def _references_from_json(body: bytes) -> list[str]:
    try:
        payload = json.loads(body)
    except ValueError as exc:
        raise MalformedServiceResponse(f"invalid JSON: {exc}") from exc
    items = payload.get("references") if isinstance(payload, dict) else payload
    if not isinstance(items, list):
        raise MalformedServiceResponse("JSON response has no references list")
    texts = []
    for item in items:
        text = item.get("raw") if isinstance(item, dict) else item
        if not isinstance(text, str):
            raise MalformedServiceResponse(f"reference entry is not text: {item!r}")
        if text.strip():
            texts.append(" ".join(text.split()))
    return texts


def _references_from_tei(body: bytes) -> list[str]:
    try:
        root = ET.fromstring(body)
    except ET.ParseError as exc:
        raise MalformedServiceResponse(f"invalid TEI XML: {exc}") from exc
    texts = []
    for bibl in root.iter(f"{{{TEI_NS['tei']}}}biblStruct"):
        raw = bibl.find("tei:note[@type='raw_reference']", TEI_NS)
        if raw is not None and "".join(raw.itertext()).strip():
            text = "".join(raw.itertext())
        else:
            text = _compose_from_tei(bibl)
        text = " ".join(text.split())
        if text:
            texts.append(text)
    return texts


def _compose_from_tei(bibl: ET.Element) -> str:
    names = []
    for pers in bibl.findall("tei:analytic/tei:author/tei:persName", TEI_NS) or bibl.findall(
        "tei:monogr/tei:author/tei:persName", TEI_NS
    ):
        names.append(" ".join(" ".join(p.itertext()) for p in pers))
    title = bibl.find("tei:analytic/tei:title", TEI_NS)
    venue = bibl.find("tei:monogr/tei:title", TEI_NS)
    if title is None:
        title, venue = venue, None
    date = bibl.find("tei:monogr/tei:imprint/tei:date", TEI_NS)
    parts = []
    if names:
        parts.append(" and ".join(n for n in names if n.strip()))
    if title is not None:
        parts.append("".join(title.itertext()))
    if venue is not None:
        parts.append("".join(venue.itertext()))
    if date is not None and date.get("when"):
        parts.append(date.get("when", "")[:4])
    return ". ".join(p.strip() for p in parts if p.strip())


REPARSE_SCHEMA_VERSION = "1"

REPARSE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["author", "title"],
    "properties": {
        "author": {"type": "array", "items": {"type": "string"}},
        "title": {"type": "string", "minLength": 1},
        "venue": {"type": ["string", "null"]},
        "year": {"type": ["integer", "null"]},
        "url": {"type": ["string", "null"]},
        "doi": {"type": ["string", "null"]},
        "reference_type": {"enum": [t.value for t in ReferenceType] + [None]},
    },
}

REPARSE_FIELDS = """\
{
  "author": ["Author1", "Author2"],
  "title": "Full article title",
  "venue": "Journal, conference or publication platform",
  "year": 2020,
  "url": "Article link, or null",
  "doi": "DOI, or null",
  "reference_type": "article | series | thesis | monograph | unknown"
}
- author: array of author name strings, in citation order (empty array if none are given)
- title: full title of the cited work (required)
- venue: journal, conference or platform name, or null
- year: publication year as a number, or null
- url: access link, or null
- doi: DOI, or null
- reference_type: article (conference/journal paper), series (book series), thesis (degree thesis),
  monograph (book), unknown (cannot be determined)"""

REPARSE_PROMPT = """\
Extract the bibliographic fields of the reference below. The text may contain
PDF extraction noise such as broken hyphenation, merged words or stray markers;
repair it, but do not invent fields that are not present.

Reference:
{reference}

Return exactly one JSON object and nothing else, with these fields:
{fields}
"""


class ChatClient(Protocol):
    async def complete(self, prompt: str) -> str: ...


class ChatCompletionsClient:
    """Minimal client for an OpenAI-compatible ``/chat/completions`` endpoint."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        api_key_env: str | None = None,
        timeout: float = 60.0,
        transport: httpx.AsyncBaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self._client = httpx.AsyncClient(timeout=timeout, transport=transport)

    async def aclose(self) -> None:
        await self._client.aclose()

    async def complete(self, prompt: str) -> str:
        headers = {}
        key = os.environ.get(self.api_key_env) if self.api_key_env else None
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
            "response_format": {"type": "json_object"},
        }
        try:
            response = await self._client.post(self.endpoint, json=body, headers=headers)
        except httpx.TimeoutException as exc:
            raise TransientError("llm: timeout", kind="timeout") from exc
        except httpx.TransportError as exc:
            raise TransientError(f"llm: {exc.__class__.__name__}") from exc
        raise_for_transport(response, "llm")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError("llm: unexpected response shape") from exc


@dataclass(frozen=True)
class ReparseRequest:
    raw: RawReference
    schema_version: str = REPARSE_SCHEMA_VERSION


def build_reparse_prompt(raw_text: str) -> str:
    return REPARSE_PROMPT.format(reference=raw_text.strip(), fields=REPARSE_FIELDS)


_FENCE = re.compile(r"^\s*```(?:json)?\s*(.*?)\s*```\s*$", re.DOTALL)


def parse_reparse_response(text: str) -> ParsedReference:
    """Validate a provider reply against the reparse schema; raise :class:`SchemaViolation`."""
    fenced = _FENCE.match(text)
    if fenced:
        text = fenced.group(1)
    try:
        payload = json.loads(text)
    except ValueError as exc:
        raise SchemaViolation(f"response is not JSON: {text[:80]!r}") from exc
    try:
        jsonschema.validate(payload, REPARSE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(exc.message) from exc
    year = payload.get("year")
    if year is not None and not YEAR_MIN <= int(year) <= YEAR_MAX:
        year = None
    try:
        return ParsedReference(
            title=payload["title"],
            authors=tuple(payload["author"]),
            year=int(year) if year is not None else None,
            venue=payload.get("venue"),
            url=payload.get("url"),
            doi=payload.get("doi"),
            reference_type=ReferenceType(payload.get("reference_type") or "unknown"),
        )
    except ConstraintViolation as exc:
        raise SchemaViolation(str(exc)) from exc


async def llm_reparse(
    req: ReparseRequest,
    client: ChatClient,
    *,
    retry: RetryPolicy | None = None,
    limiter: ConcurrencyLimiter | None = None,
) -> ParsedReference:
    if req.schema_version != REPARSE_SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {req.schema_version!r}")
    prompt = build_reparse_prompt(req.raw.text)
    reply = await with_retries(lambda: client.complete(prompt), retry, limiter)
    return parse_reparse_response(reply)
