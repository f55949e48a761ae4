"""Heuristic segmentation of raw reference strings.

Rules are applied in a fixed order: marker strip, author segment, title
segment, venue, year.  Nothing is guessed: a field that cannot be isolated
is left absent.
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Iterator
from pathlib import Path

from refaudit.matching import normalize_title
from refaudit.model import ParsedReference, RawReference, ReferenceType

YEAR_MIN = 1800
YEAR_MAX = 2100


class ParseFailure(ValueError):
    """No title-like segment could be isolated from a reference string."""


_MARKER = re.compile(r"^\s*(?:\[[^\]]{1,80}\]|\(\d{1,4}\)|\d{1,4}[.)](?=\s))\s*")
_URL = re.compile(r"(?:https?://|www\.)[^\s<>\"]+", re.IGNORECASE)
_DOI = re.compile(r"\b(10\.\d{4,9}/[^\s\"<>]+)", re.IGNORECASE)
_YEAR = re.compile(r"(?<![\d])(1[89]\d\d|20\d\d|2100)(?![\d])")
_QUOTED = re.compile(r"[\"“”‘’«»]{1,2}\s*([^\"“”«»]{4,}?)\s*[\"“”‘’«»]{1,2}")
# sentence breaks: a period after a word of 2+ chars (so "M." initials do not split),
# or a question/exclamation mark; must be followed by whitespace
_BREAK = re.compile(r"(?:(?<=[^\s.]{2})\.|(?<=[?!]))\s+")
_IN_VENUE = re.compile(r"^(?:in\s*:?\s*(?=[A-Z0-9\s(])|in\s+)", re.IGNORECASE)
_VENUE_STOP = re.compile(
    r",\s*(?:pp?\.|pages?\b|vol\.?|volume\b|no\.|number\b|\d|(?:jan|feb|mar|apr|may|jun|jul|aug|sep|oct|nov|dec)[a-z]*\.?\s+\d{4})",
    re.IGNORECASE,
)
_PARTICLES = {"van", "von", "de", "der", "den", "del", "della", "di", "da", "du", "la", "le", "dos", "das", "bin", "al", "el", "y", "st"}
_ET_AL = re.compile(r",?\s*\bet\.?\s*al\.?", re.IGNORECASE)
_INITIALS = re.compile(r"^(?:[A-Z][a-z]?\.?[\s-]*)+$")


def parse_reference(raw: RawReference) -> ParsedReference:
    """Best-effort structured fields for ``raw``; raises :class:`ParseFailure`."""
    return parse_reference_text(raw.text)


def parse_reference_text(text: str) -> ParsedReference:
    text = " ".join(text.split())
    text = _MARKER.sub("", text, count=1)

    urls = [u.rstrip(".,;)") for u in _URL.findall(text)]
    doi_match = _DOI.search(text)
    doi = doi_match.group(1).rstrip(".,;)") if doi_match else None
    body = _URL.sub(" ", text)
    if doi_match:
        body = body.replace(doi_match.group(1), " ")
        body = re.sub(r"\b(?:doi|DOI)\s*:?\s*(?=[\s.,]|$)", " ", body)
    body = " ".join(body.split()).strip(" ,;")

    year = _find_year(body)

    authors: tuple[str, ...] = ()
    title: str | None = None
    rest = ""

    quoted = _QUOTED.search(body)
    if quoted and _is_title_like(quoted.group(1)):
        title = quoted.group(1).strip().rstrip(",.")
        head = body[: quoted.start()].strip(" ,.")
        authors = _split_authors(_strip_year_paren(head)) if head else ()
        rest = body[quoted.end():].strip(" ,.")
    else:
        segments = [s.strip() for s in _BREAK.split(body) if s.strip()]
        idx = 0
        if segments and _looks_like_authors(_strip_year_paren(segments[0])) and len(segments) > 1:
            authors = _split_authors(_strip_year_paren(segments[0]))
            idx = 1
        while idx < len(segments):
            candidate = _strip_year_paren(segments[idx]).strip(" ,.")
            idx += 1
            if _is_title_like(candidate):
                title = candidate
                break
        rest = ". ".join(segments[idx:])
        if title is None and authors and urls:
            # "PyTorch. https://..." names a web resource, not an author
            title, authors = _strip_year_paren(segments[0]).strip(" ,."), ()

    if title is None:
        raise ParseFailure(f"no title-like segment in {text[:80]!r}")

    venue = _extract_venue(rest)
    url = urls[0] if urls else (f"https://doi.org/{doi}" if doi else None)
    return ParsedReference(
        title=title,
        authors=authors,
        year=year,
        venue=venue,
        url=url,
        doi=doi,
        reference_type=_guess_type(text, venue),
    )


def _find_year(body: str) -> int | None:
    years = [int(m.group(1)) for m in _YEAR.finditer(body)]
    years = [y for y in years if YEAR_MIN <= y <= YEAR_MAX]
    return years[-1] if years else None


def _strip_year_paren(segment: str) -> str:
    return re.sub(r"\(\s*(?:1[89]\d\d|20\d\d)[a-z]?\s*\)", "", segment).strip(" ,")


def _is_title_like(segment: str) -> bool:
    norm = normalize_title(segment)
    letters = sum(ch.isalpha() for ch in norm)
    if letters < 3:
        return False
    # a bare year/pages fragment is not a title
    return not re.fullmatch(r"[\d\s]*(?:pp|pages?)?[\d\s]*", norm)


def _name_tokens_ok(name: str) -> bool:
    tokens = name.replace(".", ". ").split()
    if not 1 <= len(tokens) <= 5:
        return False
    capitalised = 0
    for tok in tokens:
        bare = tok.strip(".,-'’")
        if not bare:
            continue
        if any(ch.isdigit() for ch in bare):
            return False
        if bare.lower() in _PARTICLES:
            continue
        if bare[0].isupper():
            capitalised += 1
        else:
            return False
    return capitalised >= 1


def _raw_author_parts(segment: str) -> list[str]:
    segment = _ET_AL.sub("", segment).strip(" ,")
    chunks = re.split(r"\s*;\s*|,?\s+and\s+|\s*&\s*|,\s*&\s*", segment)
    parts: list[str] = []
    for chunk in chunks:
        for piece in chunk.split(","):
            piece = piece.strip()
            if not piece:
                continue
            # "Smith, J." style: glue initials back onto the surname before them
            if parts and _INITIALS.match(piece) and " " not in parts[-1].strip():
                parts[-1] = f"{parts[-1]}, {piece}"
            else:
                parts.append(piece)
    return parts


def _looks_like_authors(segment: str) -> bool:
    if not segment or ":" in segment or len(segment) > 400:
        return False
    if _ET_AL.search(segment):
        return True
    parts = _raw_author_parts(segment)
    if not parts:
        return False
    return all(_name_tokens_ok(p.replace(",", " ")) for p in parts)


def _split_authors(segment: str) -> tuple[str, ...]:
    names = []
    for part in _raw_author_parts(segment):
        part = part.strip(" ,")
        # keep the period of a trailing initial ("Doe, A."), drop a sentence period
        if part.endswith(".") and len(part.split()[-1].strip(".,")) > 1:
            part = part.rstrip(".")
        names.append(part)
    return tuple(names)


def _extract_venue(rest: str) -> str | None:
    rest = rest.strip(" ,.")
    if not rest:
        return None
    rest = _IN_VENUE.sub("", rest, count=1).strip()
    stop = _VENUE_STOP.search(rest)
    venue = rest[: stop.start()] if stop else rest
    venue = _YEAR.sub("", venue) if re.fullmatch(r".*[,\s]\d{4}\s*", venue) else venue
    venue = venue.strip(" ,.;:")
    if not venue or not any(ch.isalpha() for ch in venue):
        return None
    return venue


def _guess_type(text: str, venue: str | None) -> ReferenceType:
    lowered = text.lower()
    if re.search(r"\b(?:ph\.?\s?d\.?|master'?s)?\s*(?:thesis|dissertation)\b", lowered):
        return ReferenceType.THESIS
    if re.search(r"lecture notes|\bseries\b", lowered):
        return ReferenceType.SERIES
    if venue is None and re.search(r"\b(?:press|publishers?|springer|wiley|elsevier)\b", lowered):
        return ReferenceType.MONOGRAPH
    if venue is not None:
        return ReferenceType.ARTICLE
    return ReferenceType.UNKNOWN


_SCHOLARLY_HOSTS = ("doi.org", "arxiv.org", "dl.acm.org", "ieeexplore", "openreview.net", "aclanthology", "proceedings.")


def detect_non_academic(ref: ParsedReference, raw: RawReference | None = None) -> bool:
    """True for URL-dominant references (websites, blogs, repositories).

    A URL must be present and the title/venue/year triple incomplete.
    DOI and preprint-server links count as scholarly, not as web sources.
    """
    urls: list[str] = []
    if ref.url:
        urls.append(ref.url)
    if raw is not None:
        urls.extend(_URL.findall(raw.text))
    urls = [u for u in urls if not any(h in u.lower() for h in _SCHOLARLY_HOSTS)]
    if not urls or ref.doi:
        return False
    return not (ref.title and ref.venue and ref.year)


def read_reference_lines(path: str | Path, paper_id: str | None = None) -> list[RawReference]:
    """Load a UTF-8 file holding one raw reference per line; ``#`` lines are skipped."""
    path = Path(path)
    paper_id = paper_id or path.stem
    with path.open(encoding="utf-8") as fh:
        return list(iter_reference_lines(fh, paper_id))


def iter_reference_lines(lines: Iterable[str], paper_id: str) -> Iterator[RawReference]:
    index = 0
    for line in lines:
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        yield RawReference(text=text, paper_id=paper_id, ref_index=index)
        index += 1
