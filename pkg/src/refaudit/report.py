"""CSV export and import of verification results.

The file starts with a version comment line followed by a fixed 16-column
header.  Authors are JSON arrays; ``best_similarity`` has four decimals.
Fields that are not part of the schema (parsed URL/DOI/type, the matched
record's source and identifier) are not exported, so a round trip is exact
on :func:`csv_projection` of a result rather than the result itself.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
from collections.abc import Iterable, Iterator
from pathlib import Path
from typing import TextIO

from refaudit.index import IoFailure
from refaudit.model import (
    BiblioRecord,
    ConstraintViolation,
    InvalidKind,
    ParsedReference,
    RawReference,
    Source,
    Status,
    Strategy,
    Verdict,
    VerificationResult,
)

VERSION_LINE = "# refaudit-results v1"

HEADER = (
    "paper_id",
    "ref_index",
    "raw_text",
    "parsed_title",
    "parsed_authors",
    "parsed_year",
    "parsed_venue",
    "status",
    "invalid_kind",
    "diagnosing_strategy",
    "best_similarity",
    "matched_title",
    "matched_authors",
    "matched_year",
    "matched_venue",
    "notes",
)


class CsvFormatError(ValueError):
    """A results file does not follow the schema; ``row`` is the 1-based line number."""

    def __init__(self, message: str, row: int):
        super().__init__(f"row {row}: {message}")
        self.row = row


def _opt(value: object) -> str:
    return "" if value is None else str(value)


def _authors_cell(authors: tuple[str, ...]) -> str:
    return json.dumps(list(authors), ensure_ascii=False) if authors else ""


def result_to_row(result: VerificationResult) -> list[str]:
    raw, ref, m = result.raw, result.reference, result.matched
    return [
        raw.paper_id if raw else "",
        str(raw.ref_index) if raw else "",
        raw.text if raw else "",
        _opt(ref.title),
        _authors_cell(ref.authors),
        _opt(ref.year),
        _opt(ref.venue),
        result.status.value,
        result.verdict.invalid_kind.value if result.verdict.invalid_kind else "",
        result.diagnosing_strategy.value,
        f"{result.best_similarity:.4f}" if result.best_similarity is not None else "",
        m.title if m else "",
        _authors_cell(m.authors) if m else "",
        _opt(m.year) if m else "",
        _opt(m.venue) if m else "",
        result.notes,
    ]


def _source_for(strategy: Strategy) -> Source:
    # the matched record's origin is not exported; the diagnosing stage names it when it can
    try:
        return Source(strategy.value)
    except ValueError:
        return Source.CACHE


def csv_projection(result: VerificationResult) -> VerificationResult:
    """The part of ``result`` that survives a CSV round trip."""
    ref = result.reference
    projected_ref = ParsedReference(title=ref.title, authors=ref.authors, year=ref.year, venue=ref.venue)
    matched = result.matched
    if matched is not None:
        matched = dataclasses.replace(matched, source=_source_for(result.diagnosing_strategy), external_id=None)
    sim = result.best_similarity
    return dataclasses.replace(
        result,
        reference=projected_ref,
        matched=matched,
        best_similarity=float(f"{sim:.4f}") if sim is not None else None,
    )


def _parse_authors(cell: str, row: int) -> tuple[str, ...]:
    if not cell:
        return ()
    try:
        value = json.loads(cell)
    except ValueError as exc:
        raise CsvFormatError(f"authors cell is not a JSON array: {cell[:40]!r}", row) from exc
    if not isinstance(value, list) or not all(isinstance(a, str) for a in value):
        raise CsvFormatError("authors cell must be a JSON array of strings", row)
    return tuple(value)


def _parse_int(cell: str, field: str, row: int) -> int | None:
    if not cell:
        return None
    try:
        return int(cell)
    except ValueError as exc:
        raise CsvFormatError(f"{field} is not an integer: {cell!r}", row) from exc


def row_to_result(cells: list[str], row: int) -> VerificationResult:
    if len(cells) != len(HEADER):
        raise CsvFormatError(f"expected {len(HEADER)} columns, found {len(cells)}", row)
    rec = dict(zip(HEADER, cells))
    try:
        raw = None
        if rec["paper_id"] or rec["raw_text"]:
            index = _parse_int(rec["ref_index"], "ref_index", row)
            if index is None:
                raise CsvFormatError("ref_index is empty", row)
            raw = RawReference(text=rec["raw_text"], paper_id=rec["paper_id"], ref_index=index)
        ref = ParsedReference(
            title=rec["parsed_title"] or None,
            authors=_parse_authors(rec["parsed_authors"], row),
            year=_parse_int(rec["parsed_year"], "parsed_year", row),
            venue=rec["parsed_venue"] or None,
        )
        strategy = Strategy(rec["diagnosing_strategy"] or "None")
        verdict = Verdict(Status(rec["status"]), InvalidKind(rec["invalid_kind"]) if rec["invalid_kind"] else None)
        sim = float(rec["best_similarity"]) if rec["best_similarity"] else None
        matched = None
        if rec["matched_title"]:
            matched = BiblioRecord(
                title=rec["matched_title"],
                source=_source_for(strategy),
                authors=_parse_authors(rec["matched_authors"], row),
                year=_parse_int(rec["matched_year"], "matched_year", row),
                venue=rec["matched_venue"] or None,
            )
        return VerificationResult(
            reference=ref,
            verdict=verdict,
            best_similarity=sim,
            matched=matched,
            diagnosing_strategy=strategy,
            notes=rec["notes"],
            raw=raw,
        )
    except CsvFormatError:
        raise
    except (ValueError, ConstraintViolation) as exc:
        raise CsvFormatError(str(exc), row) from exc


def _writer(fh: TextIO) -> csv.writer:  # type: ignore[valid-type]
    return csv.writer(fh, lineterminator="\r\n")


def write_results(results: Iterable[VerificationResult], fh: TextIO) -> int:
    fh.write(VERSION_LINE + "\r\n")
    writer = _writer(fh)
    writer.writerow(HEADER)
    n = 0
    for result in results:
        writer.writerow(result_to_row(result))
        n += 1
    return n


def export_csv(results: Iterable[VerificationResult], out: str | os.PathLike) -> int:
    """Write ``results`` to ``out``; returns the number of data rows."""
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            return write_results(results, fh)
    except OSError as exc:
        raise IoFailure(f"cannot write {out}: {exc}") from exc


def _data_rows(fh: TextIO) -> Iterator[tuple[int, list[str]]]:
    first = fh.readline()
    line = 1
    if not first:
        raise CsvFormatError("file is empty", 1)
    if first.startswith("#"):
        if first.rstrip("\r\n") != VERSION_LINE:
            raise CsvFormatError(f"unsupported version line {first.strip()!r}", 1)
        rest = fh
    else:
        rest = io.StringIO(first + fh.read())  # type: ignore[assignment]
        line = 0
    reader = csv.reader(rest)
    try:
        header = next(reader)
    except StopIteration:
        raise CsvFormatError("missing header", line + 1) from None
    if tuple(header) != HEADER:
        raise CsvFormatError("header does not match the results schema", line + reader.line_num)
    try:
        prev = reader.line_num
        for cells in reader:
            # report the physical line where the record starts
            yield line + prev + 1, cells
            prev = reader.line_num
    except csv.Error as exc:
        raise CsvFormatError(str(exc), line + reader.line_num) from exc


def read_results(path: str | os.PathLike) -> list[VerificationResult]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return [row_to_result(cells, row) for row, cells in _data_rows(fh)]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise CsvFormatError(f"not UTF-8: {exc}", 1) from exc


def exported_keys(path: str | os.PathLike) -> set[tuple[str, int]]:
    """(paper_id, ref_index) pairs already present in a results file."""
    if not Path(path).exists() or Path(path).stat().st_size == 0:
        return set()
    return {r.raw.key for r in read_results(path) if r.raw is not None}


class CsvSink:
    """Append-only results writer used for incremental export.

    Each row is flushed as soon as it is written, so an interrupted run
    leaves a valid file that ``--resume`` can continue.
    """

    def __init__(self, path: str | os.PathLike, *, append: bool = False):
        self.path = Path(path)
        self.rows = 0
        fresh = not (append and self.path.exists() and self.path.stat().st_size > 0)
        try:
            self._fh = open(self.path, "w" if fresh else "a", encoding="utf-8", newline="")
        except OSError as exc:
            raise IoFailure(f"cannot write {self.path}: {exc}") from exc
        self._writer = _writer(self._fh)
        if fresh:
            self._fh.write(VERSION_LINE + "\r\n")
            self._writer.writerow(HEADER)
            self._fh.flush()

    def __call__(self, result: VerificationResult) -> None:
        self._writer.writerow(result_to_row(result))
        self._fh.flush()
        self.rows += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> CsvSink:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()
