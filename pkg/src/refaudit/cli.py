"""Command-line entry point.

Exit codes: 0 success (Invalid findings included), 1 usage or input error,
2 infrastructure failure (most references could not reach any source).
Progress goes to stderr; data goes to files.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import datetime as dt
import json
import logging
import random
import sys
from collections import defaultdict
from collections.abc import Sequence
from dataclasses import asdict
from pathlib import Path

from refaudit import analytics
from refaudit.cache import ResultCache, StorageFailure
from refaudit.cascade import CascadePolicy, Dependencies, prepare, run_batch
from refaudit.config import ConfigError, ExtractionConfig, RunConfig, load_config
from refaudit.index import IndexUnavailable, IoFailure, MalformedDump, build_index, open_index
from refaudit.matching import EmptyInput, MatchConfig, threshold_sweep
from refaudit.model import RawReference, Status, VerificationResult
from refaudit.parsing import read_reference_lines
from refaudit.remote import ConcurrencyLimiter, HttpSearchProvider, RetryPolicy
from refaudit.report import CsvFormatError, CsvSink, export_csv, exported_keys, read_results
from refaudit.services import (
    ChatCompletionsClient,
    ExtractionClient,
    MalformedServiceResponse,
    ServiceUnavailable,
    extract_references,
)

logger = logging.getLogger("refaudit")

EXIT_OK, EXIT_INPUT, EXIT_INFRA = 0, 1, 2
DOCUMENT_SUFFIXES = {".pdf"}
TEXT_SUFFIXES = {".txt", ".ref", ".refs"}


class InputError(Exception):
    pass


def _err(message: str) -> None:
    print(f"refaudit: {message}", file=sys.stderr)


# -- build-index -------------------------------------------------------------


def cmd_build_index(args: argparse.Namespace) -> int:
    try:
        with build_index(args.dump, args.out, min_similarity=args.min_similarity) as idx:
            count = idx.record_count
    except MalformedDump as exc:
        where = f" at line {exc.position[0]}, column {exc.position[1]}" if exc.position else ""
        _err(f"malformed dump{where}: {exc}")
        return EXIT_INPUT
    except IoFailure as exc:
        _err(str(exc))
        return EXIT_INPUT
    print(f"{count} records")
    return EXIT_OK


# -- verify ------------------------------------------------------------------


def collect_references(path: Path, extraction: ExtractionConfig | None, offline: bool) -> list[RawReference]:
    """Raw references from a directory, a reference-text file, or a document."""
    if not path.exists():
        raise InputError(f"no such input: {path}")
    files = sorted(p for p in path.iterdir() if p.is_file()) if path.is_dir() else [path]
    refs: list[RawReference] = []
    client = None
    try:
        for f in files:
            suffix = f.suffix.lower()
            if suffix in DOCUMENT_SUFFIXES:
                if offline or extraction is None:
                    raise InputError(f"{f.name}: documents need the extraction service (configure [extraction], not offline)")
                if client is None:
                    client = ExtractionClient(extraction.endpoint, timeout=extraction.timeout)
                refs.extend(extract_references(f.read_bytes(), client, doc_id=f.stem).references)
            elif suffix in TEXT_SUFFIXES or not path.is_dir():
                refs.extend(read_reference_lines(f))
    except (UnicodeDecodeError, OSError) as exc:
        raise InputError(f"cannot read input: {exc}") from exc
    finally:
        if client is not None:
            client.close()
    return refs


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    file_cfg = load_config(args.config) if args.config else None
    run = file_cfg.run if file_cfg else {}

    def pick(flag: object, key: str, cast: type, default: object) -> object:
        if flag is not None:
            return flag
        if key in run:
            try:
                return cast(run[key])
            except ValueError as exc:
                raise ConfigError(f"[run] {key}: {exc}") from exc
        return default

    index = pick(args.index, "index", Path, None)
    cache = pick(args.cache, "cache", Path, None)
    return RunConfig(
        input=Path(args.input),
        index_path=index,  # type: ignore[arg-type]
        cache_path=cache,  # type: ignore[arg-type]
        threshold=pick(args.threshold, "threshold", float, 0.9),  # type: ignore[arg-type]
        concurrency=pick(args.concurrency, "concurrency", int, 10),  # type: ignore[arg-type]
        retries=pick(args.retries, "retries", int, 2),  # type: ignore[arg-type]
        providers=file_cfg.providers if file_cfg else (),
        llm=file_cfg.llm if file_cfg else None,
        extraction=file_cfg.extraction if file_cfg else None,
        offline=args.offline,
        output=Path(args.output),
        resume=args.resume,
        progress_every=args.progress_every,
    )


async def _verify_async(
    cfg: RunConfig, items: list[tuple[RawReference, object]], skip: set[tuple[str, int]], sink: CsvSink
) -> list[VerificationResult]:
    index = open_index(cfg.index_path) if cfg.index_path else None
    cache = ResultCache(cfg.cache_path, invalid_ttl=dt.timedelta(days=cfg.invalid_ttl_days)) if cfg.cache_path else None
    providers = [
        HttpSearchProvider(
            p.name,
            p.kind,
            p.endpoint,
            api_key_env=p.api_key_env,
            auth_param=p.auth_param,
            query_param=p.query_param,
            limit_param=p.limit_param,
            timeout=p.timeout,
        )
        for p in cfg.remote_providers
    ]
    llm_cfg = cfg.remote_llm
    llm = ChatCompletionsClient(llm_cfg.endpoint, llm_cfg.model, api_key_env=llm_cfg.api_key_env, timeout=llm_cfg.timeout) if llm_cfg else None
    deps = Dependencies(
        cache=cache, index=index, providers=providers, llm=llm, limiter=ConcurrencyLimiter(cfg.concurrency)
    )
    policy = CascadePolicy(concurrency_limit=cfg.concurrency, retry=RetryPolicy(retries=cfg.retries))
    every = cfg.progress_every

    def progress(done: int, total: int) -> None:
        if done % every == 0 or done == total:
            print(f"[{done}/{total}] references verified", file=sys.stderr, flush=True)

    try:
        return await run_batch(
            items,  # type: ignore[arg-type]
            deps,
            policy,
            MatchConfig(threshold=cfg.threshold),
            skip=skip,
            sink=sink,
            progress=progress,
        )
    finally:
        for p in providers:
            await p.aclose()
        if llm is not None:
            await llm.aclose()
        if index is not None:
            index.close()
        if cache is not None:
            cache.close()


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        cfg = run_config_from_args(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INPUT
    try:
        assert cfg.input is not None
        raws = collect_references(cfg.input, cfg.extraction, cfg.offline)
    except InputError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except (ServiceUnavailable, MalformedServiceResponse) as exc:
        _err(f"extraction failed: {exc}")
        return EXIT_INFRA

    skip: set[tuple[str, int]] = set()
    if cfg.resume:
        try:
            skip = exported_keys(cfg.output)
        except CsvFormatError as exc:
            _err(f"cannot resume from {cfg.output}: {exc}")
            return EXIT_INPUT
    items = [(raw, prepare(raw)) for raw in raws]
    pending = sum(1 for raw in raws if raw.key not in skip)
    print(f"{len(raws)} references, {len(raws) - pending} already exported", file=sys.stderr)

    try:
        with CsvSink(cfg.output, append=cfg.resume) as sink:
            results = asyncio.run(_verify_async(cfg, items, skip, sink))
    except (IndexUnavailable, StorageFailure, IoFailure) as exc:
        _err(str(exc))
        return EXIT_INPUT

    counts = analytics.corpus_stats(results)
    print(
        f"valid={counts.valid} invalid={counts.invalid} non_academic={counts.non_academic} "
        f"parse_failures={counts.parse_failures} unverified={counts.unverified} -> {cfg.output}",
        file=sys.stderr,
    )
    unavailable = sum(1 for r in results if r.status is Status.UNVERIFIED and r.notes.startswith("AllSourcesUnavailable"))
    if results and unavailable * 2 > len(results):
        _err(f"{unavailable} of {len(results)} references could not reach any source")
        return EXIT_INFRA
    return EXIT_OK


# -- report ------------------------------------------------------------------


def read_group_spec(path: Path) -> list[analytics.GroupKey]:
    keys = []
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"paper_id", "venue", "year"} - set(reader.fieldnames or ())
            if missing:
                raise CsvFormatError(f"group spec lacks columns {sorted(missing)}", 1)
            for row in reader:
                try:
                    keys.append(analytics.GroupKey(row["venue"], int(row["year"]), row["paper_id"]))
                except (TypeError, ValueError) as exc:
                    raise CsvFormatError(f"bad year {row.get('year')!r}", reader.line_num) from exc
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return keys


def _write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        writer.writerows(rows)


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def cmd_report(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    try:
        results = read_results(args.results)
        keys = read_group_spec(Path(args.groups))
    except CsvFormatError as exc:
        _err(f"malformed CSV: {exc}")
        return EXIT_INPUT
    except IoFailure as exc:
        _err(str(exc))
        return EXIT_INPUT
    if not results:
        _err(f"{args.results} has no result rows")
        return EXIT_INPUT
    out.mkdir(parents=True, exist_ok=True)

    try:
        venue_rows = analytics.aggregate(results, keys)
        year_rows = analytics.per_year(results, keys)
    except analytics.MissingJoinKey as exc:
        _err(f"missing group key: {exc.args[0]}")
        return EXIT_INPUT
    table = [*venue_rows, analytics.total_row(venue_rows)]
    _write_table(
        out / "aggregate.csv",
        ("venue", "error_count", "ghost_count", "invalid_count", "papers_with_invalid", "papers", "rate_pct"),
        [(r.venue, r.error_count, r.ghost_count, r.invalid_count, r.papers_with_invalid, r.papers, _pct(r.rate)) for r in table],
    )

    summary: dict[str, object] = {}
    try:
        trend = analytics.temporal_trend(year_rows)
    except (analytics.InsufficientYears, analytics.EmptyDenominator) as exc:
        _err(f"temporal trend: {exc.__class__.__name__}: {exc}")
        summary["temporal_trend"] = {"error": exc.__class__.__name__, "message": str(exc)}
        trend = None
    _write_table(
        out / "temporal.csv",
        ("year", "papers", "papers_with_invalid", "rate_pct"),
        [(r.year, r.papers, r.papers_with_invalid, _pct(r.papers_with_invalid / r.papers if r.papers else 0.0)) for r in year_rows],
    )
    if trend is not None:
        summary["temporal_trend"] = {
            "prior_mean_pct": round(100 * trend.prior_mean, 4),
            "last_rate_pct": round(100 * trend.last_rate, 4),
            "delta_pct": round(100 * trend.delta, 2),
        }

    venue_of = {k.paper_id: k.venue for k in keys if k.paper_id}
    groups = analytics.repeated_invalid_groups(results, venue_of)
    _write_table(
        out / "repeated.csv",
        ("title", "paper_count", "venues"),
        [(g.title, g.paper_count, ";".join(g.venues)) for g in groups],
    )

    stats = analytics.corpus_stats(results)
    summary["corpus"] = asdict(stats)
    per_paper: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for r in results:
        if r.status in (Status.VALID, Status.INVALID) and r.raw is not None:
            per_paper[r.raw.paper_id][0] += 1
            per_paper[r.raw.paper_id][1] += r.status is Status.INVALID
    rates = [bad / n for n, bad in per_paper.values()]
    summary["ci95_binomial_pp"] = stats.ci95_margin
    summary["ci95_cluster_pp"] = 100 * analytics.ci95_cluster(rates) if len(rates) >= 2 else None
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)

    rate = f"{100 * stats.rate_invalid:.2f}%" if stats.rate_invalid is not None else "n/a"
    print(f"{len(results)} results, invalid rate {rate}; tables written to {out}", file=sys.stderr)
    return EXIT_OK


# -- calibrate ---------------------------------------------------------------


def read_scores(path: Path) -> list[float]:
    scores = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                value = float(text)
            except ValueError as exc:
                raise CsvFormatError(f"not a number: {text!r}", lineno) from exc
            if not 0.0 <= value <= 1.0:
                raise CsvFormatError(f"score {value} outside [0, 1]", lineno)
            scores.append(value)
    return scores


def parse_grid(spec: str) -> list[float]:
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    if ":" in spec:
        start, stop, step = (float(x) for x in spec.split(":"))
        if step <= 0 or stop < start:
            raise ValueError(f"bad grid {spec!r}")
        n = int(round((stop - start) / step))
        return [round(start + i * step, 10) for i in range(n + 1)]
    return [float(x) for x in spec.split(",") if x.strip()]


def cmd_calibrate(args: argparse.Namespace) -> int:
    try:
        grid = parse_grid(args.grid)
        rows = threshold_sweep(read_scores(args.valid_scores), read_scores(args.invalid_scores), grid)
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    header = ("threshold", "frac_valid_at_or_below", "frac_invalid_at_or_below")
    body = [(f"{r.threshold:.4f}", f"{r.frac_valid_at_or_below:.4f}", f"{r.frac_invalid_at_or_below:.4f}") for r in rows]
    if args.output == "-":
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
    else:
        _write_table(Path(args.output), header, body)
    return EXIT_OK


# -- audit -------------------------------------------------------------------


def cmd_audit(args: argparse.Namespace) -> int:
    try:
        results = read_results(args.results)
    except (CsvFormatError, IoFailure) as exc:
        _err(str(exc))
        return EXIT_INPUT
    pool = [r for r in results if r.status is Status.VALID]
    if not pool:
        _err("no Valid results to sample from")
        return EXIT_INPUT
    floor = analytics.PAPER_PARITY_FLOOR if args.paper_parity else 0
    try:
        n = analytics.audit_sample_size(args.confidence, args.margin, len(pool), floor=floor)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INPUT
    sample = random.Random(args.seed).sample(pool, n)
    export_csv(sample, args.output)
    print(f"sampled {n} of {len(pool)} Valid results -> {args.output}", file=sys.stderr)
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refaudit", description="Verify bibliography entries against bibliographic sources.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="build a local title index from a DBLP XML dump")
    p.add_argument("dump", help="dblp.xml or dblp.xml.gz")
    p.add_argument("out", help="index file to create")
    p.add_argument("--min-similarity", type=float, default=0.9, help="lowest similarity the index must recall")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("verify", help="verify every reference of the input")
    p.add_argument("input", help="directory, reference-text file (one per line) or PDF")
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--index", type=Path, help="local index built with build-index")
    p.add_argument("--cache", type=Path, help="result cache (created if missing)")
    p.add_argument("--threshold", type=float, help="similarity that must be exceeded for Valid (default 0.9)")
    p.add_argument("--concurrency", type=int, help="remote calls in flight (default 10)")
    p.add_argument("--retries", type=int, help="retries per remote call (default 2)")
    p.add_argument("--offline", action="store_true", help="use only the local index and cache")
    p.add_argument("--output", "-o", default="results.csv", help="results CSV")
    p.add_argument("--resume", action="store_true", help="skip references already in the output")
    p.add_argument("--progress-every", type=int, default=50, metavar="N", help="progress line every N references")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="per-venue, per-year and repeated-title tables")
    p.add_argument("results", help="results CSV from verify")
    p.add_argument("groups", help="CSV with paper_id,venue,year for every paper")
    p.add_argument("--out-dir", default="report", help="directory for the tables")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("calibrate", help="ECDF threshold sweep over two labeled score files")
    p.add_argument("valid_scores", type=Path)
    p.add_argument("invalid_scores", type=Path)
    p.add_argument("--grid", default="0.50:1.00:0.01", help="start:stop:step or comma list")
    p.add_argument("--output", "-o", default="-", help="sweep CSV (default stdout)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("audit", aliases=["verify-audit"], help="draw a random sample of Valid results for manual review")
    p.add_argument("results")
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--margin", type=float, default=0.05)
    p.add_argument("--paper-parity", action="store_true", help=f"sample at least {analytics.PAPER_PARITY_FLOOR}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", default="audit_sample.csv")
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
