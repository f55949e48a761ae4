"""Run configuration: INI file plus command-line overrides.

Example::

    [run]
    index = dblp.idx
    cache = cache.sqlite
    threshold = 0.9
    concurrency = 10
    retries = 2

    [provider:crossref]
    kind = academic
    endpoint = https://api.crossref.org/works
    query_param = query.bibliographic
    limit_param = rows

    [provider:serp]
    kind = websearch
    endpoint = https://serpapi.com/search
    api_key_env = SERPAPI_KEY
    auth_param = api_key

    [llm]
    endpoint = https://api.openai.com/v1/chat/completions
    model = gpt-4o-mini
    api_key_env = OPENAI_API_KEY

    [extraction]
    endpoint = http://localhost:8070/api/processReferences

API keys never live in the file: each section names the environment
variable that holds its key.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from refaudit.matching import DEFAULT_THRESHOLD


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    kind: str
    endpoint: str
    api_key_env: str | None = None
    auth_param: str | None = None
    query_param: str = "q"
    limit_param: str | None = "limit"
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if self.kind not in ("academic", "websearch"):
            raise ConfigError(f"provider {self.name}: kind must be 'academic' or 'websearch', got {self.kind!r}")
        if not self.endpoint:
            raise ConfigError(f"provider {self.name}: endpoint is required")


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str
    model: str
    api_key_env: str | None = None
    timeout: float = 60.0


@dataclass(frozen=True)
class ExtractionConfig:
    endpoint: str
    timeout: float = 120.0


@dataclass(frozen=True)
class RunConfig:
    input: Path | None = None
    index_path: Path | None = None
    cache_path: Path | None = None
    threshold: float = DEFAULT_THRESHOLD
    concurrency: int = 10
    retries: int = 2
    providers: tuple[ProviderConfig, ...] = ()
    llm: LlmConfig | None = None
    extraction: ExtractionConfig | None = None
    offline: bool = False
    output: Path = Path("results.csv")
    resume: bool = False
    progress_every: int = 50
    invalid_ttl_days: float = 30.0

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")
        if self.progress_every < 1:
            raise ConfigError("progress interval must be >= 1")

    @property
    def remote_providers(self) -> tuple[ProviderConfig, ...]:
        return () if self.offline else self.providers

    @property
    def remote_llm(self) -> LlmConfig | None:
        return None if self.offline else self.llm


@dataclass
class FileConfig:
    run: dict[str, str] = field(default_factory=dict)
    providers: tuple[ProviderConfig, ...] = ()
    llm: LlmConfig | None = None
    extraction: ExtractionConfig | None = None


def _float(section: configparser.SectionProxy, key: str, default: float) -> float:
    try:
        return section.getfloat(key, fallback=default)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: {exc}") from exc


def load_config(path: str | os.PathLike) -> FileConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc

    cfg = FileConfig()
    if parser.has_section("run"):
        cfg.run = dict(parser["run"])
    providers = []
    for name in parser.sections():
        if not name.startswith("provider:"):
            continue
        sec = parser[name]
        providers.append(
            ProviderConfig(
                name=name.split(":", 1)[1].strip(),
                kind=sec.get("kind", "academic"),
                endpoint=sec.get("endpoint", ""),
                api_key_env=sec.get("api_key_env") or None,
                auth_param=sec.get("auth_param") or None,
                query_param=sec.get("query_param", "q"),
                limit_param=sec.get("limit_param", "limit") or None,
                timeout=_float(sec, "timeout", 30.0),
            )
        )
    cfg.providers = tuple(providers)
    if parser.has_section("llm"):
        sec = parser["llm"]
        if not sec.get("endpoint") or not sec.get("model"):
            raise ConfigError("[llm] needs endpoint and model")
        cfg.llm = LlmConfig(sec["endpoint"], sec["model"], sec.get("api_key_env") or None, _float(sec, "timeout", 60.0))
    if parser.has_section("extraction"):
        sec = parser["extraction"]
        if not sec.get("endpoint"):
            raise ConfigError("[extraction] needs endpoint")
        cfg.extraction = ExtractionConfig(sec["endpoint"], _float(sec, "timeout", 120.0))
    return cfg
