"""Article corpus loading, validation, filtering, and thumbnail URL extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from datetime import datetime
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable

from .errors import CorpusError

MEDIA_LABELS = ("general", "fake")

# COVID-era topic keywords (deduplicated; source list repeats "corona").
COVID_KEYWORDS = (
    "coronavirus",
    "corona",
    "covid-19",
    "corona virus",
    "covid",
    "covid19",
    "sars-cov-2",
    "pandemic",
    "chinese virus",
    "chinesevirus",
)

_REQUIRED_FIELDS = ("id", "media", "media_label", "title", "article_url", "published_at")


def _check_timestamp(value: str) -> None:
    # datetime.fromisoformat in 3.10 rejects a trailing "Z"; accept it anyway.
    normalized = value[:-1] + "+00:00" if value.endswith("Z") else value
    try:
        datetime.fromisoformat(normalized)
    except ValueError:
        raise ValueError(f"published_at is not an ISO-8601 timestamp: {value!r}") from None


@dataclass(frozen=True)
class ArticleRecord:
    """One news article: identity, source, title, and thumbnail references."""

    id: str
    media: str
    media_label: str
    title: str
    article_url: str
    published_at: str
    thumbnail_url: str | None = None
    thumbnail_path: str | None = None
    has_face: bool | None = None
    body: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if not self.title.strip():
            raise ValueError(f"record {self.id!r}: title must be non-empty")
        if self.media_label not in MEDIA_LABELS:
            raise ValueError(
                f"record {self.id!r}: media_label must be one of {MEDIA_LABELS}, "
                f"got {self.media_label!r}"
            )
        if self.has_face is not None and not isinstance(self.has_face, bool):
            raise ValueError(f"record {self.id!r}: has_face must be a boolean")
        _check_timestamp(self.published_at)


@dataclass(frozen=True)
class CorpusFilter:
    """Keyword and face-flag filter settings.

    Keywords are normalized to lowercase and deduplicated on construction;
    empty entries are rejected.
    """

    keyword_list: tuple[str, ...]
    require_no_face: bool = False

    def __post_init__(self):
        normalized: list[str] = []
        seen: set[str] = set()
        for kw in self.keyword_list:
            kw = kw.lower()
            if not kw:
                raise ValueError("keyword entries must be non-empty")
            if kw not in seen:
                seen.add(kw)
                normalized.append(kw)
        object.__setattr__(self, "keyword_list", tuple(normalized))


_FIELD_NAMES = tuple(f.name for f in fields(ArticleRecord))


def load_corpus(path: str | Path) -> list[ArticleRecord]:
    """Read a newline-delimited JSON corpus, in file order.

    Raises :class:`CorpusError` naming the offending line for malformed
    JSON, the missing field for incomplete records, and the id for
    duplicates. Unknown fields are ignored.
    """
    records: list[ArticleRecord] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed record: {exc}") from None
            if not isinstance(raw, dict):
                raise CorpusError(f"{path}: line {lineno}: record is not an object")
            for name in _REQUIRED_FIELDS:
                if raw.get(name) is None:
                    raise CorpusError(f"{path}: line {lineno}: missing required field {name!r}")
            known = {k: v for k, v in raw.items() if k in _FIELD_NAMES}
            try:
                record = ArticleRecord(**known)
            except (ValueError, TypeError) as exc:
                raise CorpusError(f"{path}: line {lineno}: {exc}") from None
            if record.id in seen_ids:
                raise CorpusError(f"{path}: line {lineno}: duplicate id {record.id!r}")
            seen_ids.add(record.id)
            records.append(record)
    return records


def save_corpus(records: Iterable[ArticleRecord], path: str | Path) -> None:
    """Write records as newline-delimited JSON; None fields are omitted."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            row = {
                name: getattr(record, name)
                for name in _FIELD_NAMES
                if getattr(record, name) is not None
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


class _MetaImageParser(HTMLParser):
    """Collects the first thumbnail candidate per metadata convention."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.og_image: str | None = None
        self.twitter_image: str | None = None
        self.link_image: str | None = None

    def handle_starttag(self, tag, attrs):
        attr_map: dict[str, str] = {}
        for key, value in attrs:
            if key is None or value is None:
                continue
            key = key.lower()
            if key not in attr_map:
                attr_map[key] = value
        if tag == "meta":
            content = attr_map.get("content", "").strip()
            if not content:
                return
            if self.og_image is None and attr_map.get("property", "").strip().lower() == "og:image":
                self.og_image = content
            if self.twitter_image is None and attr_map.get("name", "").strip().lower() == "twitter:image":
                self.twitter_image = content
        elif tag == "link":
            rel_tokens = attr_map.get("rel", "").lower().split()
            href = attr_map.get("href", "").strip()
            if self.link_image is None and "image_src" in rel_tokens and href:
                self.link_image = href


def extract_thumbnail_url(html: str) -> str | None:
    """Pull the thumbnail URL out of article HTML metadata.

    Priority: og:image meta, then twitter:image meta, then an image_src
    link. Attribute matching is case-insensitive; relative URLs are
    returned as-is; malformed HTML yields None rather than an error.
    """
    parser = _MetaImageParser()
    try:
        parser.feed(html)
        parser.close()
    except Exception:
        pass  # keep whatever was collected before the parse failure
    return parser.og_image or parser.twitter_image or parser.link_image


def filter_by_keywords(
    records: Iterable[ArticleRecord], corpus_filter: CorpusFilter
) -> list[ArticleRecord]:
    """Keep records whose title or body contains at least one keyword.

    Matching is plain substring on case-folded text, so "covid" also
    matches "covid19". An empty keyword list keeps nothing.
    """
    kept = []
    for record in records:
        haystack = record.title.casefold()
        if record.body:
            haystack += "\n" + record.body.casefold()
        if any(kw in haystack for kw in corpus_filter.keyword_list):
            kept.append(record)
    return kept


def filter_by_face(records: Iterable[ArticleRecord]) -> list[ArticleRecord]:
    """Keep records whose thumbnail is known to contain no face.

    Records without a face flag are dropped: an unknown flag cannot
    guarantee the face-free property this filter exists to provide.
    """
    return [r for r in records if r.has_face is False]


def apply_filters(
    records: Iterable[ArticleRecord], corpus_filter: CorpusFilter
) -> list[ArticleRecord]:
    """Keyword filter followed by the optional face filter."""
    kept = filter_by_keywords(records, corpus_filter)
    if corpus_filter.require_no_face:
        kept = filter_by_face(kept)
    return kept
