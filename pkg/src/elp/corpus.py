"""Typed clarification corpus: parsing, joining, statistics, splits.

The on-disk inputs are a tab-separated click log (one clarification pane
per row, with engagement/impression labels) and a line-delimited JSON
SERP dump keyed by query. Both are noisy web logs, so malformed rows are
skipped and counted rather than fatal. A parsed :class:`Corpus` is
immutable and safe to share across threads; every operation here is pure
given its inputs plus an explicit seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import EmptyCorpus, MissingColumn, UnsupportedCacheFormat

log = logging.getLogger(__name__)

CACHE_FORMAT_VERSION = 1
SERP_MAX_RESULTS = 10


class Impression(str, Enum):
    """Categorical frequency with which a pane was shown to users."""

    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


@dataclass(frozen=True, slots=True)
class SerpResult:
    """One retrieved result: title and snippet may be empty, the url may not."""

    title: str
    url: str
    snippet: str

    def __post_init__(self) -> None:
        if not self.url:
            raise ValueError("SerpResult.url must be non-empty")


@dataclass(frozen=True, slots=True)
class Serp:
    """Ranked result list for one query, at most 10 entries."""

    results: tuple[SerpResult, ...]

    def __post_init__(self) -> None:
        if len(self.results) > SERP_MAX_RESULTS:
            raise ValueError(f"Serp holds at most {SERP_MAX_RESULTS} results")

    def __len__(self) -> int:
        return len(self.results)


@dataclass(frozen=True, slots=True)
class ClarificationRecord:
    """One query + clarification pane + engagement labels.

    ``engagement`` is an ordinal click-through bucket in [0, 10] and is
    kept as an integer; model predictions stay real-valued.
    """

    query: str
    question: str
    answers: tuple[str, ...]
    impression: Impression
    engagement: int
    answer_click_probs: tuple[float, ...] | None = None
    serp: Serp | None = None

    def __post_init__(self) -> None:
        if not (2 <= len(self.answers) <= 5):
            raise ValueError(f"need 2-5 answers, got {len(self.answers)}")
        if not (0 <= self.engagement <= 10):
            raise ValueError(f"engagement {self.engagement} outside [0, 10]")
        if not isinstance(self.impression, Impression):
            raise ValueError(f"bad impression {self.impression!r}")
        if self.answer_click_probs is not None:
            if len(self.answer_click_probs) != len(self.answers):
                raise ValueError("answer_click_probs must align with answers")
            if any(not (0.0 <= p <= 1.0) for p in self.answer_click_probs):
                raise ValueError("answer click probabilities outside [0, 1]")


@dataclass(frozen=True)
class Corpus:
    """Immutable record collection with provenance and a per-query pane index."""

    records: tuple[ClarificationRecord, ...]
    provenance: dict = field(default_factory=dict)
    multi_pane_index: dict[str, tuple[int, ...]] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        index: dict[str, list[int]] = {}
        for i, rec in enumerate(self.records):
            index.setdefault(rec.query, []).append(i)
        frozen = {q: tuple(ix) for q, ix in index.items()}
        object.__setattr__(self, "multi_pane_index", frozen)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ClarificationRecord]:
        return iter(self.records)

    def __getitem__(self, i: int) -> ClarificationRecord:
        return self.records[i]

    def engagements(self) -> np.ndarray:
        return np.array([r.engagement for r in self.records], dtype=np.float64)

    def content_hash(self) -> str:
        """SHA-256 over the serialized records (provenance excluded)."""
        h = hashlib.sha256()
        for rec in self.records:
            h.update(json.dumps(_record_to_dict(rec), sort_keys=True).encode("utf-8"))
            h.update(b"\x00")
        return h.hexdigest()


@dataclass(frozen=True, slots=True)
class FieldStats:
    """Five-number summary (whitespace-token lengths or counts)."""

    mean: float
    std: float
    median: float
    min: float
    max: float

    def __post_init__(self) -> None:
        if not (self.min <= self.median <= self.max):
            raise ValueError("min <= median <= max violated")
        if self.std < 0:
            raise ValueError("std must be >= 0")

    @classmethod
    def from_values(cls, values: np.ndarray) -> "FieldStats":
        values = np.asarray(values, dtype=np.float64)
        return cls(
            mean=float(values.mean()),
            std=float(values.std()),  # population std: 0 for a single record
            median=float(np.median(values)),
            min=float(values.min()),
            max=float(values.max()),
        )


@dataclass(frozen=True, slots=True)
class CorpusStats:
    """Length statistics over a corpus; SERP fields are None when no record has a SERP."""

    query_length: FieldStats
    question_length: FieldStats
    answers_per_query: FieldStats
    title_length: FieldStats | None
    snippet_length: FieldStats | None
    results_per_query: FieldStats | None

    def rows(self) -> list[tuple[str, FieldStats]]:
        named = [
            ("query_length", self.query_length),
            ("question_length", self.question_length),
            ("title_length", self.title_length),
            ("snippet_length", self.snippet_length),
            ("answers_per_query", self.answers_per_query),
            ("results_per_query", self.results_per_query),
        ]
        return [(name, st) for name, st in named if st is not None]


@dataclass(frozen=True)
class ClickLogColumns:
    """Column mapping for the tab-separated click log.

    Defaults mirror the public MIMICS-Click layout. ``answer_click_probs``
    may be None when the log carries no per-answer click probabilities.
    """

    query: str = "query"
    question: str = "question"
    answers: tuple[str, ...] = tuple(f"option_{i}" for i in range(1, 6))
    impression: str = "impression_level"
    engagement: str = "engagement_level"
    answer_click_probs: tuple[str, ...] | None = tuple(
        f"option_cctr_{i}" for i in range(1, 6)
    )


class SerpDump(Mapping):
    """Mapping query -> Serp, plus the count of skipped malformed lines."""

    def __init__(self, entries: dict[str, Serp], skipped: int, source: dict):
        self._entries = entries
        self.skipped = skipped
        self.source = source

    def __getitem__(self, query: str) -> Serp:
        return self._entries[query]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_engagement(token: str) -> int:
    value = float(token)
    if not value.is_integer():
        raise ValueError(f"engagement {token!r} is not an integer level")
    value = int(value)
    if not (0 <= value <= 10):
        raise ValueError(f"engagement {value} outside [0, 10]")
    return value


def parse_click_log(path: str | Path, columns: ClickLogColumns | None = None) -> Corpus:
    """Parse a tab-separated click log (header row required) into a Corpus.

    Rows with the wrong column count are rejected as malformed; rows with
    an engagement outside [0, 10], an unknown impression token, fewer than
    two non-empty answers, or an out-of-range click probability are
    rejected as invalid labels. Both rejection counts land in provenance.

    Raises MissingColumn when the mapping does not resolve against the
    header, and EmptyCorpus when no valid row survives.
    """
    path = Path(path)
    columns = columns or ClickLogColumns()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyCorpus(f"{path} is empty") from None
        col = {name: i for i, name in enumerate(header)}

        def _resolve(name: str) -> int:
            if name not in col:
                raise MissingColumn(f"column {name!r} not in header of {path}")
            return col[name]

        i_query = _resolve(columns.query)
        i_question = _resolve(columns.question)
        i_answers = [_resolve(c) for c in columns.answers]
        i_impression = _resolve(columns.impression)
        i_engagement = _resolve(columns.engagement)
        i_probs = None
        if columns.answer_click_probs is not None and all(
            c in col for c in columns.answer_click_probs
        ):
            i_probs = [col[c] for c in columns.answer_click_probs]

        records: list[ClarificationRecord] = []
        malformed = 0
        invalid = 0
        total = 0
        for row in reader:
            total += 1
            if len(row) != len(header):
                malformed += 1
                continue
            try:
                kept = [(j, row[i].strip()) for j, i in enumerate(i_answers) if row[i].strip()]
                answers = tuple(text for _, text in kept)
                probs = None
                if i_probs is not None and kept:
                    cells = [row[i_probs[j]].strip() for j, _ in kept]
                    if any(cells):
                        values = tuple(float(c) for c in cells)
                        probs = values
                record = ClarificationRecord(
                    query=row[i_query],
                    question=row[i_question],
                    answers=answers,
                    impression=Impression(row[i_impression].strip().lower()),
                    engagement=_parse_engagement(row[i_engagement]),
                    answer_click_probs=probs,
                )
            except ValueError:
                invalid += 1
                continue
            records.append(record)

    if not records:
        raise EmptyCorpus(f"no valid rows in {path}")
    provenance = {
        "sources": [{"path": str(path), "sha256": _sha256_file(path)}],
        "click_log": {"rows": total, "malformed_rows": malformed, "invalid_labels": invalid},
    }
    return Corpus(records=tuple(records), provenance=provenance)


def parse_serp_dump(path: str | Path) -> SerpDump:
    """Parse a line-delimited JSON SERP dump into a query -> Serp mapping.

    Each line is an object with a ``query`` string and a ``results`` list
    of ``{title, url, snippet}`` objects. Missing title/snippet fields
    become empty strings; results with no url are dropped; at most the
    first 10 results are kept, in dump order. Unparseable lines are
    skipped and counted. A repeated query keeps the last entry.
    """
    path = Path(path)
    entries: dict[str, Serp] = {}
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                query = obj["query"]
                raw = obj["results"]
                if not isinstance(query, str) or not query or not isinstance(raw, list):
                    raise ValueError("bad entry shape")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                skipped += 1
                continue
            results = []
            for item in raw:
                if not isinstance(item, dict):
                    continue
                url = item.get("url") or ""
                if not url:
                    continue
                results.append(
                    SerpResult(
                        title=item.get("title") or "",
                        url=url,
                        snippet=item.get("snippet") or "",
                    )
                )
                if len(results) == SERP_MAX_RESULTS:
                    break
            entries[query] = Serp(results=tuple(results))
    if skipped:
        log.warning("parse_serp_dump(%s): skipped %d malformed lines", path, skipped)
    return SerpDump(entries, skipped, {"path": str(path), "sha256": _sha256_file(path)})


def join(corpus: Corpus, serps: Mapping[str, Serp], case_fold: bool = False) -> Corpus:
    """Attach SERPs to records by exact query string (case-folded if asked).

    Unmatched records keep their SERP unset; this is not an error. Join
    statistics are recorded in provenance.
    """
    lookup: Mapping[str, Serp] = serps
    if case_fold:
        lookup = {q.casefold(): s for q, s in serps.items()}
    matched = 0
    records = []
    for rec in corpus.records:
        key = rec.query.casefold() if case_fold else rec.query
        serp = lookup.get(key)
        if serp is not None:
            matched += 1
            records.append(replace(rec, serp=serp))
        else:
            records.append(rec)
    provenance = dict(corpus.provenance)
    provenance["join"] = {
        "matched": matched,
        "unmatched": len(records) - matched,
        "case_fold": case_fold,
    }
    if isinstance(serps, SerpDump):
        provenance.setdefault("sources", [])
        provenance["sources"] = list(provenance["sources"]) + [serps.source]
    return Corpus(records=tuple(records), provenance=provenance)


def _token_count(text: str) -> int:
    return len(text.split())


def compute_stats(corpus: Corpus) -> CorpusStats:
    """Five-number summaries of text lengths, split on whitespace.

    Title and snippet lengths are computed per individual result across
    all records that carry a SERP.
    """
    if len(corpus) == 0:
        raise EmptyCorpus("compute_stats needs a non-empty corpus")
    query_len = [_token_count(r.query) for r in corpus]
    question_len = [_token_count(r.question) for r in corpus]
    n_answers = [len(r.answers) for r in corpus]
    title_len: list[int] = []
    snippet_len: list[int] = []
    n_results: list[int] = []
    for rec in corpus:
        if rec.serp is None:
            continue
        n_results.append(len(rec.serp))
        for res in rec.serp.results:
            title_len.append(_token_count(res.title))
            snippet_len.append(_token_count(res.snippet))
    return CorpusStats(
        query_length=FieldStats.from_values(np.array(query_len)),
        question_length=FieldStats.from_values(np.array(question_len)),
        answers_per_query=FieldStats.from_values(np.array(n_answers)),
        title_length=FieldStats.from_values(np.array(title_len)) if title_len else None,
        snippet_length=FieldStats.from_values(np.array(snippet_len)) if snippet_len else None,
        results_per_query=FieldStats.from_values(np.array(n_results)) if n_results else None,
    )


def filter_el_only(corpus: Corpus) -> Corpus:
    """Keep exactly the records with engagement > 0. Idempotent."""
    kept = tuple(r for r in corpus.records if r.engagement > 0)
    if not kept:
        raise EmptyCorpus("no records with engagement > 0")
    provenance = dict(corpus.provenance)
    provenance["filter"] = {
        "rule": "engagement>0",
        "kept": len(kept),
        "dropped": len(corpus) - len(kept),
    }
    return Corpus(records=kept, provenance=provenance)


def holdout_split(
    corpus: Corpus, test_fraction: float, seed: int
) -> tuple[Corpus, Corpus]:
    """Deterministic train/test partition; sizes off the exact fraction by <= 1.

    Every record lands in exactly one side; record order within each side
    follows the parent corpus.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(corpus)
    if n == 0:
        raise EmptyCorpus("cannot split an empty corpus")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(n * test_fraction))
    test_idx = set(perm[:n_test].tolist())
    train_records = tuple(corpus.records[i] for i in range(n) if i not in test_idx)
    test_records = tuple(corpus.records[i] for i in range(n) if i in test_idx)

    def _child(records: tuple[ClarificationRecord, ...], side: str) -> Corpus:
        provenance = dict(corpus.provenance)
        provenance["split"] = {
            "side": side,
            "test_fraction": test_fraction,
            "seed": seed,
            "parent_size": n,
        }
        return Corpus(records=records, provenance=provenance)

    return _child(train_records, "train"), _child(test_records, "test")


def _record_to_dict(rec: ClarificationRecord) -> dict:
    return {
        "query": rec.query,
        "question": rec.question,
        "answers": list(rec.answers),
        "impression": rec.impression.value,
        "engagement": rec.engagement,
        "answer_click_probs": (
            list(rec.answer_click_probs) if rec.answer_click_probs is not None else None
        ),
        "serp": (
            {
                "results": [
                    {"title": r.title, "url": r.url, "snippet": r.snippet}
                    for r in rec.serp.results
                ]
            }
            if rec.serp is not None
            else None
        ),
    }


def _record_from_dict(obj: dict) -> ClarificationRecord:
    serp = None
    if obj.get("serp") is not None:
        serp = Serp(
            results=tuple(
                SerpResult(title=r["title"], url=r["url"], snippet=r["snippet"])
                for r in obj["serp"]["results"]
            )
        )
    probs = obj.get("answer_click_probs")
    return ClarificationRecord(
        query=obj["query"],
        question=obj["question"],
        answers=tuple(obj["answers"]),
        impression=Impression(obj["impression"]),
        engagement=int(obj["engagement"]),
        answer_click_probs=tuple(probs) if probs is not None else None,
        serp=serp,
    )


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the versioned native cache (JSON). Round-trips exactly."""
    payload = {
        "format_version": CACHE_FORMAT_VERSION,
        "provenance": corpus.provenance,
        "records": [_record_to_dict(r) for r in corpus.records],
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False)


def load_corpus(path: str | Path) -> Corpus:
    """Read a native cache written by :func:`save_corpus`."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != CACHE_FORMAT_VERSION:
        raise UnsupportedCacheFormat(
            f"{path}: format_version {version!r}, expected {CACHE_FORMAT_VERSION}"
        )
    records = tuple(_record_from_dict(o) for o in payload["records"])
    return Corpus(records=records, provenance=payload.get("provenance", {}))
