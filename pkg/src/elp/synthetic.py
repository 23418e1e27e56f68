"""Synthetic corpora with a planted, independently recomputable signal.

The generator writes keyword tokens into a chosen text component and sets
``engagement = clamp(round(signal + noise), 0, 10)``. The planted map is a
plain function of the record text, so tests can recompute it without the
generator, and its variance has a closed form, which gives an analytic
ceiling on achievable R^2: Var(signal) / (Var(signal) + sigma^2).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import ClarificationRecord, Corpus, Impression, Serp, SerpResult
from .errors import InvalidSpec


@dataclass(frozen=True)
class KeywordSignal:
    """base + weight * (number of distinct keywords present in the component).

    With ``per_result=True`` keyword ``j`` can only be planted in result
    ``j``, so revealing the first k results reveals the first k keywords.
    """

    keywords: tuple[str, ...] = ("kwa", "kwb", "kwc", "kwd", "kwe")
    component: str = "title"  # "title" | "snippet" | "query"
    weight: float = 2.0
    base: float = 0.0
    per_result: bool = True

    def component_tokens(self, record: ClarificationRecord) -> list[str]:
        if self.component == "query":
            return record.query.split()
        if record.serp is None:
            return []
        texts = [getattr(r, self.component) for r in record.serp.results]
        return " ".join(texts).split()

    def value(self, record: ClarificationRecord) -> float:
        present = set(self.component_tokens(record))
        return self.base + self.weight * sum(1 for k in self.keywords if k in present)

    def variance(self, presence_prob: float = 0.5) -> float:
        """Analytic Var(signal) under independent keyword presence."""
        p = presence_prob
        return len(self.keywords) * self.weight**2 * p * (1 - p)


@dataclass(frozen=True)
class SyntheticSpec:
    n_records: int = 1000
    signal: KeywordSignal = field(default_factory=KeywordSignal)
    noise_sigma: float = 1.0
    seed: int = 0
    presence_prob: float = 0.5
    filler_vocab_size: int = 200
    n_results: int = 10
    title_len: int = 4
    snippet_len: int = 8
    query_len: tuple[int, int] = (2, 3)
    question_len: int = 6
    panes_per_query: int = 1

    def validate(self) -> None:
        checks = [
            (self.n_records >= 1, "n_records must be >= 1"),
            (self.noise_sigma >= 0, "noise_sigma must be >= 0"),
            (len(self.signal.keywords) > 0, "signal needs at least one keyword"),
            (
                len(set(self.signal.keywords)) == len(self.signal.keywords),
                "signal keywords must be unique",
            ),
            (
                self.signal.component in ("title", "snippet", "query"),
                f"unknown signal component {self.signal.component!r}",
            ),
            (math.isfinite(self.signal.weight), "signal weight must be finite"),
            (math.isfinite(self.signal.base), "signal base must be finite"),
            (0.0 <= self.presence_prob <= 1.0, "presence_prob must be in [0, 1]"),
            (10 <= self.filler_vocab_size <= 26**3, "filler vocabulary size out of range"),
            (1 <= self.n_results <= 10, "n_results must be in [1, 10]"),
            (self.title_len >= 1 and self.snippet_len >= 1, "result texts need >= 1 token"),
            (1 <= self.query_len[0] <= self.query_len[1], "bad query_len range"),
            (self.panes_per_query >= 1, "panes_per_query must be >= 1"),
        ]
        if self.signal.per_result and self.signal.component != "query":
            checks.append(
                (
                    len(self.signal.keywords) <= self.n_results,
                    "per-result signal needs n_results >= number of keywords",
                )
            )
        for ok, message in checks:
            if not ok:
                raise InvalidSpec(message)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["signal"]["keywords"] = list(self.signal.keywords)
        out["query_len"] = list(self.query_len)
        return out


def _clamp_round(value: float) -> int:
    return int(min(10, max(0, round(value))))


def _filler_terms(n: int) -> list[str]:
    # 'w' + base-26 letters: purely alphabetic so text heuristics treat
    # filler tokens like ordinary words
    width = 2 if n <= 26**2 else 3
    out = []
    for i in range(n):
        s = ""
        v = i
        for _ in range(width):
            s = chr(97 + v % 26) + s
            v //= 26
        out.append("w" + s)
    return out


def generate_synthetic(spec: SyntheticSpec) -> Corpus:
    """Deterministic synthetic corpus; engagement follows the planted map."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    fillers = np.array(_filler_terms(spec.filler_vocab_size))
    sig = spec.signal
    overlap = set(sig.keywords) & set(fillers)
    if overlap:
        raise InvalidSpec(f"signal keywords collide with filler tokens: {sorted(overlap)}")

    def words(k: int) -> list[str]:
        return list(rng.choice(fillers, size=k))

    records: list[ClarificationRecord] = []
    n_queries = math.ceil(spec.n_records / spec.panes_per_query)
    for qi in range(n_queries):
        query_tokens = words(int(rng.integers(spec.query_len[0], spec.query_len[1] + 1)))
        n_panes = min(spec.panes_per_query, spec.n_records - len(records))
        # keyword placement is decided once per query: panes share the SERP
        present = rng.random(len(sig.keywords)) < spec.presence_prob
        if sig.component == "query":
            query_tokens = query_tokens + [k for k, p in zip(sig.keywords, present) if p]
        results = []
        for j in range(spec.n_results):
            title = words(spec.title_len)
            snippet = words(spec.snippet_len)
            target = title if sig.component == "title" else snippet
            if sig.component != "query":
                if sig.per_result:
                    if j < len(sig.keywords) and present[j]:
                        target[0] = sig.keywords[j]
                else:
                    for k, keyword in enumerate(sig.keywords):
                        if present[k] and j == 0:
                            target.append(keyword)
            results.append(
                SerpResult(
                    title=" ".join(title),
                    url=f"https://example.test/{qi}/{j}",
                    snippet=" ".join(snippet),
                )
            )
        serp = Serp(results=tuple(results))
        query = " ".join(query_tokens)
        for _ in range(n_panes):
            n_answers = int(rng.integers(2, 6))
            record = ClarificationRecord(
                query=query,
                question=" ".join(words(spec.question_len)),
                answers=tuple(" ".join(words(2)) for _ in range(n_answers)),
                impression=Impression(rng.choice(["low", "medium", "high"])),
                engagement=0,  # placeholder, replaced below
                serp=serp,
            )
            signal = sig.value(record)
            noise = rng.normal(0.0, spec.noise_sigma) if spec.noise_sigma > 0 else 0.0
            records.append(
                ClarificationRecord(
                    query=record.query,
                    question=record.question,
                    answers=record.answers,
                    impression=record.impression,
                    engagement=_clamp_round(signal + noise),
                    serp=record.serp,
                )
            )
    provenance = {"synthetic": spec.to_dict()}
    return Corpus(records=tuple(records), provenance=provenance)
