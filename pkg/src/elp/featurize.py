"""Model inputs: composed text sequences, tf-idf vectors, encoder token ids.

Every model sees the same composed input: an ordered list of text
segments (query, then optionally the clarification pane, then optionally
the aggregated SERP titles or snippets). Classical models flatten the
segments into one document and consume tf-idf bag-of-words vectors;
sequence models consume token ids with a classification marker up front
and a separator after each segment.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .corpus import ClarificationRecord, Corpus
from .errors import BudgetTooSmall, EmptyCorpus, MissingSerp, UnsupportedCacheFormat

VOCAB_FORMAT_VERSION = 1

# Marker placed between individual answers inside the answers segment so
# answer boundaries survive aggregation. The word tokenizer and the
# pretrained-tokenizer adapter both map it to their separator id.
ANSWER_SEPARATOR = "[SEP]"


class InputSetting(Enum):
    """The six input compositions (the ablation axis)."""

    QUERY = "query"
    QUERY_PANE = "query+pane"
    QUERY_TITLES = "query+titles"
    QUERY_SNIPPETS = "query+snippets"
    QUERY_PANE_TITLES = "query+pane+titles"
    QUERY_PANE_SNIPPETS = "query+pane+snippets"

    @property
    def includes_pane(self) -> bool:
        return self in (
            InputSetting.QUERY_PANE,
            InputSetting.QUERY_PANE_TITLES,
            InputSetting.QUERY_PANE_SNIPPETS,
        )

    @property
    def serp_field(self) -> str | None:
        """'title' / 'snippet' when the setting includes SERP content."""
        if self in (InputSetting.QUERY_TITLES, InputSetting.QUERY_PANE_TITLES):
            return "title"
        if self in (InputSetting.QUERY_SNIPPETS, InputSetting.QUERY_PANE_SNIPPETS):
            return "snippet"
        return None

    @classmethod
    def parse(cls, text: str) -> "InputSetting":
        for setting in cls:
            if setting.value == text:
                return setting
        valid = ", ".join(s.value for s in cls)
        raise ValueError(f"unknown input setting {text!r} (valid: {valid})")


@dataclass(frozen=True, slots=True)
class ModelInput:
    """Composed text for one record under one setting."""

    segments: tuple[str, ...]
    setting: InputSetting
    max_results: int

    def joined_text(self) -> str:
        """Single document view (non-empty segments joined by one space)."""
        return " ".join(s for s in self.segments if s)


def compose_input(
    record: ClarificationRecord, setting: InputSetting, max_results: int = 10
) -> ModelInput:
    """Build the segment list for one record.

    Segment order is query, question, aggregated answers, aggregated SERP
    content. Answers are joined with ``[SEP]`` markers; the SERP segment
    is the first ``min(max_results, |results|)`` titles (or snippets)
    joined by single spaces.
    """
    if not (0 <= max_results <= 10):
        raise ValueError(f"max_results must be in [0, 10], got {max_results}")
    segments = [record.query]
    if setting.includes_pane:
        segments.append(record.question)
        segments.append(f" {ANSWER_SEPARATOR} ".join(record.answers))
    serp_field = setting.serp_field
    if serp_field is not None:
        if record.serp is None:
            raise MissingSerp(f"setting {setting.value} needs a SERP for {record.query!r}")
        texts = [getattr(r, serp_field) for r in record.serp.results[:max_results]]
        segments.append(" ".join(texts))
    return ModelInput(segments=tuple(segments), setting=setting, max_results=max_results)


# ---------------------------------------------------------------------------
# tf-idf bag of words for the classical models
# ---------------------------------------------------------------------------

_TOKEN_RE_LOWER = re.compile(r"[a-z0-9]+")
_TOKEN_RE_ANY = re.compile(r"[A-Za-z0-9]+")


def bow_tokens(text: str, lowercase: bool = True) -> list[str]:
    """Classical-model analyzer: lowercase, split on non-alphanumeric runs."""
    if lowercase:
        return _TOKEN_RE_LOWER.findall(text.lower())
    return _TOKEN_RE_ANY.findall(text)


@dataclass(frozen=True)
class VocabOptions:
    lowercase: bool = True
    min_df: int = 1
    max_features: int | None = None


@dataclass(frozen=True)
class Vocabulary:
    """Term -> dense index mapping plus the document frequencies it was fit with."""

    index: dict[str, int]
    df: dict[str, int]
    n_docs: int
    options: VocabOptions
    corpus_hash: str

    def __len__(self) -> int:
        return len(self.index)

    def idf(self, term: str) -> float:
        """Smoothed idf: ln((1 + N) / (1 + df)) + 1."""
        return float(np.log((1 + self.n_docs) / (1 + self.df[term])) + 1.0)


def fit_vocabulary_texts(docs: list[str], options: VocabOptions | None = None) -> Vocabulary:
    """Fit a vocabulary from raw documents (training text only).

    Terms below ``min_df`` are dropped. When ``max_features`` is set, terms
    are ranked by document frequency, ties broken by lexicographic order,
    and the top ``max_features`` survive. Indices are assigned in
    lexicographic term order, so the result is fully deterministic.
    """
    options = options or VocabOptions()
    if not docs:
        raise EmptyCorpus("cannot fit a vocabulary on zero documents")
    df: dict[str, int] = {}
    hasher = hashlib.sha256()
    for doc in docs:
        hasher.update(doc.encode("utf-8"))
        hasher.update(b"\x00")
        for term in set(bow_tokens(doc, options.lowercase)):
            df[term] = df.get(term, 0) + 1
    kept = [t for t, n in df.items() if n >= options.min_df]
    if options.max_features is not None and len(kept) > options.max_features:
        kept.sort(key=lambda t: (-df[t], t))
        kept = kept[: options.max_features]
    kept.sort()
    return Vocabulary(
        index={t: i for i, t in enumerate(kept)},
        df={t: df[t] for t in kept},
        n_docs=len(docs),
        options=options,
        corpus_hash=hasher.hexdigest(),
    )


def fit_vocabulary(
    corpus: Corpus,
    setting: InputSetting,
    options: VocabOptions | None = None,
    max_results: int = 10,
) -> Vocabulary:
    """Fit a vocabulary from the composed input text of every record."""
    if len(corpus) == 0:
        raise EmptyCorpus("cannot fit a vocabulary on an empty corpus")
    docs = [compose_input(r, setting, max_results).joined_text() for r in corpus]
    return fit_vocabulary_texts(docs, options)


@dataclass(frozen=True)
class BowVector:
    """L2-normalized sparse tf-idf vector."""

    indices: np.ndarray  # sorted, int32
    weights: np.ndarray  # float64
    size: int
    vocab_id: str

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.weights**2)))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.size, dtype=np.float64)
        dense[self.indices] = self.weights
        return dense


def transform_bow_text(text: str, vocab: Vocabulary) -> BowVector:
    """tf * idf with smoothed idf, then L2 normalization; OOV terms ignored."""
    counts: dict[int, float] = {}
    idf_cache: dict[int, float] = {}
    for term in bow_tokens(text, vocab.options.lowercase):
        idx = vocab.index.get(term)
        if idx is None:
            continue
        counts[idx] = counts.get(idx, 0.0) + 1.0
        if idx not in idf_cache:
            idf_cache[idx] = vocab.idf(term)
    indices = np.array(sorted(counts), dtype=np.int32)
    weights = np.array([counts[i] * idf_cache[i] for i in indices], dtype=np.float64)
    norm = np.sqrt(np.sum(weights**2))
    if norm > 0:
        weights = weights / norm
    return BowVector(indices=indices, weights=weights, size=len(vocab), vocab_id=vocab.corpus_hash)


def transform_bow(model_input: ModelInput, vocab: Vocabulary) -> BowVector:
    return transform_bow_text(model_input.joined_text(), vocab)


def stack_bow(vectors: list[BowVector]) -> sp.csr_matrix:
    """Stack BowVectors into a scipy CSR matrix (rows in list order)."""
    if not vectors:
        raise EmptyCorpus("cannot stack zero vectors")
    size = vectors[0].size
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    for i, v in enumerate(vectors):
        indptr[i + 1] = indptr[i] + len(v.indices)
    indices = np.concatenate([v.indices for v in vectors]) if vectors else np.array([])
    data = np.concatenate([v.weights for v in vectors]) if vectors else np.array([])
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), size))


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    """Versioned text artifact: one ``term<TAB>index<TAB>df`` line per term."""
    lines = [
        f"# vocabulary format_version={VOCAB_FORMAT_VERSION}",
        f"# n_docs={vocab.n_docs} lowercase={vocab.options.lowercase} "
        f"min_df={vocab.options.min_df} max_features={vocab.options.max_features}",
        f"# corpus_hash={vocab.corpus_hash}",
    ]
    for term in sorted(vocab.index, key=vocab.index.get):
        lines.append(f"{term}\t{vocab.index[term]}\t{vocab.df[term]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocabulary(path: str | Path) -> Vocabulary:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = dict(
        part.split("=", 1) for line in text[:3] for part in line.lstrip("# ").split()
        if "=" in part
    )
    if header.get("format_version") != str(VOCAB_FORMAT_VERSION):
        raise UnsupportedCacheFormat(
            f"{path}: vocabulary format_version {header.get('format_version')!r}"
        )
    index: dict[str, int] = {}
    df: dict[str, int] = {}
    for line in text[3:]:
        if not line.strip():
            continue
        term, idx, freq = line.split("\t")
        index[term] = int(idx)
        df[term] = int(freq)
    options = VocabOptions(
        lowercase=header["lowercase"] == "True",
        min_df=int(header["min_df"]),
        max_features=None if header["max_features"] == "None" else int(header["max_features"]),
    )
    return Vocabulary(
        index=index,
        df=df,
        n_docs=int(header["n_docs"]),
        options=options,
        corpus_hash=header["corpus_hash"],
    )


# ---------------------------------------------------------------------------
# token sequences for the sequence models
# ---------------------------------------------------------------------------


class WordTokenizer:
    """Whitespace word tokenizer with a corpus-built vocabulary.

    Ids 0-3 are reserved for [PAD], [UNK], [CLS], [SEP]; the literal
    token ``[SEP]`` in text (the answer separator) maps to the separator
    id. Out-of-vocabulary tokens map to [UNK].
    """

    PAD, UNK, CLS, SEP = 0, 1, 2, 3
    _SPECIALS = ("[pad]", "[unk]", "[cls]", "[sep]")

    def __init__(self, terms: list[str]):
        self.vocab: dict[str, int] = {t: i for i, t in enumerate(self._SPECIALS)}
        for term in terms:
            if term not in self.vocab:
                self.vocab[term] = len(self.vocab)

    @classmethod
    def fit_corpus(cls, corpus: Corpus) -> "WordTokenizer":
        """Vocabulary from every text field so any input setting works."""
        terms: set[str] = set()
        for rec in corpus:
            texts = [rec.query, rec.question, *rec.answers]
            if rec.serp is not None:
                for res in rec.serp.results:
                    texts.extend((res.title, res.snippet))
            for text in texts:
                terms.update(text.lower().split())
        terms.discard("[sep]")
        return cls(sorted(terms))

    def __len__(self) -> int:
        return len(self.vocab)

    @property
    def pad_id(self) -> int:
        return self.PAD

    @property
    def cls_id(self) -> int:
        return self.CLS

    @property
    def sep_id(self) -> int:
        return self.SEP

    def encode_segment(self, text: str) -> list[int]:
        return [self.vocab.get(tok, self.UNK) for tok in text.lower().split()]


def tokenize_for_encoder(model_input: ModelInput, tokenizer, budget: int = 512) -> list[int]:
    """Token ids: [CLS], then each non-empty segment followed by [SEP].

    Over-budget sequences are truncated from the end of the final segment
    first, then earlier segments right to left. The classification marker
    and at least one query token always survive; an empty segment
    contributes no tokens and no separator, so composing with zero SERP
    results matches the SERP-free setting exactly.
    """
    if budget < 2:
        raise BudgetTooSmall(f"budget {budget} cannot hold [CLS] plus one query token")
    seg_ids = [tokenizer.encode_segment(s) for s in model_input.segments]
    length = 1 + sum(len(s) + 1 for s in seg_ids if s)
    over = length - budget
    if over > 0:
        for i in range(len(seg_ids) - 1, 0, -1):
            if over <= 0:
                break
            take = min(over, len(seg_ids[i]))
            if take:
                del seg_ids[i][len(seg_ids[i]) - take :]
                over -= take
            if over > 0 and not seg_ids[i]:
                over -= 1  # the emptied segment's separator goes too
        query = seg_ids[0]
        keep_query_sep = True
        if over > 0:
            # only [CLS] + query (+ sep) remain: shrink the query, keep >= 1 token
            take = min(over, max(len(query) - 1, 0))
            if take:
                del query[len(query) - take :]
                over -= take
            if over > 0 and keep_query_sep and query:
                keep_query_sep = False
                over -= 1
        ids = [tokenizer.cls_id]
        if query:
            ids.extend(query)
            if keep_query_sep:
                ids.append(tokenizer.sep_id)
        for seg in seg_ids[1:]:
            if seg:
                ids.extend(seg)
                ids.append(tokenizer.sep_id)
        return ids
    ids = [tokenizer.cls_id]
    for seg in seg_ids:
        if seg:
            ids.extend(seg)
            ids.append(tokenizer.sep_id)
    return ids
