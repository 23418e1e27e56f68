"""End-to-end experiment protocols.

Runners here wire the corpus, featurization, predictors, neural models
and metrics into the evaluation protocols: the main model comparison,
the input-composition ablation, bucketed performance analyses, the
result-count sweep, and clarification-pane re-ranking. Every runner is
reproducible from (spec, seeds): non-neural report tables are
byte-identical across re-runs, neural ones metric-identical on a single
device.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import neural, predictors
from .corpus import ClarificationRecord, Corpus, Serp, filter_el_only, holdout_split
from .errors import (
    EmptyCorpus,
    InvalidHyperparameter,
    MissingSerp,
    NoMultiPaneQueries,
)
from .featurize import InputSetting, VocabOptions, compose_input
from .metrics import (
    PaneScore,
    RankedPaneList,
    RegressionScores,
    SignificanceResult,
    group_comparison,
    ndcg_at_k,
    regression_scores,
    significance,
)
from .neural import EmbeddingSpec, EncoderSpec, TrainConfig
from .synthetic import KeywordSignal, SyntheticSpec, generate_synthetic  # noqa: F401

REPORT_FORMAT_VERSION = 1

CENTRAL_MODELS = ("mean", "median", "normal")
CLASSICAL_MODELS = ("linear_regression", "svr", "random_forest")
NEURAL_MODELS = ("bilstm", "encoder")
MODEL_ORDER = CENTRAL_MODELS + CLASSICAL_MODELS + NEURAL_MODELS

SETTING_ORDER = (
    InputSetting.QUERY,
    InputSetting.QUERY_PANE,
    InputSetting.QUERY_TITLES,
    InputSetting.QUERY_SNIPPETS,
    InputSetting.QUERY_PANE_TITLES,
    InputSetting.QUERY_PANE_SNIPPETS,
)

QUERY_LENGTH_BUCKETS = ("1", "2", "3", "4", "5+")
COVERAGE_GROUPS = ("all", "some", "none")


@dataclass(frozen=True)
class NeuralProfile:
    """How to build the sequence models (defaults are the tiny-random test profile)."""

    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    embedding: EmbeddingSpec = field(default_factory=EmbeddingSpec)
    bilstm_layers: int = 2
    bilstm_hidden: int = 64
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything an experiment run needs besides the corpus itself."""

    dataset: str = "full"  # "full" | "el-only"
    roster: tuple[str, ...] = CENTRAL_MODELS + CLASSICAL_MODELS
    settings: tuple[InputSetting, ...] = SETTING_ORDER
    setting: InputSetting = InputSetting.QUERY_PANE_SNIPPETS
    max_results: int = 10
    test_fraction: float = 0.2
    split_seed: int = 7
    train_seed: int = 0
    shuffle_seed: int = 13
    vocab: VocabOptions = field(default_factory=VocabOptions)
    model_params: dict = field(default_factory=dict)  # name -> constructor kwargs
    grids: dict | None = None  # name -> grid; None means predictors.DEFAULT_GRIDS
    use_grid_search: bool = False
    cv_folds: int = 5
    label_scale: float = 1.0
    significance_loss: str = "squared"  # "squared" | "absolute"
    alpha_main: float = 0.01
    alpha_ablation: float = 0.05
    ablation_model: str = "linear_regression"
    rerank_model: str = "oracle"
    ndcg_ks: tuple[int, ...] = (1, 2, 3, 5)
    neural: NeuralProfile = field(default_factory=NeuralProfile)
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.dataset not in ("full", "el-only"):
            raise ValueError(f"dataset must be 'full' or 'el-only', got {self.dataset!r}")
        if not self.roster:
            raise ValueError("roster must not be empty")
        for name in self.roster:
            if name not in MODEL_ORDER:
                raise ValueError(f"unknown model {name!r} in roster")
        if self.significance_loss not in ("squared", "absolute"):
            raise ValueError("significance_loss must be 'squared' or 'absolute'")

    def content_hash(self) -> str:
        payload = _jsonable(self)
        payload.pop("out_dir", None)  # output location does not change the experiment
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _jsonable(obj):
    if isinstance(obj, InputSetting):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _jsonable(getattr(obj, k)) for k in obj.__dataclass_fields__}
    return obj


# ---------------------------------------------------------------------------
# report tables
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.6f}"
    return str(value)


@dataclass
class ReportTable:
    """Tab-separated table with a metadata preamble; serializes byte-identically."""

    name: str
    metadata: dict[str, str]
    columns: tuple[str, ...]
    rows: list[tuple]

    def to_text(self) -> str:
        lines = [f"# report\t{self.name}", f"# format_version\t{REPORT_FORMAT_VERSION}"]
        for key in sorted(self.metadata):
            lines.append(f"# {key}\t{self.metadata[key]}")
        lines.append("\t".join(self.columns))
        for row in self.rows:
            lines.append("\t".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


# ---------------------------------------------------------------------------
# single (model, setting, max_results) evaluation cell
# ---------------------------------------------------------------------------


@dataclass
class EvaluationRow:
    """Scores plus per-sample errors for one (model, split, setting) run."""

    key: str
    scores: RegressionScores
    abs_errors: np.ndarray
    sq_errors: np.ndarray
    predictions: np.ndarray
    markers: dict[str, bool] = field(default_factory=dict)


def _eligible_for(corpus: Corpus, settings: Sequence[InputSetting]) -> tuple[Corpus, int]:
    """Drop records without a SERP when any setting needs one (identically
    across settings), returning the kept corpus and the excluded count."""
    if not any(s.serp_field for s in settings):
        return corpus, 0
    kept = tuple(r for r in corpus.records if r.serp is not None)
    if not kept:
        raise MissingSerp("every record lacks a SERP; join one first")
    if len(kept) == len(corpus):
        return corpus, 0
    provenance = dict(corpus.provenance)
    provenance["serp_filter"] = {"kept": len(kept), "dropped": len(corpus) - len(kept)}
    return Corpus(records=kept, provenance=provenance), len(corpus) - len(kept)


def _texts(corpus: Corpus, setting: InputSetting, max_results: int) -> list[str]:
    return [compose_input(r, setting, max_results).joined_text() for r in corpus]


def _classical_predictions(
    name, train_corpus, test_corpus, setting, max_results, spec
) -> np.ndarray:
    texts_train = _texts(train_corpus, setting, max_results)
    texts_test = _texts(test_corpus, setting, max_results)
    y_train = train_corpus.engagements() * spec.label_scale
    params = dict(spec.model_params.get(name, {}))
    base = {
        "lowercase": spec.vocab.lowercase,
        "min_df": spec.vocab.min_df,
        "max_features": spec.vocab.max_features,
    }
    grid = None
    if spec.use_grid_search:
        source = spec.grids if spec.grids is not None else predictors.DEFAULT_GRIDS
        grid = source.get(name)
    if grid:
        def factory(**candidate):
            merged = {**base, **params, **candidate}
            return predictors.make_predictor(name, **merged)

        model, _ = predictors.grid_search_cv(
            factory, grid, texts_train, y_train,
            folds=spec.cv_folds, scoring="r2", seed=spec.train_seed,
        )
    else:
        model = predictors.make_predictor(name, **{**base, **params})
        model.fit(texts_train, y_train, seed=spec.train_seed)
    return model.predict(texts_test)


def _baseline_predictions(name, train_corpus, test_corpus, setting, max_results, spec):
    y_train = train_corpus.engagements() * spec.label_scale
    model = predictors.make_predictor(name)
    model.fit(_texts(train_corpus, setting, max_results), y_train, seed=spec.train_seed)
    return model.predict(_texts(test_corpus, setting, max_results))


def _neural_predictions(name, train_corpus, test_corpus, setting, max_results, spec):
    profile = spec.neural
    if name == "encoder":
        model = neural.build_encoder_regressor(
            setting, encoder=profile.encoder, corpus=train_corpus, max_results=max_results
        )
    else:
        model = neural.build_bilstm(
            setting,
            embedding=profile.embedding,
            corpus=train_corpus,
            layers=profile.bilstm_layers,
            hidden_size=profile.bilstm_hidden,
            max_results=max_results,
        )
    config = replace(profile.train, seed=spec.train_seed)
    neural.train(model, train_corpus, config, label_scale=spec.label_scale)
    return neural.predict(model, test_corpus, batch_size=profile.train.batch_size)


def _run_single(
    name: str,
    train_corpus: Corpus,
    test_corpus: Corpus,
    setting: InputSetting,
    max_results: int,
    spec: ExperimentSpec,
    key: str | None = None,
) -> EvaluationRow:
    if name in CENTRAL_MODELS:
        pred = _baseline_predictions(name, train_corpus, test_corpus, setting, max_results, spec)
    elif name in CLASSICAL_MODELS:
        pred = _classical_predictions(name, train_corpus, test_corpus, setting, max_results, spec)
    elif name in NEURAL_MODELS:
        pred = _neural_predictions(name, train_corpus, test_corpus, setting, max_results, spec)
    else:
        raise InvalidHyperparameter(f"unknown model {name!r}")
    y_test = test_corpus.engagements() * spec.label_scale
    err = y_test - pred
    return EvaluationRow(
        key=key or name,
        scores=regression_scores(y_test, pred),
        abs_errors=np.abs(err),
        sq_errors=err**2,
        predictions=pred,
    )


def _loss(row: EvaluationRow, spec: ExperimentSpec) -> np.ndarray:
    return row.sq_errors if spec.significance_loss == "squared" else row.abs_errors


def _beats(row: EvaluationRow, others: list[EvaluationRow], spec, alpha) -> bool:
    """True when the row's loss is significantly below every other row's."""
    if not others:
        return False
    for other in others:
        a, b = _loss(row, spec), _loss(other, spec)
        if a.mean() >= b.mean():
            return False
        if significance(a, b).p_value >= alpha:
            return False
    return True


# ---------------------------------------------------------------------------
# main comparison
# ---------------------------------------------------------------------------


@dataclass
class ComparisonResult:
    spec_hash: str
    corpus_hash: str
    dataset: str
    setting: InputSetting
    n_train: int
    n_test: int
    excluded_missing_serp: int
    rows: list[EvaluationRow]

    def to_table(self) -> ReportTable:
        columns = ("model", "mae", "mse", "r2", "n", "sig_vs_central", "sig_vs_classical")
        rows = []
        for row in self.rows:
            s = row.scores
            rows.append(
                (
                    row.key, s.mae, s.mse, s.r2, s.n,
                    "yes" if row.markers.get("beats_central") else "no",
                    "yes" if row.markers.get("beats_classical") else "no",
                )
            )
        return ReportTable(
            name="main_comparison",
            metadata={
                "spec_hash": self.spec_hash,
                "corpus_hash": self.corpus_hash,
                "dataset": self.dataset,
                "setting": self.setting.value,
                "n_train": str(self.n_train),
                "n_test": str(self.n_test),
                "excluded_missing_serp": str(self.excluded_missing_serp),
            },
            columns=columns,
            rows=rows,
        )


def _select_dataset(corpus: Corpus, spec: ExperimentSpec) -> Corpus:
    return filter_el_only(corpus) if spec.dataset == "el-only" else corpus


def run_main_comparison(corpus: Corpus, spec: ExperimentSpec) -> ComparisonResult:
    """Fit every roster model on one shared split and score it on the test side.

    Rows come out in the canonical roster order (central tendency, then
    classical ML, then sequence models). Row markers say whether the model
    significantly improves on every central-tendency model
    (``beats_central``) and every classical model (``beats_classical``)
    in the roster, by paired t-test on per-sample losses.
    """
    data = _select_dataset(corpus, spec)
    eligible, excluded = _eligible_for(data, [spec.setting])
    train_corpus, test_corpus = holdout_split(eligible, spec.test_fraction, spec.split_seed)
    ordered = sorted(spec.roster, key=MODEL_ORDER.index)
    rows = [
        _run_single(name, train_corpus, test_corpus, spec.setting, spec.max_results, spec)
        for name in ordered
    ]
    by_name = {r.key: r for r in rows}
    central = [by_name[n] for n in CENTRAL_MODELS if n in by_name]
    classical = [by_name[n] for n in CLASSICAL_MODELS if n in by_name]
    for row in rows:
        others_central = [r for r in central if r is not row]
        others_classical = [r for r in classical if r is not row]
        row.markers["beats_central"] = _beats(row, others_central, spec, spec.alpha_main)
        row.markers["beats_classical"] = _beats(row, others_classical, spec, spec.alpha_main)
    return ComparisonResult(
        spec_hash=spec.content_hash(),
        corpus_hash=corpus.content_hash(),
        dataset=spec.dataset,
        setting=spec.setting,
        n_train=len(train_corpus),
        n_test=len(test_corpus),
        excluded_missing_serp=excluded,
        rows=rows,
    )


# ---------------------------------------------------------------------------
# input-composition ablation and the result-count sweep
# ---------------------------------------------------------------------------


@dataclass
class AblationResult:
    spec_hash: str
    corpus_hash: str
    dataset: str
    model: str
    n_train: int
    n_test: int
    excluded_missing_serp: int
    rows: list[EvaluationRow]  # keyed by setting value

    def row_for(self, setting: InputSetting) -> EvaluationRow:
        for row in self.rows:
            if row.key == setting.value:
                return row
        raise KeyError(setting.value)

    def to_table(self) -> ReportTable:
        columns = ("setting", "mae", "mse", "r2", "n", "sig_vs_query", "sig_vs_query_pane")
        rows = []
        for row in self.rows:
            s = row.scores
            rows.append(
                (
                    row.key, s.mae, s.mse, s.r2, s.n,
                    "yes" if row.markers.get("beats_query") else "no",
                    "yes" if row.markers.get("beats_query_pane") else "no",
                )
            )
        return ReportTable(
            name="ablation",
            metadata={
                "spec_hash": self.spec_hash,
                "corpus_hash": self.corpus_hash,
                "dataset": self.dataset,
                "model": self.model,
                "n_train": str(self.n_train),
                "n_test": str(self.n_test),
                "excluded_missing_serp": str(self.excluded_missing_serp),
            },
            columns=columns,
            rows=rows,
        )


def run_ablation(corpus: Corpus, spec: ExperimentSpec) -> AblationResult:
    """One model recipe, every requested input setting, identical split.

    Records without a SERP are excluded identically across settings and
    counted. Markers test each setting against the query-only and
    query+pane rows (when present) at ``alpha_ablation``.
    """
    data = _select_dataset(corpus, spec)
    eligible, excluded = _eligible_for(data, spec.settings)
    train_corpus, test_corpus = holdout_split(eligible, spec.test_fraction, spec.split_seed)
    ordered = [s for s in SETTING_ORDER if s in spec.settings]
    rows = [
        _run_single(
            spec.ablation_model, train_corpus, test_corpus, s, spec.max_results, spec,
            key=s.value,
        )
        for s in ordered
    ]
    by_key = {r.key: r for r in rows}
    query_row = by_key.get(InputSetting.QUERY.value)
    pane_row = by_key.get(InputSetting.QUERY_PANE.value)
    for row in rows:
        row.markers["beats_query"] = (
            query_row is not None
            and row is not query_row
            and _beats(row, [query_row], spec, spec.alpha_ablation)
        )
        row.markers["beats_query_pane"] = (
            pane_row is not None
            and row is not pane_row
            and _beats(row, [pane_row], spec, spec.alpha_ablation)
        )
    return AblationResult(
        spec_hash=spec.content_hash(),
        corpus_hash=corpus.content_hash(),
        dataset=spec.dataset,
        model=spec.ablation_model,
        n_train=len(train_corpus),
        n_test=len(test_corpus),
        excluded_missing_serp=excluded,
        rows=rows,
    )


@dataclass
class SweepResult:
    spec_hash: str
    corpus_hash: str
    model: str
    mode: str  # "retrain" | "recompose"
    cells: dict[tuple[str, int], EvaluationRow]

    def series(self, setting: InputSetting) -> list[tuple[int, float]]:
        pairs = [
            (count, row.scores.r2)
            for (key, count), row in self.cells.items()
            if key == setting.value
        ]
        return sorted(pairs)

    def to_table(self) -> ReportTable:
        columns = ("setting", "max_results", "mae", "mse", "r2", "n")
        rows = []
        for (key, count) in sorted(self.cells, key=lambda kc: (kc[0], kc[1])):
            s = self.cells[(key, count)].scores
            rows.append((key, count, s.mae, s.mse, s.r2, s.n))
        return ReportTable(
            name="result_count_sweep",
            metadata={
                "spec_hash": self.spec_hash,
                "corpus_hash": self.corpus_hash,
                "model": self.model,
                "mode": self.mode,
            },
            columns=columns,
            rows=rows,
        )


def sweep_result_count(
    corpus: Corpus,
    spec: ExperimentSpec,
    counts: Sequence[int] = tuple(range(1, 11)),
    settings: Sequence[InputSetting] = (
        InputSetting.QUERY_PANE_TITLES,
        InputSetting.QUERY_PANE_SNIPPETS,
    ),
    retrain: bool = True,
) -> SweepResult:
    """Performance as a function of how many results the model may see.

    With ``retrain`` (the default) every count is a full evaluation cell,
    so the count-10 cell matches the ablation table's corresponding
    setting exactly under the same seeds. The recompose mode trains once
    at the maximum count and only re-composes the test inputs.
    """
    data = _select_dataset(corpus, spec)
    eligible, excluded = _eligible_for(data, spec.settings)
    train_corpus, test_corpus = holdout_split(eligible, spec.test_fraction, spec.split_seed)
    cells: dict[tuple[str, int], EvaluationRow] = {}
    for setting in settings:
        if retrain:
            for count in counts:
                cells[(setting.value, count)] = _run_single(
                    spec.ablation_model, train_corpus, test_corpus, setting, count, spec,
                    key=setting.value,
                )
        else:
            top = max(counts)
            texts_train = _texts(train_corpus, setting, top)
            y_train = train_corpus.engagements() * spec.label_scale
            y_test = test_corpus.engagements() * spec.label_scale
            base = {
                "lowercase": spec.vocab.lowercase,
                "min_df": spec.vocab.min_df,
                "max_features": spec.vocab.max_features,
            }
            model = predictors.make_predictor(
                spec.ablation_model, **{**base, **spec.model_params.get(spec.ablation_model, {})}
            )
            model.fit(texts_train, y_train, seed=spec.train_seed)
            for count in counts:
                pred = model.predict(_texts(test_corpus, setting, count))
                err = y_test - pred
                cells[(setting.value, count)] = EvaluationRow(
                    key=setting.value,
                    scores=regression_scores(y_test, pred),
                    abs_errors=np.abs(err),
                    sq_errors=err**2,
                    predictions=pred,
                )
    return SweepResult(
        spec_hash=spec.content_hash(),
        corpus_hash=corpus.content_hash(),
        model=spec.ablation_model,
        mode="retrain" if retrain else "recompose",
        cells=cells,
    )


# ---------------------------------------------------------------------------
# bucketed analyses
# ---------------------------------------------------------------------------


@dataclass
class BucketResult:
    key: str
    n: int
    mean_engagement: float  # raw 0-10 scale; NaN for an empty bucket
    scores: RegressionScores | None


@dataclass
class BucketComparison:
    key_a: str
    key_b: str
    result: SignificanceResult


@dataclass
class AnalysisBucketReport:
    axis: str
    buckets: list[BucketResult]
    comparisons: list[BucketComparison]
    excluded: int = 0  # records with an undefined bucket key (diversity only)

    def to_table(self) -> ReportTable:
        columns = ("bucket", "n", "mean_engagement", "mae", "mse", "r2")
        rows = []
        for b in self.buckets:
            s = b.scores
            rows.append(
                (
                    b.key, b.n, b.mean_engagement,
                    s.mae if s else float("nan"),
                    s.mse if s else float("nan"),
                    s.r2 if s else float("nan"),
                )
            )
        return ReportTable(
            name=f"analysis_{self.axis}",
            metadata={"axis": self.axis, "excluded": str(self.excluded)},
            columns=columns,
            rows=rows,
        )

    def comparisons_table(self) -> ReportTable:
        columns = ("bucket_a", "bucket_b", "mean_a", "mean_b", "statistic", "p_value")
        rows = []
        for c in self.comparisons:
            means = c.result.group_means or (float("nan"), float("nan"))
            rows.append((c.key_a, c.key_b, means[0], means[1], c.result.statistic, c.result.p_value))
        return ReportTable(
            name=f"analysis_{self.axis}_comparisons",
            metadata={"axis": self.axis},
            columns=columns,
            rows=rows,
        )


def answer_coverage_group(record: ClarificationRecord) -> str:
    """'all' / 'some' / 'none': case-folded substring match of each answer
    within any single result's title + snippet."""
    if record.serp is None:
        raise MissingSerp(f"coverage needs a SERP for {record.query!r}")
    haystacks = [f"{r.title} {r.snippet}".casefold() for r in record.serp.results]
    covered = [
        any(ans.casefold() in hay for hay in haystacks) for ans in record.answers
    ]
    if all(covered):
        return "all"
    if not any(covered):
        return "none"
    return "some"


_NOUN_STOPLIST = frozenset(
    """a an the and or but if nor so than then as of in on at to for with by from
    into over under about between through during before after above below up down
    out off again further once here there when where why how all any both each few
    more most other some such only own same very just not no is are was were be
    been being am do does did have has had will would can could should may might
    must shall this that these those it its he she they them him his her their
    theirs you your yours we us our ours i me my mine who whom whose which what
    while because until although though since unless""".split()
)


def default_noun_tagger(tokens: Sequence[str]) -> list[bool]:
    """Approximate noun mask: open-class alphabetic tokens that are not in
    a closed-class stoplist and do not carry an adverb suffix. A real
    part-of-speech tagger can be plugged in instead."""
    out = []
    for tok in tokens:
        t = tok.lower()
        is_noun = t.isalpha() and t not in _NOUN_STOPLIST and not t.endswith("ly")
        out.append(is_noun)
    return out


def _stem(token: str) -> str:
    """Deterministic plural stripping (sses->ss, ies->i, s->'')."""
    if token.endswith("sses"):
        return token[:-2]
    if token.endswith("ies"):
        return token[:-3] + "i"
    if token.endswith("ss"):
        return token
    if token.endswith("s") and len(token) > 1:
        return token[:-1]
    return token


_WORD_RE = re.compile(r"[a-z0-9]+")


def unique_noun_ratio(
    serp: Serp, tagger: Callable[[Sequence[str]], Sequence[bool]] | None = None
) -> float:
    """Unique stemmed nouns / total nouns over all snippets; NaN when the
    snippets contain no nouns."""
    tagger = tagger or default_noun_tagger
    tokens = _WORD_RE.findall(" ".join(r.snippet for r in serp.results).lower())
    if not tokens:
        return float("nan")
    mask = tagger(tokens)
    nouns = [_stem(t) for t, m in zip(tokens, mask) if m]
    if not nouns:
        return float("nan")
    return len(set(nouns)) / len(nouns)


def _bucket_scores(y, pred, idx) -> RegressionScores | None:
    if len(idx) == 0 or pred is None:
        return None
    return regression_scores(y[idx], pred[idx])


def analyze_by_bucket(
    predictions: np.ndarray | None,
    records: Sequence[ClarificationRecord],
    axis: str,
    label_scale: float = 1.0,
    tagger: Callable[[Sequence[str]], Sequence[bool]] | None = None,
) -> AnalysisBucketReport:
    """Partition records along one axis and score or compare the buckets.

    ``impression`` and ``query_length`` report per-bucket regression
    scores (``predictions`` required). ``coverage`` and ``diversity``
    are label analyses: per-bucket mean engagement plus pairwise Welch
    comparisons over raw engagement; predictions may be None. Empty
    buckets are reported with n=0, never fatal.
    """
    records = list(records)
    if not records:
        raise EmptyCorpus("nothing to analyze")
    raw_y = np.array([r.engagement for r in records], dtype=np.float64)
    y = raw_y * label_scale
    if predictions is not None:
        predictions = np.asarray(predictions, dtype=np.float64)
        if len(predictions) != len(records):
            raise ValueError("predictions must align with records")
    excluded = 0

    if axis == "impression":
        keys = ("low", "medium", "high")
        assign = [r.impression.value for r in records]
    elif axis == "query_length":
        keys = QUERY_LENGTH_BUCKETS
        assign = []
        for r in records:
            n = len(r.query.split())
            assign.append("5+" if n >= 5 else str(n))
    elif axis == "coverage":
        keys = COVERAGE_GROUPS
        assign = [answer_coverage_group(r) for r in records]
    elif axis == "diversity":
        keys = tuple(f"({i / 10:.1f},{(i + 1) / 10:.1f}]" for i in range(10))
        assign = []
        for r in records:
            if r.serp is None:
                raise MissingSerp(f"diversity needs a SERP for {r.query!r}")
            ratio = unique_noun_ratio(r.serp, tagger)
            if math.isnan(ratio):
                assign.append(None)
                excluded += 1
                continue
            i = min(9, max(0, int(math.ceil(ratio * 10) - 1)))
            assign.append(keys[i])
    else:
        raise ValueError(f"unknown analysis axis {axis!r}")

    index: dict[str, np.ndarray] = {
        key: np.array([i for i, a in enumerate(assign) if a == key], dtype=np.int64)
        for key in keys
    }
    buckets = [
        BucketResult(
            key=key,
            n=len(idx),
            mean_engagement=float(raw_y[idx].mean()) if len(idx) else float("nan"),
            scores=_bucket_scores(y, predictions, idx),
        )
        for key, idx in index.items()
    ]
    comparisons = []
    if axis in ("coverage", "diversity"):
        nonempty = [k for k in keys if len(index[k]) > 0]
        for i, key_a in enumerate(nonempty):
            for key_b in nonempty[i + 1 :]:
                comparisons.append(
                    BucketComparison(
                        key_a, key_b,
                        group_comparison(raw_y[index[key_a]], raw_y[index[key_b]]),
                    )
                )
    return AnalysisBucketReport(
        axis=axis, buckets=buckets, comparisons=comparisons, excluded=excluded
    )


# ---------------------------------------------------------------------------
# clarification pane re-ranking
# ---------------------------------------------------------------------------


@dataclass
class RerankResult:
    spec_hash: str
    corpus_hash: str
    scorer: str
    n_queries: int
    rows: dict[str, dict[int, float]]  # method -> k -> ndcg

    def to_table(self) -> ReportTable:
        ks = sorted(next(iter(self.rows.values())).keys())
        columns = ("method",) + tuple(f"ndcg@{k}" for k in ks)
        rows = [
            (method,) + tuple(values[k] for k in ks) for method, values in self.rows.items()
        ]
        return ReportTable(
            name="pane_reranking",
            metadata={
                "spec_hash": self.spec_hash,
                "corpus_hash": self.corpus_hash,
                "scorer": self.scorer,
                "n_queries": str(self.n_queries),
            },
            columns=columns,
            rows=rows,
        )


def _pane_groups(corpus: Corpus, indices: Sequence[int], scores: np.ndarray) -> RankedPaneList:
    groups: dict[str, list[PaneScore]] = {}
    position = {idx: pos for pos, idx in enumerate(indices)}
    for query, members in corpus.multi_pane_index.items():
        panes = [m for m in members if m in position]
        if len(panes) < 2:
            continue
        groups[query] = [
            PaneScore(
                pane_id=f"{m:06d}",
                engagement=float(corpus.records[m].engagement),
                score=float(scores[position[m]]),
            )
            for m in panes
        ]
    if not groups:
        raise NoMultiPaneQueries("no query with >= 2 panes in the evaluation set")
    return RankedPaneList({q: tuple(p) for q, p in groups.items()})


def _worst_question_scores(panes: RankedPaneList) -> RankedPaneList:
    """Lowest-engagement pane first, remainder in ideal order."""
    groups = {}
    for query, group in panes.groups.items():
        worst = min(group, key=lambda p: (p.engagement, p.pane_id))
        top = max(p.engagement for p in group)
        groups[query] = tuple(
            PaneScore(p.pane_id, p.engagement, top + 1.0 if p is worst else p.engagement)
            for p in group
        )
    return RankedPaneList(groups)


def run_pane_reranking(
    corpus: Corpus, spec: ExperimentSpec, n_random_shuffles: int = 10
) -> RerankResult:
    """Rank each query's panes by predicted engagement and score with nDCG@K.

    The true ranking is by engagement descending. Baselines: ``random``
    (seed-deterministic uniform shuffles, averaged) and
    ``worst_question`` (lowest-engagement pane first, remainder ideal).
    The ``oracle`` scorer uses the labels themselves over all multi-pane
    queries; a model scorer is trained on an 80/20 query-level split and
    evaluated on the held-out queries' panes.
    """
    multi = {q: ix for q, ix in corpus.multi_pane_index.items() if len(ix) >= 2}
    if not multi:
        raise NoMultiPaneQueries("corpus has no query with >= 2 panes")
    scorer = spec.rerank_model
    if scorer == "oracle":
        eval_indices = [i for ix in multi.values() for i in ix]
        scores = np.array(
            [corpus.records[i].engagement for i in eval_indices], dtype=np.float64
        )
    else:
        queries = sorted(corpus.multi_pane_index)
        rng = np.random.default_rng(spec.split_seed)
        perm = rng.permutation(len(queries))
        n_test = int(round(len(queries) * spec.test_fraction))
        test_queries = {queries[i] for i in perm[:n_test]}
        train_records = tuple(
            corpus.records[i]
            for q in queries
            if q not in test_queries
            for i in corpus.multi_pane_index[q]
        )
        eval_indices = [
            i for q in queries if q in test_queries and len(corpus.multi_pane_index[q]) >= 2
            for i in corpus.multi_pane_index[q]
        ]
        if not eval_indices:
            raise NoMultiPaneQueries("no multi-pane queries in the held-out side")
        train_corpus = Corpus(records=train_records, provenance=dict(corpus.provenance))
        test_corpus = Corpus(
            records=tuple(corpus.records[i] for i in eval_indices),
            provenance=dict(corpus.provenance),
        )
        row = _run_single(
            scorer, train_corpus, test_corpus, spec.setting, spec.max_results, spec
        )
        scores = row.predictions
    panes = _pane_groups(corpus, eval_indices, scores)

    rows: dict[str, dict[int, float]] = {}
    worst = _worst_question_scores(panes)
    rows["worst_question"] = {k: ndcg_at_k(worst, k) for k in spec.ndcg_ks}
    shuffle_values = {k: [] for k in spec.ndcg_ks}
    for s in range(n_random_shuffles):
        rng = np.random.default_rng([spec.shuffle_seed, s])
        shuffled_groups = {}
        for query, group in panes.groups.items():
            order = rng.permutation(len(group))
            shuffled_groups[query] = tuple(
                PaneScore(p.pane_id, p.engagement, float(order[i]))
                for i, p in enumerate(group)
            )
        shuffled = RankedPaneList(shuffled_groups)
        for k in spec.ndcg_ks:
            shuffle_values[k].append(ndcg_at_k(shuffled, k))
    rows["random"] = {k: float(np.mean(v)) for k, v in shuffle_values.items()}
    rows[scorer] = {k: ndcg_at_k(panes, k) for k in spec.ndcg_ks}
    return RerankResult(
        spec_hash=spec.content_hash(),
        corpus_hash=corpus.content_hash(),
        scorer=scorer,
        n_queries=len(panes.groups),
        rows=rows,
    )
