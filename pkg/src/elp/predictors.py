"""Uniform fit/predict contract: central-tendency baselines and classical ML.

All predictors share one behavioral contract: ``fit(inputs, labels, seed)``
then ``predict(inputs)`` returning one real value per input, deterministic
after fitting for a fixed seed. Baselines ignore the input content; the
classical regressors consume tf-idf vectors (directly, or via
``TfidfTextRegressor`` which owns vocabulary fitting so cross-validation
never leaks test text into the features).

The classical regressors are backed by scikit-learn. Grid search is
implemented here rather than reused so fold assignment, scoring, and the
earliest-candidate tie-break are deterministic and explicit.
"""

from __future__ import annotations

import hashlib
import itertools
import pickle
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import featurize
from .errors import (
    EmptyGrid,
    EmptyTraining,
    InvalidHyperparameter,
    NotFitted,
    UnsupportedCacheFormat,
)
from .featurize import VocabOptions

MODEL_FORMAT_VERSION = 1

# Default hyperparameter grids; override per run config.
DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "svr": {
        "kernel": ["linear", "rbf"],
        "C": [0.1, 1.0, 10.0],
        "epsilon": [0.01, 0.1, 0.5],
        "gamma": ["scale", 0.01, 0.1],
        "min_df": [1, 5],
    },
    "random_forest": {
        "n_estimators": [100, 300],
        "max_depth": [8, 16, None],
        "min_df": [1, 5],
    },
    "linear_regression": {"min_df": [1, 5]},
}


def _n_inputs(inputs) -> int:
    if sp.issparse(inputs):
        return inputs.shape[0]
    return len(inputs)


def _take(inputs, idx: np.ndarray):
    if sp.issparse(inputs) or isinstance(inputs, np.ndarray):
        return inputs[idx]
    return [inputs[i] for i in idx]


def _content_bytes(row) -> bytes:
    if isinstance(row, str):
        return row.encode("utf-8")
    if sp.issparse(row):
        row = row.tocsr()
        return row.indices.tobytes() + row.data.tobytes()
    if isinstance(row, featurize.BowVector):
        return row.indices.tobytes() + row.weights.tobytes()
    return np.asarray(row).tobytes()


def _iter_rows(inputs):
    if sp.issparse(inputs):
        for i in range(inputs.shape[0]):
            yield inputs[i]
    else:
        yield from inputs


class Predictor:
    """Behavioral contract shared by baselines, classical ML, and neural models."""

    name: str = "predictor"

    def __init__(self, **hyperparameters):
        self.hyperparameters = dict(hyperparameters)
        self.fitted = False
        self.seed = 0

    def fit(self, inputs, labels, seed: int = 0) -> "Predictor":
        labels = np.asarray(labels, dtype=np.float64)
        if labels.size == 0:
            raise EmptyTraining(f"{self.name}: no training labels")
        self.seed = int(seed)
        self._fit(inputs, labels)
        self.fitted = True
        return self

    def predict(self, inputs) -> np.ndarray:
        if not self.fitted:
            raise NotFitted(f"{self.name}: predict() before fit()")
        return self._predict(inputs)

    def _fit(self, inputs, labels: np.ndarray) -> None:
        raise NotImplementedError

    def _predict(self, inputs) -> np.ndarray:
        raise NotImplementedError


class MeanBaseline(Predictor):
    """Constant prediction: training-label mean."""

    name = "mean"

    def _fit(self, inputs, labels):
        self.constant_ = float(labels.mean())

    def _predict(self, inputs):
        return np.full(_n_inputs(inputs), self.constant_, dtype=np.float64)


class MedianBaseline(Predictor):
    """Constant prediction: training-label median (even counts average the two central values)."""

    name = "median"

    def _fit(self, inputs, labels):
        self.constant_ = float(np.median(labels))

    def _predict(self, inputs):
        return np.full(_n_inputs(inputs), self.constant_, dtype=np.float64)


class NormalBaseline(Predictor):
    """Draws from N(mu, sigma^2) fit on the training labels, unclipped.

    Each prediction is keyed by (seed, input content hash) so that
    repeated calls are identical and permuting the inputs permutes the
    outputs. Duplicate inputs therefore receive equal draws.
    """

    name = "normal"

    def _fit(self, inputs, labels):
        if labels.size < 2:
            raise EmptyTraining("normal baseline needs >= 2 training labels")
        self.mu_ = float(labels.mean())
        self.sigma_ = float(labels.std())

    def _predict(self, inputs):
        out = np.empty(_n_inputs(inputs), dtype=np.float64)
        for i, row in enumerate(_iter_rows(inputs)):
            digest = hashlib.sha256(
                self.seed.to_bytes(8, "little", signed=True) + _content_bytes(row)
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            out[i] = rng.normal(self.mu_, self.sigma_)
        return out


class LinearRegressionPredictor(Predictor):
    """Ordinary least squares on (sparse) feature vectors."""

    name = "linear_regression"

    def _fit(self, inputs, labels):
        from sklearn.linear_model import LinearRegression

        self.model_ = LinearRegression()
        self.model_.fit(inputs, labels)

    def _predict(self, inputs):
        return np.asarray(self.model_.predict(inputs), dtype=np.float64)


class SvrPredictor(Predictor):
    """Epsilon-insensitive support vector regression (linear or RBF kernel)."""

    name = "svr"

    def __init__(self, kernel="rbf", C=1.0, epsilon=0.1, gamma="scale"):
        if kernel not in ("linear", "rbf"):
            raise InvalidHyperparameter(f"kernel must be linear or rbf, got {kernel!r}")
        if not np.isfinite(C) or C <= 0:
            raise InvalidHyperparameter(f"C must be finite and > 0, got {C}")
        if not np.isfinite(epsilon) or epsilon < 0:
            raise InvalidHyperparameter(f"epsilon must be finite and >= 0, got {epsilon}")
        if isinstance(gamma, str):
            if gamma != "scale":
                raise InvalidHyperparameter(f"gamma must be 'scale' or > 0, got {gamma!r}")
        elif not np.isfinite(gamma) or gamma <= 0:
            raise InvalidHyperparameter(f"gamma must be 'scale' or > 0, got {gamma}")
        super().__init__(kernel=kernel, C=C, epsilon=epsilon, gamma=gamma)

    def _fit(self, inputs, labels):
        from sklearn.svm import SVR

        self.model_ = SVR(**self.hyperparameters)
        self.model_.fit(inputs, labels)

    def _predict(self, inputs):
        return np.asarray(self.model_.predict(inputs), dtype=np.float64)


class RandomForestPredictor(Predictor):
    """Bagged regression trees; prediction is the mean over trees.

    ``max_depth=0`` denotes the degenerate depth-0 forest: every tree is a
    single leaf, so the ensemble is the constant training mean (computed
    on the full training set so the degenerate case is seed-independent).
    """

    name = "random_forest"

    def __init__(self, n_estimators=100, max_depth=None):
        if n_estimators < 1:
            raise InvalidHyperparameter(f"n_estimators must be >= 1, got {n_estimators}")
        if max_depth is not None and max_depth < 0:
            raise InvalidHyperparameter(f"max_depth must be >= 0 or None, got {max_depth}")
        super().__init__(n_estimators=n_estimators, max_depth=max_depth)

    def _fit(self, inputs, labels):
        if self.hyperparameters["max_depth"] == 0:
            self.constant_ = float(labels.mean())
            self.model_ = None
            return
        from sklearn.ensemble import RandomForestRegressor

        self.model_ = RandomForestRegressor(
            n_estimators=self.hyperparameters["n_estimators"],
            max_depth=self.hyperparameters["max_depth"],
            random_state=self.seed,
        )
        self.model_.fit(inputs, labels)

    def _predict(self, inputs):
        if self.model_ is None:
            return np.full(_n_inputs(inputs), self.constant_, dtype=np.float64)
        return np.asarray(self.model_.predict(inputs), dtype=np.float64)


_INNER_FACTORIES = {
    "mean": lambda **kw: MeanBaseline(),
    "median": lambda **kw: MedianBaseline(),
    "normal": lambda **kw: NormalBaseline(),
    "linear_regression": lambda **kw: LinearRegressionPredictor(),
    "svr": SvrPredictor,
    "random_forest": RandomForestPredictor,
}


class TfidfTextRegressor(Predictor):
    """tf-idf featurization + an inner regressor, fit as one unit.

    Operates on raw document strings so cross-validated grid search can
    include vocabulary options (``min_df``, ``max_features``, ``lowercase``)
    without leaking held-out text into the features.
    """

    def __init__(self, inner: str, **params):
        vocab_keys = {"min_df", "max_features", "lowercase"}
        vocab_kwargs = {k: params.pop(k) for k in list(params) if k in vocab_keys}
        self.vocab_options = VocabOptions(**vocab_kwargs)
        if inner not in _INNER_FACTORIES:
            raise InvalidHyperparameter(f"unknown inner model {inner!r}")
        self.inner = _INNER_FACTORIES[inner](**params)
        self.name = f"tfidf+{inner}"
        super().__init__(inner=inner, **vocab_kwargs, **params)

    def _matrix(self, docs: list[str]) -> sp.csr_matrix:
        vectors = [featurize.transform_bow_text(d, self.vocabulary_) for d in docs]
        return featurize.stack_bow(vectors)

    def _fit(self, docs, labels):
        if not docs:
            raise EmptyTraining("no training documents")
        self.vocabulary_ = featurize.fit_vocabulary_texts(list(docs), self.vocab_options)
        self.inner.fit(self._matrix(list(docs)), labels, seed=self.seed)

    def _predict(self, docs):
        return self.inner.predict(self._matrix(list(docs)))


def make_predictor(name: str, **params) -> Predictor:
    """Factory over the non-neural roster. Text-consuming models get tf-idf."""
    if name in ("mean", "median", "normal"):
        return _INNER_FACTORIES[name]()
    if name in ("linear_regression", "svr", "random_forest"):
        return TfidfTextRegressor(inner=name, **params)
    raise InvalidHyperparameter(f"unknown predictor {name!r}")


@dataclass(frozen=True)
class GridSearchResult:
    best_params: dict
    best_index: int
    candidates: tuple[tuple[dict, float, tuple[float, ...]], ...]
    folds: int
    scoring: str


def cv_folds(n: int, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic k-fold assignment: seeded permutation, contiguous chunks."""
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    if n < folds:
        raise EmptyTraining(f"{n} samples cannot fill {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    chunks = np.array_split(perm, folds)
    out = []
    for i, chunk in enumerate(chunks):
        train = np.concatenate([c for j, c in enumerate(chunks) if j != i])
        out.append((np.sort(train), np.sort(chunk)))
    return out


def _score(name: str, y_true: np.ndarray, y_pred: np.ndarray) -> float:
    from .metrics import regression_scores

    scores = regression_scores(y_true, y_pred)
    if name == "r2":
        return scores.r2 if not np.isnan(scores.r2) else -np.inf
    if name == "neg_mae":
        return -scores.mae
    if name == "neg_mse":
        return -scores.mse
    raise ValueError(f"unknown scoring {name!r}")


def expand_grid(grid: dict[str, list]) -> list[dict]:
    """Cartesian product in key insertion order (the enumeration order)."""
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def grid_search_cv(
    factory,
    grid: dict[str, list] | list[dict],
    inputs,
    labels,
    folds: int = 5,
    scoring: str = "r2",
    seed: int = 0,
) -> tuple[Predictor, GridSearchResult]:
    """Score every grid point on every fold; refit the best on all data.

    The best candidate attains the maximum mean CV score; ties go to the
    earliest candidate in grid enumeration order. Fold assignment is
    deterministic per seed, and no candidate is ever evaluated on the
    data it was fit on within a fold.
    """
    candidates = expand_grid(grid) if isinstance(grid, dict) else [dict(g) for g in grid]
    if not candidates:
        raise EmptyGrid("grid search needs at least one candidate")
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        raise EmptyTraining("grid search needs training labels")
    splits = cv_folds(len(labels), folds, seed)
    rows = []
    for params in candidates:
        fold_scores = []
        for train_idx, dev_idx in splits:
            model = factory(**params)
            model.fit(_take(inputs, train_idx), labels[train_idx], seed=seed)
            pred = model.predict(_take(inputs, dev_idx))
            fold_scores.append(_score(scoring, labels[dev_idx], pred))
        rows.append((params, float(np.mean(fold_scores)), tuple(fold_scores)))
    best_index = max(range(len(rows)), key=lambda i: (rows[i][1], -i))
    best_params = rows[best_index][0]
    best_model = factory(**best_params)
    best_model.fit(inputs, labels, seed=seed)
    result = GridSearchResult(
        best_params=best_params,
        best_index=best_index,
        candidates=tuple(rows),
        folds=folds,
        scoring=scoring,
    )
    return best_model, result


def save_model(model: Predictor, path) -> None:
    """Versioned container: name, hyperparameters, vocabulary hash, weights."""
    vocab_hash = None
    if isinstance(model, TfidfTextRegressor) and model.fitted:
        vocab_hash = model.vocabulary_.corpus_hash
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "name": model.name,
        "hyperparameters": model.hyperparameters,
        "vocab_hash": vocab_hash,
        "model": model,
    }
    with open(path, "wb") as fh:
        pickle.dump(payload, fh)


def load_model(path) -> Predictor:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise UnsupportedCacheFormat(
            f"{path}: model format_version {payload.get('format_version')!r}"
        )
    return payload["model"]
