"""Exception types shared across the package."""


class ElpError(Exception):
    """Base class for all library errors."""


class EmptyCorpus(ElpError):
    """No usable records (zero valid rows, or a filter removed everything)."""


class MissingColumn(ElpError):
    """The column mapping names a column the click-log header does not have."""


class UnsupportedCacheFormat(ElpError):
    """Corpus cache file has a missing or unknown format version."""


class MissingSerp(ElpError):
    """An input setting needs SERP content but the record has no SERP."""


class BudgetTooSmall(ElpError):
    """Token budget cannot hold the classification marker plus one query token."""


class EmptyTraining(ElpError):
    """fit() called with no training examples."""


class InvalidHyperparameter(ElpError):
    """Hyperparameter outside its valid range (e.g. C <= 0)."""


class EmptyGrid(ElpError):
    """Grid search called with no candidates."""


class NotFitted(ElpError):
    """predict() called before fit()."""


class NonFiniteLoss(ElpError):
    """Training loss became NaN or infinite."""


class EncoderUnavailable(ElpError):
    """Pretrained encoder weights could not be resolved."""


class EmbeddingUnavailable(ElpError):
    """Pretrained word-embedding table could not be resolved."""


class LengthMismatch(ElpError):
    """Paired inputs differ in length."""


class EmptyInput(ElpError):
    """Metric called on empty input."""


class NoMultiPaneQueries(ElpError):
    """Re-ranking needs at least one query with two or more panes."""


class InvalidSpec(ElpError):
    """Synthetic-corpus spec fails validation."""


class ConfigError(ElpError):
    """Run configuration failed schema validation."""


class OutputExists(ElpError):
    """Output artifact already exists and --overwrite was not given."""
