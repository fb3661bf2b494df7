"""Character, word and POS fusion CNN for author gender profiling."""

from genderfuse._core import (
    Baseline,
    DataError,
    Ensemble,
    ShapeError,
    UsageError,
    analyze,
    chi2_sf,
    chi2_test,
    config_keys,
    coverage,
    evaluate,
    grad_check,
    normalize,
    odds_ratio,
    pos_tag,
    read_corpus,
    read_predictions,
    selftest,
    split_folds,
    synth_gender_corpus,
    synth_labeled_tweets,
    tagset,
    tokenize,
    write_corpus,
    write_predictions,
)

__all__ = [
    "Baseline",
    "DataError",
    "Ensemble",
    "ShapeError",
    "UsageError",
    "analyze",
    "chi2_sf",
    "chi2_test",
    "config_keys",
    "coverage",
    "evaluate",
    "grad_check",
    "normalize",
    "odds_ratio",
    "pos_tag",
    "read_corpus",
    "read_predictions",
    "selftest",
    "split_folds",
    "synth_gender_corpus",
    "synth_labeled_tweets",
    "tagset",
    "tokenize",
    "write_corpus",
    "write_predictions",
]
