"""Python bindings for the domeval evaluation toolkit."""

from ._domeval import (
    PRF,
    DomevalError,
    bleu,
    bootstrap_pair,
    count_syllables,
    flesch_reading_ease,
    label_score,
    median,
    median_rank,
    normalize_question,
    option_permutation,
    parse_answer_letter,
    parse_label,
    rank_with_ties,
    rouge_l,
    rouge_n,
    run_end_to_end,
    score_pair,
    split_counts,
)

__all__ = [
    "PRF",
    "DomevalError",
    "bleu",
    "bootstrap_pair",
    "count_syllables",
    "flesch_reading_ease",
    "label_score",
    "median",
    "median_rank",
    "normalize_question",
    "option_permutation",
    "parse_answer_letter",
    "parse_label",
    "rank_with_ties",
    "rouge_l",
    "rouge_n",
    "run_end_to_end",
    "score_pair",
    "split_counts",
]
