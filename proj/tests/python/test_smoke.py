import filecmp
import math
from pathlib import Path

import pytest

import domeval

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


def test_metrics():
    assert domeval.rouge_n("a b", "a c", 1).f1 == 0.5
    assert math.isclose(domeval.rouge_l("a x b y", "a b").f1, 2 / 3)
    assert math.isclose(domeval.bleu("the cat sat", ["the cat sat on the mat"]), math.exp(-1))
    same = domeval.score_pair("qt interval is long", "qt interval is long")
    assert same["bleu"] == pytest.approx(1.0)
    assert same["bertscore"].f1 == pytest.approx(1.0)


def test_flesch():
    assert domeval.flesch_reading_ease("The cat sat.") == pytest.approx(119.19, abs=1e-9)
    assert domeval.count_syllables("table") == 2
    with pytest.raises(domeval.DomevalError, match="EmptyText"):
        domeval.flesch_reading_ease("")


def test_labels_and_letters():
    assert domeval.parse_label("Partially correct") == "correct_incomplete"
    assert [domeval.label_score(c) for c in ("correct", "correct_incomplete", "partially_incorrect", "incorrect")] == [
        1.0,
        0.75,
        0.25,
        0.0,
    ]
    assert domeval.parse_answer_letter("The answer is C.") == "C"
    assert domeval.parse_answer_letter("none") is None
    assert sorted(domeval.option_permutation(3, "item-1")) == [0, 1, 2, 3]
    assert domeval.split_counts(7) == [5, 1, 1]


def test_ranking():
    tie = domeval.bootstrap_pair([1, 0, 1], [1, 0, 1], 200, 5)
    assert (tie["ci_low"], tie["ci_high"], tie["significant"]) == (0.0, 0.0, False)
    board = domeval.rank_with_ties({"low": [0.0] * 20, "high": [1.0] * 20}, 500, 1)
    assert [(e["system"], e["rank"]) for e in board["entries"]] == [("high", 1), ("low", 2)]
    rows = domeval.median_rank([("x", {"mcq": [1, 3, 2], "judge": [4]}), ("y", {"mcq": [1], "judge": [1, 2]})], ["mcq", "judge"])
    assert [r["system"] for r in rows] == ["y", "x"]
    assert rows[0]["median_rank"] == 1.25


def test_end_to_end_is_reproducible(tmp_path):
    manifest = FIXTURES / "corpus" / "manifest.json"
    files = domeval.run_end_to_end(manifest, tmp_path / "a", seed=42)
    domeval.run_end_to_end(manifest, tmp_path / "b", seed=42)
    assert "median_rank.csv" in files
    for name in files:
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False), name
