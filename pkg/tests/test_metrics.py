from __future__ import annotations

import itertools
import math

import pytest

from autoseq import DataError, accuracy, f1, matthews


def from_confusion(tp: int, fp: int, fn: int, tn: int):
    """Build prediction/gold vectors realizing a 2x2 confusion matrix."""
    preds = ["pos"] * tp + ["pos"] * fp + ["neg"] * fn + ["neg"] * tn
    gold = ["pos"] * tp + ["neg"] * fp + ["pos"] * fn + ["neg"] * tn
    return preds, gold


def pearson_binary(preds, gold):
    """Brute-force correlation of the two indicator vectors."""
    x = [1.0 if p == "pos" else 0.0 for p in preds]
    y = [1.0 if g == "pos" else 0.0 for g in gold]
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    if vx == 0 or vy == 0:
        return 0.0
    return cov / math.sqrt(vx * vy)


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy(["a", "b"], ["a", "b"]) == 1.0

    def test_none_correct(self):
        assert accuracy(["a", "b"], ["b", "a"]) == 0.0

    def test_three_of_four(self):
        assert accuracy(["a", "a", "b", "b"], ["a", "a", "b", "a"]) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            accuracy(["a"], ["a", "b"])

    def test_relabeling_invariance(self):
        preds = ["x", "y", "x", "y"]
        gold = ["x", "x", "y", "y"]
        swap = {"x": "y", "y": "x"}
        assert accuracy(preds, gold) == accuracy(
            [swap[p] for p in preds], [swap[g] for g in gold]
        )


class TestF1:
    def test_hand_computed(self):
        preds, gold = from_confusion(tp=2, fp=1, fn=1, tn=0)
        assert f1(preds, gold, "pos") == pytest.approx(2 / 3)

    def test_perfect(self):
        preds, gold = from_confusion(tp=3, fp=0, fn=0, tn=2)
        assert f1(preds, gold, "pos") == 1.0

    def test_degenerate_is_zero(self):
        # no positive predictions and no positive gold
        preds, gold = from_confusion(tp=0, fp=0, fn=0, tn=3)
        assert f1(preds, gold, "pos") == 0.0

    def test_unknown_class(self):
        with pytest.raises(DataError):
            f1(["a", "b"], ["a", "b"], "zzz")


class TestMatthews:
    def test_perfect(self):
        preds, gold = from_confusion(tp=2, fp=0, fn=0, tn=2)
        assert matthews(preds, gold) == 1.0

    def test_balanced_random_is_zero(self):
        preds, gold = from_confusion(tp=1, fp=1, fn=1, tn=1)
        assert matthews(preds, gold) == 0.0

    def test_hand_computed(self):
        preds, gold = from_confusion(tp=3, fp=1, fn=0, tn=2)
        expected = (3 * 2 - 1 * 0) / math.sqrt(4 * 3 * 3 * 2)
        assert matthews(preds, gold) == pytest.approx(expected)
        assert matthews(preds, gold) == pytest.approx(0.7071, abs=1e-4)

    def test_more_than_two_classes_rejected(self):
        with pytest.raises(DataError):
            matthews(["a", "b", "c"], ["a", "b", "c"])


def all_small_confusions():
    for tp, fp, fn, tn in itertools.product(range(6), repeat=4):
        if tp + fp + fn + tn > 0:
            yield tp, fp, fn, tn


class TestEnumerationOracle:
    def test_matthews_equals_indicator_correlation(self):
        for tp, fp, fn, tn in all_small_confusions():
            preds, gold = from_confusion(tp, fp, fn, tn)
            assert matthews(preds, gold) == pytest.approx(
                pearson_binary(preds, gold), abs=1e-12
            ), (tp, fp, fn, tn)

    def test_f1_equals_formula(self):
        for tp, fp, fn, tn in all_small_confusions():
            preds, gold = from_confusion(tp, fp, fn, tn)
            if tp == 0:
                expected = 0.0
            else:
                expected = 2 * tp / (2 * tp + fp + fn)
            assert f1(preds, gold, "pos") == pytest.approx(expected, abs=1e-12)

    def test_matthews_sign_flips_under_role_swap(self):
        preds, gold = from_confusion(tp=3, fp=1, fn=0, tn=2)
        flipped = ["neg" if p == "pos" else "pos" for p in preds]
        assert matthews(flipped, gold) == pytest.approx(-matthews(preds, gold))
