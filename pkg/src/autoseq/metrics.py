"""Classification metrics for dev selection and reporting.

Degenerate denominators (no positive predictions, empty marginals) return
0 so that re-ranking always has a total order to work with.
"""

from __future__ import annotations

import math
from typing import Sequence

from .errors import DataError


def _check_lengths(preds: Sequence[str], gold: Sequence[str]) -> None:
    if len(preds) != len(gold):
        raise DataError(f"length mismatch: {len(preds)} predictions, {len(gold)} gold")
    if not preds:
        raise DataError("metrics need at least one prediction")


def accuracy(preds: Sequence[str], gold: Sequence[str]) -> float:
    _check_lengths(preds, gold)
    return sum(p == g for p, g in zip(preds, gold)) / len(preds)


def f1(preds: Sequence[str], gold: Sequence[str], positive_class: str) -> float:
    _check_lengths(preds, gold)
    classes = set(preds) | set(gold)
    if positive_class not in classes and len(classes) > 1:
        raise DataError(f"unknown positive class {positive_class!r}")
    tp = sum(p == positive_class and g == positive_class for p, g in zip(preds, gold))
    fp = sum(p == positive_class and g != positive_class for p, g in zip(preds, gold))
    fn = sum(p != positive_class and g == positive_class for p, g in zip(preds, gold))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def matthews(preds: Sequence[str], gold: Sequence[str]) -> float:
    _check_lengths(preds, gold)
    classes = sorted(set(preds) | set(gold))
    if len(classes) > 2:
        raise DataError(f"matthews needs a binary task, got classes {classes}")
    pos = classes[-1]
    tp = sum(p == pos and g == pos for p, g in zip(preds, gold))
    tn = sum(p != pos and g != pos for p, g in zip(preds, gold))
    fp = sum(p == pos and g != pos for p, g in zip(preds, gold))
    fn = sum(p != pos and g == pos for p, g in zip(preds, gold))
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def compute_metric(
    name: str, preds: Sequence[str], gold: Sequence[str], positive_class: str | None = None
) -> float:
    if name == "accuracy":
        return accuracy(preds, gold)
    if name == "f1":
        if positive_class is None:
            raise DataError("f1 needs a positive class")
        return f1(preds, gold, positive_class)
    if name == "matthews":
        return matthews(preds, gold)
    raise DataError(f"unknown metric {name!r}")
