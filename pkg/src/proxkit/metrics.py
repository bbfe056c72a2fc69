"""Contact binarization and the normalized decision cost metric."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DistanceClass, NdcfResult

DEFAULT_CONTACT_THRESHOLD_M = 1.8


@dataclass(frozen=True)
class ContactRule:
    """Contact threshold (inclusive, meters) and the two error-cost weights."""

    threshold: float = DEFAULT_CONTACT_THRESHOLD_M
    w_fn: float = 1.0
    w_fp: float = 1.0

    def __post_init__(self) -> None:
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold!r}")
        if self.w_fn <= 0 or self.w_fp <= 0:
            raise ValueError("cost weights must be positive")


def binarize(label: DistanceClass, rule: ContactRule) -> bool:
    """True when the class counts as a contact (at or below the threshold)."""
    return label.meters <= rule.threshold


def ndcf(
    predictions: Sequence[DistanceClass],
    truths: Sequence[DistanceClass],
    rule: ContactRule = ContactRule(),
) -> NdcfResult:
    """Weighted false-negative/false-positive cost, normalized so that the
    better constant predictor scores exactly 1.0 at equal weights.

    Requires at least one true contact and one true no-contact, otherwise an
    error rate is undefined.
    """
    if len(predictions) != len(truths):
        raise ValueError(
            f"got {len(predictions)} predictions for {len(truths)} truths"
        )
    tp = fp = tn = fn = 0
    for pred, truth in zip(predictions, truths):
        p = binarize(pred, rule)
        t = binarize(truth, rule)
        if t and p:
            tp += 1
        elif t and not p:
            fn += 1
        elif not t and p:
            fp += 1
        else:
            tn += 1
    if fn + tp == 0:
        raise ValueError("no true contacts in truth labels: P_fn is undefined")
    if fp + tn == 0:
        raise ValueError("no true no-contacts in truth labels: P_fp is undefined")
    p_fn = fn / (fn + tp)
    p_fp = fp / (fp + tn)
    value = (rule.w_fn * p_fn + rule.w_fp * p_fp) / min(rule.w_fn, rule.w_fp)
    return NdcfResult(
        p_fn=p_fn, p_fp=p_fp, w_fn=rule.w_fn, w_fp=rule.w_fp, ndcf=value,
        tp=tp, fp=fp, tn=tn, fn=fn,
    )


def accuracy(predictions: Sequence[DistanceClass], truths: Sequence[DistanceClass]) -> float:
    """Fraction of exact 4-class matches."""
    if len(predictions) != len(truths):
        raise ValueError(
            f"got {len(predictions)} predictions for {len(truths)} truths"
        )
    if not truths:
        raise ValueError("accuracy of an empty prediction list is undefined")
    hits = sum(1 for p, t in zip(predictions, truths) if p is t)
    return hits / len(truths)


def confusion_matrix(
    predictions: Sequence[DistanceClass], truths: Sequence[DistanceClass]
) -> np.ndarray:
    """4x4 counts indexed [truth, prediction]."""
    out = np.zeros((4, 4), dtype=np.int64)
    for p, t in zip(predictions, truths):
        out[t.index, p.index] += 1
    return out
