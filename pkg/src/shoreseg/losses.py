"""Composite training loss: four terms plus their gated total.

Each term is a pure function returning (value, gradient) so the analytic
gradients can be checked against central finite differences without any
autodiff framework. All reductions are means over elements so values are
comparable across image sizes. total_loss combines the terms as

    total = lambda1 * (lc + lb + lm) + lambda_s * ls

with the lambdas acting as stage gates (0 or 1 in the usual schedule,
arbitrary non-negative values allowed).
"""

from __future__ import annotations

import operator
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyAfterIgnore,
    LabelOutOfRange,
    LengthMismatch,
    NegativeComponent,
)

__all__ = [
    "LossWeights",
    "LossBreakdown",
    "IGNORE_ID",
    "BCE_EPSILON",
    "softmax_cross_entropy",
    "smooth_l1",
    "mask_bce",
    "semantic_ce",
    "total_loss",
]

IGNORE_ID = 255      # semantic truth id marking unlabeled pixels
BCE_EPSILON = 1e-7   # probability clamp for mask_bce


@dataclass(frozen=True)
class LossWeights:
    """Stage gates for the instance terms (lambda1) and semantic term."""

    lambda1: float = 1.0
    lambda_s: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda_s < 0:
            raise NegativeComponent(
                f"loss weights must be non-negative, got "
                f"({self.lambda1}, {self.lambda_s})"
            )


@dataclass(frozen=True)
class LossBreakdown:
    """The four component values and their weighted total."""

    lc: float
    lb: float
    lm: float
    ls: float
    total: float

    def __post_init__(self):
        for name in ("lc", "lb", "lm", "ls"):
            if getattr(self, name) < 0:
                raise NegativeComponent(
                    f"component {name} must be non-negative"
                )


def softmax_cross_entropy(logits, label: int):
    """Classification term: -log softmax(logits)[label].

    Computed with max-subtraction so arbitrarily large logit magnitudes
    stay finite.

    Returns:
        (value, gradient w.r.t. logits), gradient = softmax - one_hot.

    Raises:
        LabelOutOfRange: label is not a valid class index.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size < 2:
        raise ValueError("logits must be a 1-d vector with >= 2 classes")
    label = int(operator.index(label))
    if not 0 <= label < logits.size:
        raise LabelOutOfRange(
            f"label {label} outside [0, {logits.size})"
        )
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    log_sum = float(np.log(exp.sum()))
    value = log_sum - float(shifted[label])
    grad = exp / exp.sum()
    grad[label] -= 1.0
    return value, grad


def smooth_l1(pred, target):
    """Box-regression term: mean smooth-L1 with transition at |d| = 1.

    Per coordinate the penalty is 0.5*d^2 for |d| < 1 and |d| - 0.5
    otherwise (continuous at the boundary); the gradient is d or sign(d)
    accordingly, divided by the coordinate count.

    Raises:
        LengthMismatch: pred and target differ in length.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise LengthMismatch(
            f"length {pred.shape} vs {target.shape}"
        )
    if pred.size == 0:
        raise ValueError("smooth_l1 needs at least one coordinate")
    d = pred - target
    inner = np.abs(d) < 1.0
    per = np.where(inner, 0.5 * d * d, np.abs(d) - 0.5)
    grad = np.where(inner, d, np.sign(d)) / d.size
    return float(per.mean()), grad


def mask_bce(pred_probs, truth):
    """Mask term: mean per-pixel binary cross-entropy.

    Probabilities are clamped to [eps, 1-eps] with eps = 1e-7; the gradient
    is zero wherever the clamp was active.

    Raises:
        DimensionMismatch: probability grid and mask differ in shape.
    """
    pred_probs = np.asarray(pred_probs, dtype=np.float64)
    truth = np.asarray(truth)
    if pred_probs.shape != truth.shape:
        raise DimensionMismatch(
            f"shape {pred_probs.shape} vs {truth.shape}"
        )
    if pred_probs.size == 0:
        raise ValueError("mask_bce needs at least one pixel")
    t = truth.astype(np.float64)
    clamped = np.clip(pred_probs, BCE_EPSILON, 1.0 - BCE_EPSILON)
    per = -(t * np.log(clamped) + (1.0 - t) * np.log(1.0 - clamped))
    grad = ((1.0 - t) / (1.0 - clamped) - t / clamped) / pred_probs.size
    grad[clamped != pred_probs] = 0.0
    return float(per.mean()), grad


def semantic_ce(pred_logits, truth):
    """Semantic term: mean per-pixel softmax cross-entropy.

    Truth id 255 marks ignored pixels (tile padding, unlabeled); those
    contribute nothing to the value and carry zero gradient.

    Raises:
        EmptyAfterIgnore: every pixel is ignored.
        LabelOutOfRange: a non-ignored truth id is not a valid class.
    """
    logits = np.asarray(pred_logits, dtype=np.float64)
    truth = np.asarray(truth)
    if logits.ndim != 3 or logits.shape[2] < 2:
        raise ValueError("pred_logits must be (h, w, classes) with >= 2 classes")
    if truth.shape != logits.shape[:2]:
        raise DimensionMismatch(
            f"shape {logits.shape[:2]} vs {truth.shape}"
        )
    classes = logits.shape[2]
    valid = truth != IGNORE_ID
    count = int(np.count_nonzero(valid))
    if count == 0:
        raise EmptyAfterIgnore("all pixels carry the ignore id")
    ids = truth[valid].astype(np.int64)
    if ids.min() < 0 or ids.max() >= classes:
        raise LabelOutOfRange(
            f"truth ids must be in [0, {classes}) or {IGNORE_ID}"
        )

    shifted = logits - logits.max(axis=2, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=2)
    picked = np.take_along_axis(
        shifted, truth.clip(0, classes - 1)[..., None].astype(np.int64), axis=2
    )[..., 0]
    per = np.log(denom) - picked
    value = float(per[valid].mean())

    grad = exp / denom[..., None]
    rows, cols = np.nonzero(valid)
    grad[rows, cols, ids] -= 1.0
    grad /= count
    grad[~valid] = 0.0
    return value, grad


def total_loss(lc: float, lb: float, lm: float, ls: float,
               weights: LossWeights = LossWeights()) -> LossBreakdown:
    """Combines the four components into the gated total.

    Raises:
        NegativeComponent: any component is negative.
    """
    for name, value in (("lc", lc), ("lb", lb), ("lm", lm), ("ls", ls)):
        if value < 0:
            raise NegativeComponent(f"component {name} is negative: {value}")
    total = weights.lambda1 * (lc + lb + lm) + weights.lambda_s * ls
    return LossBreakdown(lc=lc, lb=lb, lm=lm, ls=ls, total=total)
