"""Segmentation scoring: mask IoU, instance AP/AR/PS/PL, panoptic PQ/SQ/RQ.

Instance evaluation follows the standard detection protocol: per class and
IoU threshold, predictions sorted by descending score greedily match the
unmatched truth with highest IoU at or above the threshold; the
precision-recall curve is interpolated at 101 recall points; AP averages
over the thresholds 0.50:0.05:0.95 and over classes. PS and PL restrict the
evaluation to truths below/above the configured pixel-area bounds.

Panoptic evaluation matches segments of equal class with IoU strictly above
0.5 (such matches are unique) and reports PQ = sum(IoU) / (TP + FP/2 + FN/2)
with its SQ and RQ factors, the background participating as a stuff segment.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, LabelMismatch

__all__ = [
    "InstancePrediction",
    "InstanceTruth",
    "PanopticMap",
    "PanopticStats",
    "InstanceResult",
    "PanopticResult",
    "MetricsReport",
    "DEFAULT_IOU_THRESHOLDS",
    "DEFAULT_SIZE_BOUNDS",
    "mask_iou",
    "evaluate_instances",
    "panoptic_match_stats",
    "evaluate_panoptic",
]

DEFAULT_IOU_THRESHOLDS = tuple(0.5 + 0.05 * i for i in range(10))
DEFAULT_SIZE_BOUNDS = (32, 96)  # pixels; areas compared against bound^2

_RECALL_GRID = np.linspace(0.0, 1.0, 101)


# ===================== types =====================

def _validate_mask(mask: np.ndarray) -> np.ndarray:
    if not isinstance(mask, np.ndarray) or mask.dtype != bool or mask.ndim != 2:
        raise ValueError("mask must be a 2-d boolean array")
    return mask


@dataclass(frozen=True, eq=False)
class InstancePrediction:
    """One scored instance mask on one image."""

    image_ref: str
    class_label: str
    score: float
    mask: np.ndarray

    def __post_init__(self):
        _validate_mask(self.mask)
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True, eq=False)
class InstanceTruth:
    """One ground-truth instance mask on one image."""

    image_ref: str
    class_label: str
    mask: np.ndarray

    def __post_init__(self):
        _validate_mask(self.mask)


@dataclass(frozen=True, eq=False)
class PanopticMap:
    """Per-pixel segment labeling plus its segment table.

    Attributes:
        segment_ids: int32 (height, width) array of segment ids.
        segments: id -> (class_label, is_thing). Id 0, when present, is the
            reserved background stuff segment.
    """

    segment_ids: np.ndarray
    segments: dict

    def __post_init__(self):
        ids = np.asarray(self.segment_ids)
        if ids.ndim != 2:
            raise ValueError("segment_ids must be a 2-d array")
        ids = ids.astype(np.int32, copy=False)
        present = np.unique(ids)
        if present.size and present[0] < 0:
            raise ValueError("segment ids must be non-negative")
        missing = [int(i) for i in present if int(i) not in self.segments]
        if missing:
            raise ValueError(f"segment ids missing from the table: {missing}")
        if 0 in self.segments and self.segments[0][1]:
            raise ValueError("segment id 0 is reserved for background stuff")
        object.__setattr__(self, "segment_ids", ids)

    @property
    def width(self) -> int:
        return int(self.segment_ids.shape[1])

    @property
    def height(self) -> int:
        return int(self.segment_ids.shape[0])


@dataclass
class InstanceResult:
    """Instance-detection scores plus per-class and diagnostic detail."""

    ap: float
    ar: float
    ps: float
    pl: float
    per_class: dict
    diagnostics: dict


@dataclass
class PanopticStats:
    """Aggregable match counts for panoptic scoring.

    per_class maps class_label -> [iou_sum, tp, fp, fn].
    """

    iou_sum: float = 0.0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    per_class: dict = field(default_factory=dict)

    def merge(self, other: "PanopticStats") -> "PanopticStats":
        """Accumulates another image's stats into this one."""
        self.iou_sum += other.iou_sum
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        for label, vals in other.per_class.items():
            mine = self.per_class.setdefault(label, [0.0, 0, 0, 0])
            for k in range(4):
                mine[k] += vals[k]
        return self

    def result(self) -> "PanopticResult":
        """Finalizes PQ/SQ/RQ from the accumulated counts."""
        pq, sq, rq = _pq_from_counts(self.iou_sum, self.tp, self.fp, self.fn)
        per_class = {}
        for label in sorted(self.per_class):
            iou_sum, tp, fp, fn = self.per_class[label]
            cpq, csq, crq = _pq_from_counts(iou_sum, tp, fp, fn)
            per_class[label] = {
                "pq": cpq, "sq": csq, "rq": crq,
                "tp": int(tp), "fp": int(fp), "fn": int(fn),
            }
        return PanopticResult(
            pq=pq, sq=sq, rq=rq,
            tp=self.tp, fp=self.fp, fn=self.fn,
            iou_sum=self.iou_sum, per_class=per_class,
        )


@dataclass
class PanopticResult:
    """Panoptic quality scores plus per-class and diagnostic detail."""

    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int
    iou_sum: float
    per_class: dict


@dataclass
class MetricsReport:
    """The full score sheet; fields are None when not evaluated."""

    ap: float | None = None
    ar: float | None = None
    ps: float | None = None
    pl: float | None = None
    pq: float | None = None
    sq: float | None = None
    rq: float | None = None
    per_class: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("ap", "ar", "ps", "pl", "pq", "sq", "rq"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} out of [0, 1]: {value}")
        tp = self.diagnostics.get("panoptic", {}).get("tp", 0)
        if tp > 0 and None not in (self.pq, self.sq, self.rq):
            if abs(self.pq - self.sq * self.rq) > 1e-9:
                raise ValueError("pq must equal sq*rq when TP > 0")

    @classmethod
    def from_results(cls, instances: InstanceResult | None = None,
                     panoptic: PanopticResult | None = None) -> "MetricsReport":
        kwargs: dict = {"per_class": {}, "diagnostics": {}}
        if instances is not None:
            kwargs.update(ap=instances.ap, ar=instances.ar,
                          ps=instances.ps, pl=instances.pl)
            kwargs["per_class"]["instances"] = instances.per_class
            kwargs["diagnostics"]["instances"] = instances.diagnostics
        if panoptic is not None:
            kwargs.update(pq=panoptic.pq, sq=panoptic.sq, rq=panoptic.rq)
            kwargs["per_class"]["panoptic"] = panoptic.per_class
            kwargs["diagnostics"]["panoptic"] = {
                "tp": panoptic.tp, "fp": panoptic.fp, "fn": panoptic.fn,
                "iou_sum": panoptic.iou_sum,
            }
        return cls(**kwargs)

    def to_json_dict(self) -> dict:
        out = {}
        for name in ("ap", "ar", "ps", "pl", "pq", "sq", "rq"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        out["per_class"] = self.per_class
        out["diagnostics"] = self.diagnostics
        return out

    def render_table(self) -> str:
        """Aligned plain-text table: AP/PS/PL/AR and PQ/PS/PL/RQ groups."""

        def fmt(value):
            return f"{value:7.4f}" if value is not None else "      -"

        lines = []
        if self.ap is not None or self.ar is not None:
            lines.append("group            AP      PS      PL      AR")
            lines.append(
                "instances   "
                + " ".join(fmt(v) for v in (self.ap, self.ps, self.pl, self.ar))
            )
        if self.pq is not None:
            if lines:
                lines.append("")
            lines.append("group            PQ      PS      PL      RQ")
            lines.append(
                "panoptic    "
                + " ".join(fmt(v) for v in (self.pq, self.ps, self.pl, self.rq))
            )
        return "\n".join(lines) + "\n"


# ===================== mask IoU =====================

def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection-over-union of two boolean masks; 0 when both empty.

    Raises:
        DimensionMismatch: the masks differ in shape.
    """
    _validate_mask(a)
    _validate_mask(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")
    intersection = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    return intersection / union if union else 0.0


# ===================== instance evaluation =====================

def evaluate_instances(
    predictions,
    truths,
    iou_thresholds=None,
    size_bounds=DEFAULT_SIZE_BOUNDS,
    max_detections: int | None = None,
) -> InstanceResult:
    """Scores instance predictions against ground truth.

    Args:
        predictions: iterable of InstancePrediction.
        truths: iterable of InstanceTruth.
        iou_thresholds: IoU thresholds to average over; default 0.50:0.05:0.95.
        size_bounds: (small, large) pixel bounds; PS restricts truths to
            area < small^2, PL to area > large^2.
        max_detections: optional per-image, per-class cap on scored
            predictions (highest scores kept).

    Returns:
        InstanceResult with ap, ar, ps, pl, per-class AP, and TP/FP/FN
        diagnostics at the first threshold.

    Raises:
        LabelMismatch: a prediction's class is absent from the truth labels.
        DimensionMismatch: pred/truth masks on one image differ in shape.
    """
    predictions = list(predictions)
    truths = list(truths)
    thresholds = tuple(iou_thresholds) if iou_thresholds is not None else DEFAULT_IOU_THRESHOLDS
    small_bound, large_bound = size_bounds

    classes = sorted({t.class_label for t in truths})
    class_set = set(classes)
    for p in predictions:
        if p.class_label not in class_set:
            raise LabelMismatch(
                f"prediction class {p.class_label!r} not in truth label set {classes}"
            )

    # canonical order: score descending, content-based tie-breaks so input
    # permutation cannot change the outcome
    def sort_key(p: InstancePrediction):
        digest = hashlib.sha1(p.mask.tobytes()).hexdigest()
        return (-p.score, p.image_ref, digest)

    ordered = sorted(predictions, key=sort_key)
    if max_detections is not None:
        kept = []
        seen: dict = {}
        for p in ordered:
            key = (p.image_ref, p.class_label)
            count = seen.get(key, 0)
            if count < max_detections:
                kept.append(p)
                seen[key] = count + 1
        ordered = kept

    truth_areas = [int(np.count_nonzero(t.mask)) for t in truths]
    small_flags = [a < small_bound ** 2 for a in truth_areas]
    large_flags = [a > large_bound ** 2 for a in truth_areas]

    # IoU candidates per prediction against same-image same-class truths
    truth_index: dict = {}
    for j, t in enumerate(truths):
        truth_index.setdefault((t.image_ref, t.class_label), []).append(j)
    candidates = []
    for p in ordered:
        pairs = []
        for j in truth_index.get((p.image_ref, p.class_label), ()):
            t = truths[j]
            if t.mask.shape != p.mask.shape:
                raise DimensionMismatch(
                    f"mask shapes differ on image {p.image_ref!r}: "
                    f"{p.mask.shape} vs {t.mask.shape}"
                )
            iou = mask_iou(p.mask, t.mask)
            if iou > 0.0:
                pairs.append((j, iou))
        candidates.append(pairs)

    total_truths = len(truths)
    ap_sum: dict = {c: 0.0 for c in classes}
    ps_values = []
    pl_values = []
    recall_per_threshold = []
    diagnostics = {}

    for t_idx, threshold in enumerate(thresholds):
        matched_truth = [-1] * total_truths   # truth j -> index into ordered
        match_of = [-1] * len(ordered)        # ordered i -> truth j
        for i, pairs in enumerate(candidates):
            best_j = -1
            best_iou = 0.0
            for j, iou in pairs:
                if matched_truth[j] >= 0:
                    continue
                if iou >= threshold and iou > best_iou:
                    best_iou = iou
                    best_j = j
            if best_j >= 0:
                matched_truth[best_j] = i
                match_of[i] = best_j

        matched_count = sum(1 for j in matched_truth if j >= 0)
        recall_per_threshold.append(
            matched_count / total_truths if total_truths else 0.0
        )
        if t_idx == 0:
            diagnostics = {
                "tp": matched_count,
                "fp": len(ordered) - matched_count,
                "fn": total_truths - matched_count,
                "iou_threshold": threshold,
            }

        for c in classes:
            flags = [
                match_of[i] >= 0
                for i, p in enumerate(ordered)
                if p.class_label == c
            ]
            n_truth = sum(1 for t in truths if t.class_label == c)
            ap_sum[c] += _interpolated_ap(flags, n_truth)

        ps_values.append(
            _restricted_ap(ordered, truths, match_of, classes, small_flags)
        )
        pl_values.append(
            _restricted_ap(ordered, truths, match_of, classes, large_flags)
        )

    per_class = {c: ap_sum[c] / len(thresholds) for c in classes}
    ap = float(np.mean([per_class[c] for c in classes])) if classes else 0.0
    ar = float(np.mean(recall_per_threshold)) if recall_per_threshold else 0.0
    ps = float(np.mean([v for v in ps_values if v is not None])) if any(
        v is not None for v in ps_values
    ) else 0.0
    pl = float(np.mean([v for v in pl_values if v is not None])) if any(
        v is not None for v in pl_values
    ) else 0.0
    return InstanceResult(
        ap=ap, ar=ar, ps=ps, pl=pl, per_class=per_class, diagnostics=diagnostics
    )


def _interpolated_ap(flags, n_truth: int) -> float:
    """101-point interpolated AP from ordered TP/FP flags."""
    if n_truth == 0:
        return 0.0
    if not flags:
        return 0.0
    flags = np.asarray(flags, dtype=bool)
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / n_truth
    precision = tp / (tp + fp)
    # precision envelope: best precision at recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _RECALL_GRID, side="left")
    interpolated = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(interpolated.mean())


def _restricted_ap(ordered, truths, match_of, classes, in_band) -> float | None:
    """AP over truths inside a size band, ignoring out-of-band matches.

    Predictions matched to an out-of-band truth are excluded; unmatched
    predictions remain false positives. Returns None when no class has an
    in-band truth (the restricted metric is undefined for this scene).
    """
    values = []
    for c in classes:
        n_truth = sum(
            1 for j, t in enumerate(truths) if t.class_label == c and in_band[j]
        )
        if n_truth == 0:
            continue
        flags = []
        for i, p in enumerate(ordered):
            if p.class_label != c:
                continue
            j = match_of[i]
            if j >= 0 and not in_band[j]:
                continue  # matched an out-of-band truth: ignored
            flags.append(j >= 0)
        values.append(_interpolated_ap(flags, n_truth))
    if not values:
        return None
    return float(np.mean(values))


# ===================== panoptic evaluation =====================

def panoptic_match_stats(pred: PanopticMap, truth: PanopticMap) -> PanopticStats:
    """Matches one predicted map against one truth map.

    Segments match iff their classes are equal and IoU > 0.5; the counts
    feed PQ/SQ/RQ and may be merged across images before finalizing.

    Raises:
        DimensionMismatch: the maps differ in shape.
    """
    if pred.segment_ids.shape != truth.segment_ids.shape:
        raise DimensionMismatch(
            f"panoptic map shapes differ: {pred.segment_ids.shape} vs "
            f"{truth.segment_ids.shape}"
        )
    t_flat = truth.segment_ids.reshape(-1).astype(np.int64)
    p_flat = pred.segment_ids.reshape(-1).astype(np.int64)

    t_ids, t_counts = np.unique(t_flat, return_counts=True)
    p_ids, p_counts = np.unique(p_flat, return_counts=True)
    t_area = dict(zip(t_ids.tolist(), t_counts.tolist()))
    p_area = dict(zip(p_ids.tolist(), p_counts.tolist()))

    offset = np.int64(1) << np.int64(32)
    combined, inter_counts = np.unique(t_flat * offset + p_flat, return_counts=True)
    intersections = {}
    for key, count in zip(combined.tolist(), inter_counts.tolist()):
        intersections[(key >> 32, key & 0xFFFFFFFF)] = count

    # candidate matches: same class, IoU > 0.5 (unique per side)
    stats = PanopticStats()
    matched_truth = set()
    matched_pred = set()
    candidates = []
    for (tid, pid), inter in intersections.items():
        t_class = truth.segments[tid][0]
        p_class = pred.segments[pid][0]
        if t_class != p_class:
            continue
        union = t_area[tid] + p_area[pid] - inter
        iou = inter / union
        if iou > 0.5:
            candidates.append((iou, tid, pid))
    for iou, tid, pid in sorted(candidates, key=lambda c: -c[0]):
        if tid in matched_truth or pid in matched_pred:
            continue  # cannot occur at IoU > 0.5; kept for greedy clarity
        matched_truth.add(tid)
        matched_pred.add(pid)
        label = truth.segments[tid][0]
        stats.iou_sum += iou
        stats.tp += 1
        bucket = stats.per_class.setdefault(label, [0.0, 0, 0, 0])
        bucket[0] += iou
        bucket[1] += 1

    for tid in t_ids.tolist():
        if tid not in matched_truth:
            stats.fn += 1
            bucket = stats.per_class.setdefault(truth.segments[tid][0], [0.0, 0, 0, 0])
            bucket[3] += 1
    for pid in p_ids.tolist():
        if pid not in matched_pred:
            stats.fp += 1
            bucket = stats.per_class.setdefault(pred.segments[pid][0], [0.0, 0, 0, 0])
            bucket[2] += 1
    return stats


def evaluate_panoptic(pred: PanopticMap, truth: PanopticMap) -> PanopticResult:
    """PQ/SQ/RQ for a single prediction/truth map pair."""
    return panoptic_match_stats(pred, truth).result()


def _pq_from_counts(iou_sum: float, tp: int, fp: int, fn: int):
    denominator = tp + 0.5 * fp + 0.5 * fn
    if denominator == 0:
        return 0.0, 0.0, 0.0
    sq = iou_sum / tp if tp > 0 else 0.0
    rq = tp / denominator
    pq = iou_sum / denominator
    return pq, sq, rq
