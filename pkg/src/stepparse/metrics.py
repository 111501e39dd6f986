"""Evaluation of discovered steps against reference segmentations.

Predicted steps carry arbitrary ids, so every metric first solves a
maximum-weight one-to-one matching between steps and reference labels
(Hungarian algorithm on the padded score matrix, allowing entries to stay
unmatched).  Among equally good matchings the lexicographically smallest
one is chosen: lowest step index first, then lowest label index, with a
real match preferred over staying unmatched.

Two scores are reported:

* frame IoU: intersection over union between each reference segment and
  the maximally overlapping contiguous run of its matched step, averaged
  over reference segments; unmatched labels contribute zero.
* mean average precision: frames of all videos ranked by the posterior
  probability of the matched step, averaged over reference labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import GroundTruth, ValidationError

_TIE_TOL = 1e-9


@dataclass
class LabelMatching:
    """One-to-one assignment between predicted steps and reference labels."""

    pairs: dict[int, int]  # step index -> label index
    score: float
    unmatched_steps: list[int]
    unmatched_labels: list[int]

    def label_to_step(self) -> dict[int, int]:
        return {g: k for k, g in self.pairs.items()}


def _assignment_score(matrix: np.ndarray) -> float:
    """Best total score over one-to-one matchings that may leave entries out."""
    n_rows, n_cols = matrix.shape
    # pad with zero-score dummies so rows and columns can stay unmatched
    padded = np.zeros((n_rows + n_cols, n_cols + n_rows))
    padded[:n_rows, :n_cols] = matrix
    rows, cols = linear_sum_assignment(padded, maximize=True)
    return float(padded[rows, cols].sum())


def _best_with_fixed(matrix: np.ndarray, fixed: Mapping[int, int],
                     dropped_rows: Sequence[int]) -> float:
    """Best total with some rows pinned to columns and others excluded."""
    n_rows, n_cols = matrix.shape
    used_cols = set(fixed.values())
    rows_left = [
        r for r in range(n_rows) if r not in fixed and r not in dropped_rows
    ]
    cols_left = [c for c in range(n_cols) if c not in used_cols]
    base = sum(matrix[r, c] for r, c in fixed.items())
    if rows_left and cols_left:
        base += _assignment_score(matrix[np.ix_(rows_left, cols_left)])
    return float(base)


def match_labels(score_matrix: np.ndarray) -> LabelMatching:
    """Maximum-score matching with deterministic lexicographic tie-breaks.

    Row by row, each step is pinned to the lowest-index label that keeps
    the optimal total attainable; if none does, the step stays unmatched.
    """
    matrix = np.asarray(score_matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValidationError(f"score matrix must be non-empty 2-d, got {matrix.shape}")
    if not np.isfinite(matrix).all():
        raise ValidationError("score matrix has non-finite entries")
    best_total = _assignment_score(matrix)
    tol = _TIE_TOL * max(1.0, abs(best_total))
    fixed: dict[int, int] = {}
    dropped: list[int] = []
    for r in range(matrix.shape[0]):
        choice = None
        for c in range(matrix.shape[1]):
            if c in fixed.values():
                continue
            trial = dict(fixed)
            trial[r] = c
            if _best_with_fixed(matrix, trial, dropped) >= best_total - tol:
                choice = c
                break
        if choice is None:
            dropped.append(r)
        else:
            fixed[r] = choice
    score = float(sum(matrix[r, c] for r, c in fixed.items()))
    return LabelMatching(
        pairs=fixed,
        score=score,
        unmatched_steps=sorted(dropped),
        unmatched_labels=[c for c in range(matrix.shape[1])
                          if c not in fixed.values()],
    )


# ---------------------------------------------------------------------------
# frame IoU over pooled frames and per-segment contiguous runs


def _validate_predictions(predictions: Mapping[str, np.ndarray],
                          gt: GroundTruth) -> None:
    if not gt.segments:
        raise ValidationError("ground truth is empty")
    gt.validate()
    for vid, segs in gt.segments.items():
        if vid not in predictions:
            raise ValidationError(f"no predictions for video {vid!r}")
        t_len = len(predictions[vid])
        for start, end, _ in segs:
            if end > t_len:
                raise ValidationError(
                    f"video {vid!r}: segment [{start}, {end}) outside the "
                    f"{t_len} predicted frames"
                )


def _step_ids(predictions: Mapping[str, np.ndarray]) -> list[int]:
    ids: set[int] = set()
    for arr in predictions.values():
        ids.update(int(v) for v in np.unique(arr) if v >= 0)
    if not ids:
        raise ValidationError("predictions contain no step assignments")
    return sorted(ids)


def _pooled_iou_matrix(predictions: Mapping[str, np.ndarray], gt: GroundTruth,
                       steps: list[int], labels: list[str]) -> np.ndarray:
    video_order = sorted(gt.segments)
    step_pos = {k: i for i, k in enumerate(steps)}
    label_pos = {g: i for i, g in enumerate(labels)}
    inter = np.zeros((len(steps), len(labels)))
    step_sizes = np.zeros(len(steps))
    label_sizes = np.zeros(len(labels))
    for vid in video_order:
        pred = np.asarray(predictions[vid])
        lab = np.full(pred.shape[0], -1)
        for start, end, name in gt.segments[vid]:
            lab[start:end] = label_pos[name]
        for i, k in enumerate(steps):
            sel = pred == k
            step_sizes[i] += int(sel.sum())
            for g in range(len(labels)):
                inter[i, g] += int((sel & (lab == g)).sum())
        for g in range(len(labels)):
            label_sizes[g] += int((lab == g).sum())
    union = step_sizes[:, None] + label_sizes[None, :] - inter
    with np.errstate(invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return iou


def _runs(pred: np.ndarray, step: int) -> list[tuple[int, int]]:
    """Maximal contiguous half-open runs where ``pred == step``."""
    runs = []
    start = None
    for t, v in enumerate(pred):
        if v == step and start is None:
            start = t
        elif v != step and start is not None:
            runs.append((start, t))
            start = None
    if start is not None:
        runs.append((start, len(pred)))
    return runs


def iou_cms(
    predictions: Mapping[str, np.ndarray],
    gt: GroundTruth,
    return_matching: bool = False,
):
    """Mean segment IoU after matching steps to labels on pooled frames.

    Each reference segment scores the best interval IoU achieved by any
    contiguous run of its matched step within the same video; segments of
    unmatched labels score zero.  The mean runs over all reference
    segments of all videos.
    """
    predictions = {k: np.asarray(v, dtype=np.int64) for k, v in predictions.items()}
    _validate_predictions(predictions, gt)
    steps = _step_ids(predictions)
    labels = gt.labels()
    matrix = _pooled_iou_matrix(predictions, gt, steps, labels)
    matching = match_labels(matrix)
    label_to_step = {
        labels[g]: steps[k] for k, g in matching.pairs.items()
    }
    scores = []
    for vid in sorted(gt.segments):
        pred = predictions[vid]
        for start, end, name in gt.segments[vid]:
            step = label_to_step.get(name)
            if step is None:
                scores.append(0.0)
                continue
            best = 0.0
            for r0, r1 in _runs(pred, step):
                inter = min(end, r1) - max(start, r0)
                if inter <= 0:
                    continue
                union = (end - start) + (r1 - r0) - inter
                best = max(best, inter / union)
            scores.append(best)
    value = float(np.mean(scores))
    if return_matching:
        return value, matching
    return value


# ---------------------------------------------------------------------------
# mean average precision from posterior frame rankings


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float:
    """Interpolated average precision of a ranked binary list.

    Frames are ranked by descending score (ties to the earlier frame);
    precision is interpolated to be non-increasing before averaging over
    the recall steps at each positive.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise ValidationError("scores and positives must be equal-length vectors")
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise ValidationError("no positive frames for average precision")
    order = np.argsort(-scores, kind="stable")
    hits = positives[order]
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(scores) + 1)
    # non-increasing envelope, then average precision at each positive
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(envelope[hits].sum() / n_pos)


def map_cms(
    posteriors: Mapping[str, np.ndarray],
    predictions: Mapping[str, np.ndarray],
    gt: GroundTruth,
    return_matching: bool = False,
):
    """Mean average precision over reference labels after matching.

    For every step the frames of all evaluated videos are pooled and
    ranked by the step's posterior probability; the AP matrix over
    (step, label) pairs is matched one-to-one and the mean AP of matched
    labels is returned, unmatched labels contributing zero.
    """
    predictions = {k: np.asarray(v, dtype=np.int64) for k, v in predictions.items()}
    _validate_predictions(predictions, gt)
    video_order = sorted(gt.segments)
    widths = set()
    for vid in video_order:
        if vid not in posteriors:
            raise ValidationError(f"no posteriors for video {vid!r}")
        post = np.asarray(posteriors[vid])
        if post.ndim != 2 or post.shape[0] != len(predictions[vid]):
            raise ValidationError(
                f"video {vid!r}: posterior shape {post.shape} does not cover "
                f"{len(predictions[vid])} frames"
            )
        widths.add(post.shape[1])
    if len(widths) != 1:
        raise ValidationError(f"inconsistent posterior widths {sorted(widths)}")
    n_steps = widths.pop()
    labels = gt.labels()
    label_pos = {g: i for i, g in enumerate(labels)}
    pooled_scores = np.concatenate(
        [np.asarray(posteriors[vid], dtype=np.float64) for vid in video_order]
    )
    pooled_labels = np.concatenate([
        _frame_labels(predictions[vid].shape[0], gt.segments[vid], label_pos)
        for vid in video_order
    ])
    ap = np.zeros((n_steps, len(labels)))
    for g in range(len(labels)):
        positives = pooled_labels == g
        for k in range(n_steps):
            ap[k, g] = average_precision(pooled_scores[:, k], positives)
    matching = match_labels(ap)
    per_label = {g: 0.0 for g in range(len(labels))}
    for k, g in matching.pairs.items():
        per_label[g] = float(ap[k, g])
    value = float(np.mean([per_label[g] for g in range(len(labels))]))
    if return_matching:
        return value, matching
    return value


def _frame_labels(t_len: int, segments: Sequence[tuple[int, int, str]],
                  label_pos: Mapping[str, int]) -> np.ndarray:
    lab = np.full(t_len, -1, dtype=np.int64)
    for start, end, name in segments:
        lab[start:end] = label_pos[name]
    return lab


# ---------------------------------------------------------------------------
# report container


@dataclass
class MetricsReport:
    """Everything the evaluation stage publishes."""

    iou: float
    mean_ap: float | None
    n_steps: int
    n_labels: int
    step_ids: list[int] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    iou_pairs: dict[int, str] = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "iou_cms": self.iou,
            "map_cms": self.mean_ap,
            "n_steps": self.n_steps,
            "n_labels": self.n_labels,
            "step_ids": list(self.step_ids),
            "labels": list(self.labels),
            "iou_matching": {str(k): v for k, v in sorted(self.iou_pairs.items())},
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "MetricsReport":
        return cls(
            iou=float(payload["iou_cms"]),
            mean_ap=(None if payload.get("map_cms") is None
                     else float(payload["map_cms"])),
            n_steps=int(payload.get("n_steps", 0)),
            n_labels=int(payload.get("n_labels", 0)),
            step_ids=[int(v) for v in payload.get("step_ids", [])],
            labels=[str(v) for v in payload.get("labels", [])],
            iou_pairs={int(k): str(v)
                       for k, v in payload.get("iou_matching", {}).items()},
        )


def evaluate(
    predictions: Mapping[str, np.ndarray],
    gt: GroundTruth,
    posteriors: Mapping[str, np.ndarray] | None = None,
) -> MetricsReport:
    """Compute all applicable metrics in one pass."""
    iou, matching = iou_cms(predictions, gt, return_matching=True)
    steps = _step_ids({k: np.asarray(v) for k, v in predictions.items()})
    labels = gt.labels()
    mean_ap = None
    if posteriors is not None:
        mean_ap = map_cms(posteriors, predictions, gt)
    return MetricsReport(
        iou=iou,
        mean_ap=mean_ap,
        n_steps=len(steps),
        n_labels=len(labels),
        step_ids=steps,
        labels=labels,
        iou_pairs={steps[k]: labels[g] for k, g in matching.pairs.items()},
    )
