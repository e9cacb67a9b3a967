"""Evaluation: IoU-thresholded greedy matching, precision/recall/F1 averaged
over thresholds, and BLEU4 over matched caption pairs."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .geometry import TemporalInterval

DEFAULT_THRESHOLDS = (0.3, 0.5, 0.7, 0.9)


@dataclass
class PredictedEvent:
    interval: TemporalInterval
    confidence: float
    tokens: list[int] = field(default_factory=list)


@dataclass
class EvalReport:
    per_threshold: dict[float, tuple[float, float]]  # tau -> (precision, recall)
    precision: float
    recall: float
    f1: float
    bleu4: float
    per_video: list[dict] = field(default_factory=list)
    zero_predictions: bool = False

    def as_dict(self) -> dict:
        return {
            "per_threshold": {
                str(t): {"precision": p, "recall": r} for t, (p, r) in self.per_threshold.items()
            },
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "bleu4": self.bleu4,
            "zero_predictions": self.zero_predictions,
        }


def match_at_threshold(
    preds: list[PredictedEvent],
    gts: list[TemporalInterval],
    tau: float,
) -> list[tuple[int, int]]:
    """Greedy matching in descending confidence order (ties: earlier start,
    then index); each ground truth matches at most one prediction and a pair
    is kept iff IoU >= tau."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {tau}")
    order = sorted(
        range(len(preds)),
        key=lambda i: (-preds[i].confidence, preds[i].interval.start, i),
    )
    taken = [False] * len(gts)
    pairs = []
    for i in order:
        best_j, best_iou = -1, 0.0
        for j, gt in enumerate(gts):
            if taken[j]:
                continue
            iou = preds[i].interval.iou(gt)
            if iou > best_iou:
                best_j, best_iou = j, iou
        if best_j >= 0 and best_iou >= tau:
            taken[best_j] = True
            pairs.append((i, best_j))
    return pairs


def ngram_counts(tokens: list[int], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: list[int], reference: list[int]) -> float:
    """BLEU4 with add-one smoothing on the higher-order (n >= 2) precisions.

    Single-reference; empty candidate scores 0.
    """
    if not reference:
        raise ValueError("bleu4 requires a nonempty reference")
    if not candidate:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        cand = ngram_counts(candidate, n)
        ref = ngram_counts(reference, n)
        clipped = sum(min(c, ref[g]) for g, c in cand.items())
        total = sum(cand.values())
        if n == 1:
            if clipped == 0:
                return 0.0
            p = clipped / total
        else:
            p = (clipped + 1) / (total + 1)
        log_sum += 0.25 * math.log(p)
    c, r = len(candidate), len(reference)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum)


def evaluate(
    predictions: list[list[PredictedEvent]],
    ground_truths: list[list[tuple[TemporalInterval, list[int]]]],
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS,
) -> EvalReport:
    """Dataset-level report: micro precision/recall per threshold, F1 from the
    threshold-averaged precision and recall, BLEU4 averaged over matched pairs."""
    if len(predictions) != len(ground_truths):
        raise ValueError("predictions and ground truths must align per video")
    per_threshold: dict[float, tuple[float, float]] = {}
    bleu_scores: list[float] = []
    per_video: list[dict] = []
    n_preds_total = sum(len(p) for p in predictions)
    n_gts_total = sum(len(g) for g in ground_truths)

    for tau in thresholds:
        matched = 0
        for preds, gts in zip(predictions, ground_truths):
            pairs = match_at_threshold(preds, [g for g, _ in gts], tau)
            matched += len(pairs)
            for i, j in pairs:
                if gts[j][1]:
                    bleu_scores.append(bleu4(preds[i].tokens, gts[j][1]))
        precision = matched / n_preds_total if n_preds_total else 0.0
        recall = matched / n_gts_total if n_gts_total else 0.0
        per_threshold[tau] = (precision, recall)

    for vid, (preds, gts) in enumerate(zip(predictions, ground_truths)):
        per_video.append(
            {
                "video": vid,
                "n_preds": len(preds),
                "n_gts": len(gts),
                "matched@0.5": len(match_at_threshold(preds, [g for g, _ in gts], 0.5)),
            }
        )

    avg_p = sum(p for p, _ in per_threshold.values()) / len(thresholds)
    avg_r = sum(r for _, r in per_threshold.values()) / len(thresholds)
    f1 = 2 * avg_p * avg_r / (avg_p + avg_r) if (avg_p + avg_r) > 0 else 0.0
    avg_bleu = sum(bleu_scores) / len(bleu_scores) if bleu_scores else 0.0
    return EvalReport(
        per_threshold=per_threshold,
        precision=avg_p,
        recall=avg_r,
        f1=f1,
        bleu4=avg_bleu,
        per_video=per_video,
        zero_predictions=(n_preds_total == 0),
    )
