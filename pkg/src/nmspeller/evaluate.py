"""Sentence-level detection/correction metrics.

A sentence is flagged when the prediction differs from the source anywhere.
A detection hit is a flagged sentence whose changed positions equal the
gold error positions exactly; a correction hit additionally matches the
gold characters at those positions. Precision divides hits by flagged
sentences, recall by sentences that contain gold errors; F1 is the harmonic
mean (0 when P + R = 0).

``filter_chars`` drops, before any counting, every predicted or gold change
whose gold target character is in the set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InputError


@dataclass
class SentenceVerdict:
    flagged: bool
    has_gold_error: bool
    detection_hit: bool
    correction_hit: bool


@dataclass
class EvalReport:
    detection_precision: float
    detection_recall: float
    detection_f1: float
    correction_precision: float
    correction_recall: float
    correction_f1: float
    flagged_count: int
    gold_error_count: int
    detection_hit_count: int
    correction_hit_count: int
    sentence_count: int
    verdicts: list = field(default_factory=list, repr=False)

    def key_value_lines(self):
        keys = ("detection_precision", "detection_recall", "detection_f1",
                "correction_precision", "correction_recall", "correction_f1",
                "flagged_count", "gold_error_count", "detection_hit_count",
                "correction_hit_count", "sentence_count")
        return [f"{k}={getattr(self, k)}" for k in keys]

    def table(self):
        header = f"{'Level':<12}{'Pre':>8}{'Rec':>8}{'F1':>8}"
        det = (f"{'detection':<12}{100 * self.detection_precision:>8.2f}"
               f"{100 * self.detection_recall:>8.2f}{100 * self.detection_f1:>8.2f}")
        cor = (f"{'correction':<12}{100 * self.correction_precision:>8.2f}"
               f"{100 * self.correction_recall:>8.2f}{100 * self.correction_f1:>8.2f}")
        return "\n".join((header, det, cor))


def _f1(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ratio(numerator, denominator):
    return numerator / denominator if denominator else 0.0


def evaluate(predictions, golds, filter_chars=None):
    """Score predicted id sequences against gold SentencePairs.

    ``filter_chars`` is a set of character ids; changes whose gold target id
    is in the set are ignored on both the predicted and the gold side.
    """
    if len(predictions) != len(golds):
        raise InputError(f"{len(predictions)} predictions for {len(golds)} gold sentences")
    filter_chars = frozenset(filter_chars or ())

    verdicts = []
    flagged = gold_errors = det_hits = corr_hits = 0
    for pred, pair in zip(predictions, golds):
        pred = [int(t) for t in pred]
        if len(pred) != len(pair.source):
            raise InputError(
                f"prediction length {len(pred)} != sentence length {len(pair.source)}"
            )
        changed = {i for i, (p, s) in enumerate(zip(pred, pair.source))
                   if p != s and pair.target[i] not in filter_chars}
        gold_err = {i for i in pair.incrr_pos if pair.target[i] not in filter_chars}

        is_flagged = bool(changed)
        has_gold = bool(gold_err)
        det = is_flagged and changed == gold_err
        corr = det and all(pred[i] == pair.target[i] for i in changed)
        verdicts.append(SentenceVerdict(is_flagged, has_gold, det, corr))
        flagged += is_flagged
        gold_errors += has_gold
        det_hits += det
        corr_hits += corr

    det_p = _ratio(det_hits, flagged)
    det_r = _ratio(det_hits, gold_errors)
    cor_p = _ratio(corr_hits, flagged)
    cor_r = _ratio(corr_hits, gold_errors)
    return EvalReport(
        detection_precision=det_p,
        detection_recall=det_r,
        detection_f1=_f1(det_p, det_r),
        correction_precision=cor_p,
        correction_recall=cor_r,
        correction_f1=_f1(cor_p, cor_r),
        flagged_count=flagged,
        gold_error_count=gold_errors,
        detection_hit_count=det_hits,
        correction_hit_count=corr_hits,
        sentence_count=len(golds),
        verdicts=verdicts,
    )
