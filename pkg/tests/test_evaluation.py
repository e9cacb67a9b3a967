import math

import pytest

from conftest import reference_bleu4
from denseevents.evaluation import (
    PredictedEvent,
    bleu4,
    evaluate,
    match_at_threshold,
)
from denseevents.geometry import TemporalInterval


def pe(s, e, conf=1.0, tokens=()):
    return PredictedEvent(TemporalInterval.from_se(s, e), conf, list(tokens))


def gt(s, e, tokens=()):
    return (TemporalInterval.from_se(s, e), list(tokens))


class TestMatchAtThreshold:
    def test_exact_predictions_match_at_high_threshold(self):
        gts = [TemporalInterval.from_se(0.1, 0.3), TemporalInterval.from_se(0.5, 0.9)]
        preds = [pe(0.1, 0.3), pe(0.5, 0.9)]
        assert len(match_at_threshold(preds, gts, 0.9)) == 2

    def test_disjoint_no_pairs(self):
        gts = [TemporalInterval.from_se(0.0, 0.2)]
        preds = [pe(0.7, 0.9)]
        assert match_at_threshold(preds, gts, 0.3) == []

    def test_higher_confidence_wins_contested_gt(self):
        gts = [TemporalInterval.from_se(0.2, 0.6)]
        preds = [pe(0.2, 0.6, conf=0.4), pe(0.21, 0.61, conf=0.9)]
        pairs = match_at_threshold(preds, gts, 0.5)
        assert pairs == [(1, 0)]  # higher-confidence prediction takes the gt

    def test_monotone_in_threshold(self):
        gts = [TemporalInterval.from_se(0.1, 0.4), TemporalInterval.from_se(0.5, 0.8)]
        preds = [pe(0.12, 0.42, 0.9), pe(0.55, 0.75, 0.8), pe(0.0, 1.0, 0.7)]
        counts = [len(match_at_threshold(preds, gts, t)) for t in (0.3, 0.5, 0.7, 0.9)]
        assert counts == sorted(counts, reverse=True)

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            match_at_threshold([], [], 0.0)


class TestBleu4:
    def test_identity_scores_one(self):
        assert math.isclose(bleu4([1, 2, 3, 4, 5], [1, 2, 3, 4, 5]), 1.0)

    def test_no_overlap_scores_zero(self):
        assert bleu4([1, 2, 3, 4], [5, 6, 7, 8]) == 0.0

    def test_empty_candidate_scores_zero(self):
        assert bleu4([], [1, 2, 3]) == 0.0

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError):
            bleu4([1, 2], [])

    def test_against_independent_reference(self):
        cases = [
            (list("abcde"), list("abcdf")),
            (list("abcd"), list("abcd")),
            (list("aabb"), list("abab")),
            (list("abc"), list("abcdef")),
            (list("abcdefgh"), list("abcd")),
            ([1, 2], [1, 2, 3, 4]),
            ([7], [7, 8]),
        ]
        for cand, ref in cases:
            assert math.isclose(bleu4(cand, ref), reference_bleu4(cand, ref), rel_tol=1e-9), (
                cand,
                ref,
            )

    def test_random_against_independent_reference(self):
        import random

        rng = random.Random(0)
        for _ in range(500):
            cand = [rng.randrange(6) for _ in range(rng.randrange(1, 10))]
            ref = [rng.randrange(6) for _ in range(rng.randrange(1, 10))]
            got, want = bleu4(cand, ref), reference_bleu4(cand, ref)
            assert math.isclose(got, want, rel_tol=1e-9), (cand, ref, got, want)
            assert 0.0 <= got <= 1.0


class TestEvaluate:
    def test_perfect_predictions(self):
        gts = [[gt(0.1, 0.3, [5, 6, 7, 8]), gt(0.5, 0.9, [9, 10, 11, 12])]]
        preds = [[pe(0.1, 0.3, 1.0, [5, 6, 7, 8]), pe(0.5, 0.9, 1.0, [9, 10, 11, 12])]]
        report = evaluate(preds, gts)
        assert report.precision == 1.0 and report.recall == 1.0 and report.f1 == 1.0
        assert report.bleu4 == 1.0
        for p, r in report.per_threshold.values():
            assert p == 1.0 and r == 1.0

    def test_half_found(self):
        gts = [[gt(0.1, 0.3), gt(0.5, 0.9)]]
        preds = [[pe(0.1, 0.3, 1.0)]]
        report = evaluate(preds, gts)
        assert math.isclose(report.precision, 1.0)
        assert math.isclose(report.recall, 0.5)
        assert math.isclose(report.f1, 2.0 / 3.0)

    def test_partial_overlap_threshold_profile(self):
        # prediction [0.1, 0.5] vs gt [0.2, 0.6]: IoU = 0.3 / 0.5 = 0.6
        gts = [[gt(0.2, 0.6)]]
        preds = [[pe(0.1, 0.5, 1.0)]]
        report = evaluate(preds, gts)
        assert report.per_threshold[0.3] == (1.0, 1.0)
        assert report.per_threshold[0.5] == (1.0, 1.0)
        assert report.per_threshold[0.7] == (0.0, 0.0)
        assert report.per_threshold[0.9] == (0.0, 0.0)
        assert math.isclose(report.precision, 0.5)

    def test_zero_predictions_flagged(self):
        report = evaluate([[]], [[gt(0.1, 0.5)]])
        assert report.zero_predictions
        assert report.precision == 0.0 and report.recall == 0.0 and report.f1 == 0.0

    def test_order_invariance_with_tie_break(self):
        gts = [[gt(0.1, 0.3), gt(0.6, 0.8)]]
        a = [pe(0.1, 0.3, 0.7), pe(0.6, 0.8, 0.7)]
        r1 = evaluate([a], gts)
        r2 = evaluate([list(reversed(a))], gts)
        assert r1.per_threshold == r2.per_threshold

    def test_misaligned_lengths_rejected(self):
        with pytest.raises(ValueError):
            evaluate([[]], [])
