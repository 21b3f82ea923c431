import itertools
import json
import math

import numpy as np
import pytest

from mixsort.geometry import BoundingBox
from mixsort.metrics import (
    HOTA_THRESHOLDS,
    aggregate,
    clear_mot,
    evaluate,
    frame_matching,
    hota,
    idf1,
    report_to_json,
    reports_to_csv,
)


def brute_idf1(gt, pred, thr=0.5):
    """IDF1 by enumerating every partial bijection between gt and pred ids."""
    from mixsort.geometry import iou

    g_ids = sorted({g for f in gt.values() for g in f})
    p_ids = sorted({p for f in pred.values() for p in f})
    n_gt = sum(len(f) for f in gt.values())
    n_pr = sum(len(f) for f in pred.values())
    best = 0
    p_pad = p_ids + [None] * len(g_ids)
    for perm in itertools.permutations(p_pad, len(g_ids)):
        tp = 0
        for g, p in zip(g_ids, perm):
            if p is None:
                continue
            tp += sum(1 for f in gt if g in gt[f] and p in pred.get(f, {}) and iou(gt[f][g], pred[f][p]) >= thr)
        best = max(best, tp)
    return 2 * best / (n_gt + n_pr)


def random_sequence(rng, n_frames=12, n_ids=3, jitter=4.0, drop=0.2):
    gt, pred = {}, {}
    for f in range(1, n_frames + 1):
        gt[f], pred[f] = {}, {}
        for i in range(n_ids):
            box = BoundingBox(60.0 * i + 3 * f, 20.0 * (i % 2), 30, 60)
            gt[f][i + 1] = box
            if rng.random() > drop:
                pid = 10 + (i + (f > n_frames // 2 and rng.random() < 0.3)) % n_ids
                if pid in pred[f]:
                    pid = 50 + i
                pred[f][pid] = BoundingBox(box.left + rng.normal(0, jitter), box.top + rng.normal(0, jitter), 30, 60)
    return gt, pred


def test_frame_matching_cases():
    a = [BoundingBox(0, 0, 10, 10), BoundingBox(100, 0, 10, 10)]
    assert sorted((g, p) for g, p, _ in frame_matching(a, a)) == [(0, 0), (1, 1)]
    assert frame_matching(a, [BoundingBox(500, 500, 5, 5)]) == []
    crossed = [BoundingBox(98, 0, 10, 10), BoundingBox(2, 0, 10, 10)]
    assert sorted((g, p) for g, p, _ in frame_matching(a, crossed)) == [(0, 1), (1, 0)]


def test_frame_matching_maximizes_total_iou(rng):
    from mixsort.geometry import iou

    for _ in range(200):
        g = [BoundingBox(*rng.uniform(0, 30, 2), 20, 20) for _ in range(2)]
        p = [BoundingBox(*rng.uniform(0, 30, 2), 20, 20) for _ in range(2)]
        got = sum(v for _, _, v in frame_matching(g, p, 0.05))
        best = max(sum(iou(g[i], p[j]) for i, j in enumerate(perm) if iou(g[i], p[j]) >= 0.05)
                   for perm in itertools.permutations(range(2)))
        assert got == pytest.approx(best, abs=1e-12)


def test_perfect_prediction(swap_case):
    gt, _ = swap_case
    r = evaluate(gt, gt)
    for v in (r.hota, r.deta, r.assa, r.loca, r.idf1, r.mota):
        assert v == 1.0
    assert r.id_switches == 0 and r.fragmentations == 0


def test_empty_prediction(swap_case):
    gt, _ = swap_case
    assert clear_mot(gt, {})["mota"] == 0.0
    assert idf1(gt, {}) == 0.0
    assert hota(gt, {})["hota"] == 0.0


def test_swap_case_clear(swap_case):
    gt, pred = swap_case
    c = clear_mot(gt, pred)
    assert c["mota"] == pytest.approx(0.9, abs=1e-15)
    assert c["id_switches"] == 2
    assert c["fragmentations"] == 0


def test_swap_case_idf1_against_enumeration(swap_case):
    gt, pred = swap_case
    assert idf1(gt, pred) == brute_idf1(gt, pred) == 0.5


def test_swap_case_hota(swap_case):
    gt, pred = swap_case
    h = hota(gt, pred)
    # every true positive sees 5 matching frames out of 10 + 10 - 5
    assert h["deta"] == 1.0
    assert h["assa"] == pytest.approx(1 / 3, abs=1e-12)
    assert h["hota"] == pytest.approx(math.sqrt(1 / 3), abs=1e-12)


def test_hota_is_geometric_mean_per_threshold(rng):
    for _ in range(20):
        gt, pred = random_sequence(rng)
        h = hota(gt, pred)
        np.testing.assert_allclose(h["hota_per_alpha"], np.sqrt(h["deta_per_alpha"] * h["assa_per_alpha"]),
                                   rtol=0, atol=1e-12)
        assert len(h["per_alpha"]) == 19 and h["per_alpha"][0][0] == 0.05


def test_idf1_matches_enumeration_on_random_sequences(rng):
    for _ in range(30):
        gt, pred = random_sequence(rng)
        assert idf1(gt, pred) == pytest.approx(brute_idf1(gt, pred), abs=1e-12)


def test_mota_can_go_negative():
    gt = {1: {1: BoundingBox(0, 0, 10, 10)}}
    pred = {1: {k: BoundingBox(100.0 * k, 100, 10, 10) for k in range(1, 4)}}
    assert clear_mot(gt, pred)["mota"] == -3.0


def test_fragmentation_counts_restarts():
    box = BoundingBox(0, 0, 10, 10)
    gt = {f: {1: box} for f in range(1, 8)}
    pred = {f: {5: box} for f in (1, 2, 4, 6, 7)}
    assert clear_mot(gt, pred)["fragmentations"] == 2


def test_invariances(rng):
    for _ in range(10):
        gt, pred = random_sequence(rng)
        base = evaluate(gt, pred).summary()
        shifted = evaluate({f + 100: v for f, v in gt.items()}, {f + 100: v for f, v in pred.items()})
        relabel = {p: 1000 - p for f in pred.values() for p in f}
        renamed = evaluate(gt, {f: {relabel[p]: b for p, b in v.items()} for f, v in pred.items()})
        assert shifted.summary() == base
        for k, v in renamed.summary().items():
            assert v == pytest.approx(base[k], abs=1e-12)


def test_swapping_equal_predictions_is_fair(swap_case):
    gt, pred = swap_case
    flipped = {f: {20 if p == 10 else 10: b for p, b in v.items()} for f, v in pred.items()}
    a, b = evaluate(gt, pred), evaluate(gt, flipped)
    assert a.summary() == b.summary()


def test_ratios_in_unit_interval(rng):
    for _ in range(20):
        r = evaluate(*random_sequence(rng, drop=0.4, jitter=8))
        for v in (r.hota, r.deta, r.assa, r.loca, r.idf1):
            assert 0.0 <= v <= 1.0


def test_aggregate_single_and_duplicate(rng):
    gt, pred = random_sequence(rng)
    one = evaluate(gt, pred)
    assert aggregate([one]).summary() == pytest.approx(one.summary())
    twice = aggregate([one, one]).summary()
    for k, v in one.summary().items():
        expected = 2 * v if k in ("id_switches", "fragmentations") else v
        assert twice[k] == pytest.approx(expected, abs=1e-12)


def test_aggregate_equals_concatenated_sequence(rng):
    for _ in range(10):
        gt1, pr1 = random_sequence(rng)
        gt2, pr2 = random_sequence(rng, n_frames=9, n_ids=2)
        off = 1000
        gt = {**gt1, **{f + off: {g + 100: b for g, b in v.items()} for f, v in gt2.items()}}
        pr = {**pr1, **{f + off: {p + 100: b for p, b in v.items()} for f, v in pr2.items()}}
        pooled = aggregate([evaluate(gt1, pr1), evaluate(gt2, pr2)]).summary()
        direct = evaluate(gt, pr).summary()
        for k in direct:
            assert pooled[k] == pytest.approx(direct[k], abs=1e-12), k


def test_report_serialization(swap_case):
    gt, pred = swap_case
    r = evaluate(gt, pred, name="swap")
    doc = json.loads(report_to_json([r], aggregate([r])))
    assert doc["sequences"][0]["name"] == "swap"
    assert len(doc["sequences"][0]["per_alpha"]) == len(HOTA_THRESHOLDS)
    lines = reports_to_csv([r], aggregate([r])).splitlines()
    assert lines[0].startswith("name,hota") and lines[1].startswith("swap,") and lines[2].startswith("COMBINED,")


def test_dropping_every_other_prediction():
    box = BoundingBox(0, 0, 20, 40)
    gt = {f: {1: box} for f in range(1, 11)}
    pred = {f: {7: box} for f in range(1, 11, 2)}
    h = hota(gt, pred)
    # TP 5, FN 5, FP 0; each TP pair: TPA 5, FNA 5, FPA 0
    assert h["deta"] == 0.5
    assert h["assa"] == 0.5
    assert h["loca"] == 1.0
