import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixsort.geometry import BoundingBox, Detection, iou, iou_matrix, uncovered_ratio


def test_iou_hand_cases():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(100, 100, 5, 5)) == 0.0
    assert iou(a, BoundingBox(5, 0, 10, 10)) == pytest.approx(50 / 150, abs=1e-15)


def test_touching_boxes_have_zero_overlap():
    assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(10, 0, 10, 10)) == 0.0


def test_iou_matrix_shapes_and_values():
    b = BoundingBox(0, 0, 10, 10)
    assert iou_matrix([], [b]).shape == (0, 1)
    assert iou_matrix([b], [b]).tolist() == [[1.0]]
    rows = [BoundingBox(0, 0, 10, 10), BoundingBox(0, 0, 20, 20)]
    cols = [BoundingBox(5, 0, 10, 10), BoundingBox(0, 0, 10, 20)]
    expected = [[50 / 150, 100 / 200], [100 / 400, 200 / 400]]
    np.testing.assert_allclose(iou_matrix(rows, cols), expected, atol=1e-15)


@pytest.mark.parametrize("bad", [(0, 0, 0, 5), (0, 0, 5, -1), (math.nan, 0, 5, 5), (0, math.inf, 5, 5)])
def test_box_rejects_degenerate(bad):
    with pytest.raises(ValueError):
        BoundingBox(*bad)


def test_detection_contract():
    b = BoundingBox(0, 0, 10, 10)
    with pytest.raises(ValueError):
        Detection(b, 1.5, 1)
    with pytest.raises(ValueError):
        Detection(b, 0.5, 0)
    assert Detection(b, 0.5, 3, payload=1) == Detection(b, 0.5, 3, payload=2)


def test_uncovered_ratio_examples():
    t = BoundingBox(0, 0, 10, 10)
    assert uncovered_ratio(t, []) == 1.0
    assert uncovered_ratio(t, [t]) == 0.0
    assert uncovered_ratio(t, [BoundingBox(0, 0, 5, 10), BoundingBox(0, 0, 10, 5)]) == pytest.approx(0.25, abs=1e-15)


def _raster_uncovered(target, others):
    """Count uncovered unit pixels; exact for integer boxes."""
    x0, y0 = int(target.left), int(target.top)
    mask = np.zeros((int(target.height), int(target.width)), dtype=bool)
    for o in others:
        l = max(int(o.left) - x0, 0)
        t = max(int(o.top) - y0, 0)
        r = min(int(o.right) - x0, mask.shape[1])
        b = min(int(o.bottom) - y0, mask.shape[0])
        if r > l and b > t:
            mask[t:b, l:r] = True
    return 1.0 - mask.mean()


def test_uncovered_ratio_matches_rasterization(rng):
    for _ in range(300):
        tw, th = rng.integers(1, 65, size=2)
        target = BoundingBox(0, 0, float(tw), float(th))
        others = []
        for _ in range(rng.integers(0, 6)):
            w, h = rng.integers(1, 65, size=2)
            x, y = rng.integers(-40, 64, size=2)
            others.append(BoundingBox(float(x), float(y), float(w), float(h)))
        assert abs(uncovered_ratio(target, others) - _raster_uncovered(target, others)) < 1e-6


def test_uncovered_ratio_monotone_as_boxes_are_added(rng):
    for _ in range(100):
        target = BoundingBox(*rng.uniform(0, 50, 2), *rng.uniform(5, 40, 2))
        others, prev = [], 1.0
        for _ in range(8):
            others.append(BoundingBox(*rng.uniform(-20, 80, 2), *rng.uniform(1, 30, 2)))
            cur = uncovered_ratio(target, others)
            assert cur <= prev + 1e-12
            prev = cur


coord = st.floats(-1e3, 1e3, allow_nan=False)
size = st.floats(1e-2, 500, allow_nan=False)
boxes = st.builds(BoundingBox, coord, coord, size, size)


@settings(max_examples=300, deadline=None)
@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0
    assert iou(a, a) == 1.0
