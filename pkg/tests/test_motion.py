import numpy as np
import pytest

from mixsort.exceptions import KalmanError
from mixsort.geometry import BoundingBox, iou
from mixsort.motion import (
    KalmanState,
    box_to_xyah,
    kf_initiate,
    kf_predict,
    kf_update,
    oc_reupdate,
    ocm_direction_cost,
    state_to_box,
)


def _ramp(n, vx=3.0, vy=1.0, w=20.0, h=40.0):
    return [BoundingBox(vx * f, vy * f, w, h) for f in range(n)]


def _run(boxes):
    s = kf_initiate(boxes[0])
    for b in boxes[1:]:
        s = kf_update(kf_predict(s), b)
    return s


def test_initiate_layout():
    s = kf_initiate(BoundingBox(0, 0, 10, 20))
    np.testing.assert_array_equal(s.mean, [5, 10, 0.5, 20, 0, 0, 0, 0])
    assert np.all(np.diag(s.covariance) > 0)


def test_predict_applies_velocity():
    s = kf_initiate(BoundingBox(0, 0, 10, 20))
    assert np.array_equal(kf_predict(s).mean[:4], s.mean[:4])
    mean = s.mean.copy()
    mean[4] = 2.0
    moved = kf_predict(KalmanState(mean, s.covariance))
    assert moved.mean[:2].tolist() == [7.0, 10.0]


def test_update_with_projected_mean_is_a_no_op_on_the_mean():
    s = kf_predict(kf_initiate(BoundingBox(3, 4, 10, 20)))
    u = kf_update(s, state_to_box(s))
    np.testing.assert_allclose(u.mean, s.mean, atol=1e-12)
    assert np.trace(u.covariance) < np.trace(s.covariance)


def test_noise_scales_with_height():
    small = kf_initiate(BoundingBox(0, 0, 10, 20))
    big = kf_initiate(BoundingBox(0, 0, 20, 40))
    ratio = np.sqrt(np.diag(big.covariance) / np.diag(small.covariance))
    # position and velocity entries scale with height; aspect entries do not
    np.testing.assert_allclose(ratio[[0, 1, 3, 4, 5, 7]], 2.0)
    np.testing.assert_allclose(ratio[[2, 6]], 1.0)


def test_constant_velocity_convergence():
    """Noise-free ramp: prediction error decays geometrically."""
    boxes = _ramp(80)
    s = kf_initiate(boxes[0])
    errs, ious = [], []
    for b in boxes[1:]:
        p = kf_predict(s)
        pb = state_to_box(p)
        errs.append(np.hypot(pb.center[0] - b.center[0], pb.center[1] - b.center[1]))
        ious.append(iou(pb, b))
        s = kf_update(p, b)
    errs = np.array(errs)
    assert np.all(np.diff(errs[5:]) < 0)
    assert errs[10] < 0.5 * errs[2]
    assert ious[20] > 0.99
    # the error keeps shrinking and eventually drops below 1e-3 px
    first_below = int(np.argmax(errs < 1e-3)) + 1
    assert errs[-1] < 1e-3 and first_below <= 60


def test_covariance_stays_symmetric_psd(rng):
    for _ in range(20):
        s = kf_initiate(BoundingBox(*rng.uniform(0, 500, 2), *rng.uniform(5, 100, 2)))
        for _ in range(100):
            if rng.random() < 0.5:
                s = kf_predict(s)
            else:
                s = kf_update(s, BoundingBox(*rng.uniform(0, 500, 2), *rng.uniform(5, 100, 2)))
            np.testing.assert_allclose(s.covariance, s.covariance.T, atol=0)
            assert np.linalg.eigvalsh(s.covariance).min() >= -1e-9


def test_update_rejects_broken_covariance():
    s = kf_initiate(BoundingBox(0, 0, 10, 20))
    bad = KalmanState(s.mean, -np.eye(8))
    with pytest.raises(KalmanError):
        kf_update(bad, BoundingBox(0, 0, 10, 20))


def test_oru_gap_one_is_plain_predict_update():
    s = _run(_ramp(6))
    last, new = BoundingBox(15, 5, 20, 40), BoundingBox(18, 6, 20, 40)
    a = oc_reupdate(s, last, new, 1)
    b = kf_update(kf_predict(s), new)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.covariance, b.covariance)


def test_oru_on_a_line_lands_on_the_new_observation():
    boxes = _ramp(124)
    s = _run(boxes[:120])
    out = oc_reupdate(s, boxes[119], boxes[123], 4)
    c = state_to_box(out).center
    assert abs(c[0] - boxes[123].center[0]) < 1e-6
    assert abs(c[1] - boxes[123].center[1]) < 1e-6


def test_oru_beats_blind_prediction_after_a_gap():
    # track heads right, disappears, comes back having turned upwards
    s = _run(_ramp(10, vx=4, vy=0))
    last = BoundingBox(36, 0, 20, 40)
    new = BoundingBox(36, -40, 20, 40)
    oru = oc_reupdate(s, last, new, 5)
    blind = s
    for _ in range(5):
        blind = kf_predict(blind)
    blind = kf_update(blind, new)
    nxt = BoundingBox(36, -48, 20, 40)
    assert iou(state_to_box(kf_predict(oru)), nxt) > iou(state_to_box(kf_predict(blind)), nxt)


def test_oru_rejects_nonpositive_gap():
    s = kf_initiate(BoundingBox(0, 0, 10, 10))
    with pytest.raises(ValueError):
        oc_reupdate(s, BoundingBox(0, 0, 10, 10), BoundingBox(1, 0, 10, 10), 0)


def test_direction_cost_cases():
    hist = [BoundingBox(float(x), 0, 10, 10) for x in (0, 2, 4, 6)]
    assert ocm_direction_cost(hist, BoundingBox(8, 0, 10, 10)) == 0.0
    assert ocm_direction_cost(hist, BoundingBox(4, 0, 10, 10)) == pytest.approx(1.0, abs=1e-12)
    assert ocm_direction_cost(hist, BoundingBox(6, 5, 10, 10)) == pytest.approx(0.5, abs=1e-12)
    assert ocm_direction_cost(hist[:1], BoundingBox(0, 9, 10, 10)) == 0.0


def test_xyah_round_trip():
    b = BoundingBox(1.5, -2.0, 12.0, 30.0)
    s = kf_initiate(b)
    assert box_to_xyah(b).tolist() == [7.5, 13.0, 0.4, 30.0]
    r = state_to_box(s)
    assert r.as_tuple() == pytest.approx(b.as_tuple(), abs=1e-12)
