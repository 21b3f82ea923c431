import math

import numpy as np
import pytest
from PIL import Image

from mixsort.appearance import (
    FrameContext,
    HistogramProvider,
    ImageSource,
    NullProvider,
    OracleProvider,
    SearchRegion,
    Template,
    adaptive_sigma,
    focal_loss,
    focal_loss_gradient,
    gaussian_target,
    make_search_region,
    should_update_template,
    similarity_vector,
)
from mixsort.exceptions import ContractViolation
from mixsort.geometry import BoundingBox, Detection

LN2 = math.log(2.0)


def test_search_region_geometry():
    r = make_search_region(BoundingBox(0, 0, 10, 10), 4.5)
    assert r.center == (5.0, 5.0)
    assert r.side == pytest.approx(45.0, abs=1e-12)
    assert make_search_region(BoundingBox(3, 3, 8, 8), 1.0).side == 8.0


def test_pixel_grid_maps_are_inverse(rng):
    r = SearchRegion(frame=1, center=(100.0, 50.0), side=37.0, grid=56)
    for x, y in rng.uniform(-50, 200, size=(50, 2)):
        gx, gy = r.to_grid(x, y)
        assert r.to_pixel(gx, gy) == pytest.approx((x, y), abs=1e-9)


def test_gaussian_peak_and_sigma_distance():
    h = gaussian_target((28.3, 10.9), (12.0, 30.0), 56)
    assert h[10, 28] == 1.0
    assert (h == 1.0).sum() == 1
    sigma = adaptive_sigma((12.0, 30.0))
    assert sigma == 2.0
    assert h[10, 30] == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert adaptive_sigma((3.0, 3.0)) == 1.0


def test_gaussian_rejects_center_outside_grid():
    with pytest.raises(ContractViolation):
        gaussian_target((56.0, 3.0), (5, 5), 56)


def test_similarity_vector_contract():
    r = make_search_region(BoundingBox(0, 0, 10, 10), 4.5)
    gx, gy = r.to_grid(5.0, 5.0)
    heat = gaussian_target((gx, gy), (10, 10), r.grid, sigma=3.0)
    cell_w = 1.0 / r.scale
    px = r.to_pixel(math.floor(gx) + 3 + 0.5, math.floor(gy) + 0.5)
    dets = [
        Detection(BoundingBox.from_center(5.0, 5.0, 10, 10), 0.9, 1),
        Detection(BoundingBox.from_center(*px, 10, 10), 0.9, 1),
        Detection(BoundingBox.from_center(500.0, 5.0, 10, 10), 0.9, 1),
        Detection(BoundingBox.from_center(5.0 - 22.5 - cell_w / 10, 5.0, 10, 10), 0.9, 1),
    ]
    v = similarity_vector(heat, r, dets)
    assert v[0] == 1.0
    assert v[1] == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert v[2] == 0.0 and v[3] == 0.0


def test_focal_loss_hand_cases():
    pred = np.zeros((4, 4))
    target = np.zeros((4, 4))
    pred[1, 2] = 0.5
    target[1, 2] = 1.0
    assert abs(focal_loss(pred, target) - 0.25 * LN2) < 1e-9
    assert abs(focal_loss(np.array([[0.5]]), np.array([[0.5]])) - 0.0625 * 0.25 * LN2) < 1e-9


def test_focal_loss_zero_on_exact_binary_match():
    t = np.zeros((5, 5))
    t[2, 2] = 1.0
    assert focal_loss(t, t) < 1e-12
    assert focal_loss(np.full((5, 5), 0.3), t) > 0


def test_focal_loss_nonnegative(rng):
    for _ in range(50):
        t = gaussian_target(tuple(rng.uniform(0, 8, 2)), (rng.uniform(1, 8), rng.uniform(1, 8)), 8)
        assert focal_loss(rng.uniform(0, 1, (8, 8)), t) >= 0.0


def test_gradient_matches_central_differences(rng):
    step = 1e-5
    worst = 0.0
    for _ in range(100):
        t = gaussian_target(tuple(rng.uniform(0, 8, 2)), tuple(rng.uniform(1, 8, 2)), 8)
        p = rng.uniform(0.05, 0.95, (8, 8))
        analytic = focal_loss_gradient(p, t)
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            up, dn = p.copy(), p.copy()
            up[idx] += step
            dn[idx] -= step
            numeric[idx] = (focal_loss(up, t) - focal_loss(dn, t)) / (2 * step)
        worst = max(worst, np.abs(analytic - numeric).max() / np.abs(numeric).max())
    assert worst < 1e-5


def test_gradient_vanishes_at_satisfied_positive():
    g = focal_loss_gradient(np.array([[1.0 - 1e-7]]), np.array([[1.0]]))
    assert abs(g[0, 0]) < 1e-6


def test_focal_shape_mismatch():
    with pytest.raises(ContractViolation):
        focal_loss(np.zeros((2, 2)), np.zeros((3, 3)))


def test_template_rule():
    box = BoundingBox(0, 0, 10, 10)
    assert should_update_template(box, [], 0.6)
    assert not should_update_template(box, [box], 0.01)
    quarter = [BoundingBox(0, 0, 5, 5)]
    assert should_update_template(box, quarter, 0.6)
    assert not should_update_template(box, quarter, 0.6, invert=True)


def _oracle_setup():
    gt = {1: {7: BoundingBox(100, 100, 20, 40), 8: BoundingBox(160, 100, 20, 40)}}
    region = make_search_region(BoundingBox(120, 100, 20, 40), 4.5, 56, frame=1)
    dets = tuple(Detection(b, 0.9, 1) for b in gt[1].values())
    return gt, region, FrameContext(1, dets)


def test_null_provider_is_zero():
    _, region, ctx = _oracle_setup()
    h = NullProvider().heatmap(Template(BoundingBox(0, 0, 5, 5), 1), region, ctx)
    assert h.shape == (56, 56) and not h.any()


def test_oracle_points_at_its_identity():
    gt, region, ctx = _oracle_setup()
    oracle = OracleProvider(gt)
    assert oracle.describe(ctx.detections[1], ctx) == 8
    v = similarity_vector(oracle.heatmap(Template(gt[1][7], 1, 7), region, ctx), region, ctx.detections)
    assert v[0] == 1.0 and v[1] < 0.01


def test_oracle_corruption_is_seeded():
    gt, region, ctx = _oracle_setup()
    wrong = OracleProvider(gt, corruption=1.0, seed=3)
    tpl = Template(gt[1][7], 1, 7)
    v = similarity_vector(wrong.heatmap(tpl, region, ctx), region, ctx.detections)
    assert v[1] == 1.0 and v[0] < 0.01
    again = OracleProvider(gt, corruption=1.0, seed=3).heatmap(tpl, region, ctx)
    assert np.array_equal(wrong.heatmap(tpl, region, ctx), again)


def test_histogram_provider_prefers_matching_colour(tmp_path):
    img = np.zeros((200, 300, 3), dtype=np.uint8)
    img[100:140, 100:120] = (220, 30, 30)
    img[100:140, 160:180] = (30, 30, 220)
    img[100:140, 105:110] = (250, 250, 250)
    Image.fromarray(img).save(tmp_path / "000001.jpg", quality=100)
    source = ImageSource(tmp_path)
    red, blue = BoundingBox(100, 100, 20, 40), BoundingBox(160, 100, 20, 40)
    dets = (Detection(red, 0.9, 1), Detection(blue, 0.9, 1))
    ctx = FrameContext(1, dets, source)
    prov = HistogramProvider(bins=4)
    tpl = Template(red, 1, prov.describe(dets[0], ctx))
    region = make_search_region(BoundingBox(130, 100, 20, 40), 4.5, 56, frame=1)
    v = similarity_vector(prov.heatmap(tpl, region, ctx), region, dets)
    assert v[0] == pytest.approx(1.0, abs=1e-9)
    assert v[1] < v[0]
    assert np.all((v >= 0) & (v <= 1))
