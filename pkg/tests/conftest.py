import numpy as np
import pytest

from mixsort.geometry import BoundingBox


def square(x, y, s=10.0):
    return BoundingBox(float(x), float(y), s, s)


@pytest.fixture
def swap_case():
    """Two objects, ten frames; the predicted ids swap from frame 6 on."""
    a = [BoundingBox(10.0 * f, 0.0, 20.0, 40.0) for f in range(1, 11)]
    b = [BoundingBox(10.0 * f, 200.0, 20.0, 40.0) for f in range(1, 11)]
    gt = {f: {1: a[f - 1], 2: b[f - 1]} for f in range(1, 11)}
    pred = {f: ({10: a[f - 1], 20: b[f - 1]} if f < 6 else {10: b[f - 1], 20: a[f - 1]})
            for f in range(1, 11)}
    return gt, pred


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
