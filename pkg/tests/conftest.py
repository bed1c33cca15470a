import math

import numpy as np
import pytest

from lane3d.geometry import CameraModel
from lane3d.lanes import LANELINE, Lane3D


def straight_lane(x, y0, y1, step=1.0, z=0.0, category=LANELINE, prob=1.0, visibility=None):
    ys = np.arange(y0, y1 + 1e-9, step)
    pts = np.column_stack([np.full_like(ys, x), ys, np.full_like(ys, z)])
    return Lane3D(category, pts, visibility, prob)


@pytest.fixture
def cam():
    return CameraModel.from_focal(1.5, math.radians(4.0), 400.0, (480, 360))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
