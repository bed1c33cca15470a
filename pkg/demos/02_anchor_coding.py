"""
Encoding lanes on top-view anchors
==================================

Lanes are stored as offsets from fixed longitudinal anchor lines in the top
view, plus a height and a visibility flag at a handful of y positions.
"""

import numpy as np

from lane3d.anchors import AnchorConfig, decode, encode_with_report
from lane3d.geometry import topview_to_ego
from lane3d.lanes import CATEGORIES, CENTERLINE, LANELINE, Lane3D
from lane3d.loss import loss

h = 1.5
cfg = AnchorConfig()
print("anchors:", np.round(cfg.anchor_x_positions, 2))
print("y positions:", cfg.y_positions)

# Build an uphill lane from its top-view shape: a straight line at x_bar=1.2
# rising 4 mm per meter. In the ego frame it bends inwards as it climbs.
ybar = np.arange(1.0, 101.0)
ego = topview_to_ego(np.column_stack([np.full_like(ybar, 1.2), ybar]), 0.004 * ybar, h)
climb = Lane3D(LANELINE, ego)
print("ego x at 5 m and at the far end:", climb.xs[4], climb.xs[-1])

# A flat center line that ends at 60 m: the y positions beyond it are marked
# invisible and hold the last covered value.
flat = Lane3D(CENTERLINE, [[-1.9, 2.0, 0.0], [-1.9, 60.0, 0.0]])

tensor, report = encode_with_report([climb, flat], cfg, h)
ll, cl = CATEGORIES.index(LANELINE), CATEGORIES.index(CENTERLINE)
a = int(np.argmax(tensor.prob[ll]))
print("laneline anchor", a, "offsets", np.round(tensor.x_offsets[ll, a], 3))
print("heights", np.round(tensor.heights[ll, a], 3))
c = int(np.argmax(tensor.prob[cl]))
print("centerline anchor", c, "offsets", np.round(tensor.x_offsets[cl, c], 3))
print("visibility", tensor.visibility[cl, c])
print("collisions:", report.collisions, "skipped:", report.uncovered)

# Decoding lifts the anchor points back into the ego frame.
for lane in decode(tensor, cfg, h):
    print(lane.category, "points:", len(lane.points), "first", np.round(lane.points[0], 3))

# The training loss of a slightly wrong prediction.
pred = tensor.replace(
    x_offsets=tensor.x_offsets + 0.05,
    prob=np.clip(tensor.prob, 0.1, 0.9),
)
print(loss(pred, tensor, cfg).as_dict())
