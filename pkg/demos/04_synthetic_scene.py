"""
A synthetic scene with occlusions
=================================

Render depth and semantics for a hilly road with a parked vehicle, label
every lane point, and keep what a detector should be asked to find.
"""

import math
from collections import Counter

import numpy as np

from lane3d.geometry import CameraModel
from lane3d.scene import (
    Box,
    OcclusionLabel,
    RoadSpec,
    SemanticClass,
    finalize_ground_truth,
    generate_scene,
    label_occlusion,
)

# The road climbs to a crest at 60 m and drops behind it.
spec = RoadSpec(
    centerline_coeffs=(0.0, 0.0, 3e-4),
    height_profile=((0.0, 0.0), (60.0, 1.0), (90.0, -1.0)),
    y_span=(1.0, 150.0),
)
van = Box.on_ground(spec, 1.75, 25.0, 1.9, 5.0, 1.6)
cam = CameraModel.from_focal(1.6, math.radians(2.0), 400.0, (480, 360))
scene = generate_scene(spec, seed=0, occluders=[van], camera=cam)

classes = Counter(SemanticClass(int(c)).name for c in scene.semantic_map.ravel())
print("pixels per class:", dict(classes))
print("depth range on the ground:", np.nanmin(scene.depth_map), "to",
      np.max(scene.depth_map[np.isfinite(scene.depth_map)]))

labels = label_occlusion(scene, eps=0.5)
for lane, lab in zip(scene.lanes_gt, labels):
    counts = Counter(OcclusionLabel(int(v)).name.lower() for v in lab)
    print(f"{lane.category:10s} x0={lane.xs[0]:+5.2f}", dict(counts))

# Points hidden by the van stay; the far side of the hill is cut away.
final = finalize_ground_truth(scene.lanes_gt, labels)
for lane in final:
    print(f"{lane.category:10s} kept y {lane.ys[0]:.0f}..{lane.ys[-1]:.0f} m,"
          f" {int(lane.visibility.sum())} visible points")
