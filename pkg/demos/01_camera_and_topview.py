"""
Camera, ground homography and the virtual top view
===================================================

A pitched camera sees a point on a hill at the same pixel as some point on
the flat ground. That ground point is where the point lands in the top view.
"""

import math

import numpy as np

from lane3d.geometry import (
    CameraModel,
    ego_to_topview,
    image_to_ground,
    project_to_image,
    topview_to_ego,
    warp_to_topview,
)

# A 1.6 m high camera tilted 4 degrees down, 480x360 image, 400 px focal.
cam = CameraModel.from_focal(1.6, math.radians(4.0), 400.0, (480, 360))
print("intrinsics:\n", cam.intrinsics)

# A point 30 m ahead, 2 m to the right, on a 0.8 m rise.
p = np.array([2.0, 30.0, 0.8])
uv = project_to_image(cam, p)
print("pixel of the elevated point:", uv)

# Back-project the pixel with the ground homography.
g = image_to_ground(cam, uv)
print("ground point at the same pixel:", g)

# The closed form gives the same answer without touching the image.
print("closed form top view:", ego_to_topview(p, cam.height_m))

# Going back needs the height: the top-view point alone is ambiguous.
print("recovered ego point:", topview_to_ego(g, 0.8, cam.height_m))

# The shift grows with height: x_bar = x * h / (h - z).
for z in (-0.5, 0.0, 0.5, 1.0, 1.4):
    xb, yb = ego_to_topview([2.0, 30.0, z], cam.height_m)
    print(f"z={z:+.1f} m -> top view ({xb:6.2f}, {yb:6.2f})")

# Warping a mask: mark the image rows below the horizon and look at the
# footprint the camera covers in the 208x108 top-view grid.
mask = np.zeros((360, 480), dtype=np.uint8)
mask[200:, :] = 1
tv = warp_to_topview(cam, mask)
print("top-view cells covered:", int(tv.sum()), "of", tv.size)
