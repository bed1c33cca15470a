"""
Matching lanes and scoring a detector
=====================================

Predicted and ground-truth lanes are resampled every 2 m, compared
position by position and paired with a minimum-cost flow.
"""

import numpy as np

from lane3d.lanes import LANELINE, Lane3D
from lane3d.matching import MatchConfig, densify, lane_cost, match_frame
from lane3d.metrics import EvalFrame, evaluate
from lane3d.scene import NoiseModel, RoadSpec, perturb_predictions, road_lanes

cfg = MatchConfig()


def straight(x, y0, y1, prob=1.0):
    return Lane3D(LANELINE, [[x, y0, 0.0], [x, y1, 0.0]], prob=prob)


# Positions covered by only one of two lanes cost d_max each.
a, b = densify(straight(0.0, 10, 50), cfg), densify(straight(0.0, 10, 58), cfg)
print("4 extra positions:", lane_cost(a, b, cfg)[0], "=", np.sqrt(4 * 1.5))

# A 30 cm offset over 20 shared positions.
a, b = densify(straight(0.0, 10, 48), cfg), densify(straight(0.3, 10, 48), cfg)
print("0.3 m offset:", lane_cost(a, b, cfg)[0], "=", np.sqrt(20 * 0.09))

# One frame: three good predictions and one lane in the wrong place.
gts = [straight(x, 1, 100) for x in (-5.25, -1.75, 1.75, 5.25)]
preds = [g.with_prob(0.9) for g in gts[:3]] + [straight(10.25, 1, 100, prob=0.9)]
rep = match_frame(preds, gts, cfg)
for p, g, cost in rep.assignment:
    print(f"pred {p} -> gt {g}  cost {cost:6.2f}  matched {rep.pred_matched[p]}")

# A small synthetic dataset: noisy copies of the road plus spurious lanes
# that tend to get lower scores.
noise = NoiseModel(sigma_x=0.3, sigma_z=0.1, drop_rate=0.2, spurious_rate=0.3, true_prob=(0.4, 1.0))
frames = []
for k in range(50):
    gt = road_lanes(RoadSpec(centerline_coeffs=(0.0, 0.0, 2e-4 * (k % 5 - 2))))
    frames.append(EvalFrame(str(k), gt, perturb_predictions(gt, k, noise)))
report = evaluate(frames, cfg)
print(f"AP {report.ap:.3f}  F-max {report.f_max:.3f} at tau={report.best_threshold}")
print(f"x error near/far {report.x_err_near:.3f}/{report.x_err_far:.3f} m")
for c in report.curve[::4]:
    print(f"  tau {c.threshold:.2f}  P {c.precision:.3f}  R {c.recall:.3f}")
