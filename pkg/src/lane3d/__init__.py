"""Geometry, anchor coding, loss evaluation, lane matching metrics and
synthetic ground truth for monocular 3D lane detection."""

from .anchors import AnchorConfig, AnchorTensor, associate_anchor, decode, encode, encode_with_report
from .geometry import (
    CameraModel,
    EgoPoint,
    ImagePoint,
    TopViewGrid,
    TopViewPoint,
    ego_to_topview,
    homography_img_to_ground,
    project_to_image,
    rotation_translation,
    topview_to_ego,
    warp_to_topview,
)
from .lanes import CATEGORIES, CENTERLINE, LANELINE, Lane3D
from .loss import LossBreakdown, loss
from .matching import MatchConfig, MatchReport, densify, lane_cost, match_frame, min_cost_assign
from .metrics import EvalFrame, EvalReport, evaluate, evaluate_all, pr_at_threshold

__version__ = "0.1.0"
