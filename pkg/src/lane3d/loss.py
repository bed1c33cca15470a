"""Evaluation of the anchor training loss (no gradients)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anchors import AnchorConfig, AnchorTensor
from .errors import ShapeMismatch

#: Floor applied to the arguments of both logarithms in the existence term.
LOG_EPS = 1e-7


@dataclass(frozen=True)
class LossBreakdown:
    existence_term: float
    offset_term: float
    height_term: float
    visibility_term: float

    @property
    def total(self) -> float:
        return self.existence_term + self.offset_term + self.height_term + self.visibility_term

    def as_dict(self) -> dict[str, float]:
        return {
            "existence_term": self.existence_term,
            "offset_term": self.offset_term,
            "height_term": self.height_term,
            "visibility_term": self.visibility_term,
            "total": self.total,
        }


def loss(pred: AnchorTensor, gt: AnchorTensor, cfg: AnchorConfig | None = None) -> LossBreakdown:
    """Sum of existence cross-entropy and visibility-masked L1 terms.

    Offset and height errors count only where the ground-truth visibility is
    set, and only on anchors whose ground-truth existence is set. All terms are
    plain sums over categories, anchors and y-positions.
    """
    if pred.x_offsets.shape != gt.x_offsets.shape or pred.prob.shape != gt.prob.shape:
        raise ShapeMismatch(f"prediction shape {pred.shape} differs from ground truth {gt.shape}")
    if cfg is not None and gt.shape != (cfg.n_anchors, cfg.n_y):
        raise ShapeMismatch(f"tensor shape {gt.shape} does not match config {(cfg.n_anchors, cfg.n_y)}")
    for name, a in (("prob", gt.prob), ("visibility", gt.visibility)):
        if not np.all((a == 0.0) | (a == 1.0)):
            raise ValueError(f"ground-truth {name} must be binary")

    p_hat = gt.prob
    p = pred.prob
    # 0 * log(eps) stays finite, so exact binary agreement gives exactly zero.
    log_p = np.log(np.maximum(p, LOG_EPS))
    log_q = np.log(np.maximum(1.0 - p, LOG_EPS))
    existence = -np.sum(p_hat * log_p + (1.0 - p_hat) * log_q)

    v_hat = gt.visibility
    w = p_hat[..., None]
    offset = np.sum(w * np.abs(v_hat * (pred.x_offsets - gt.x_offsets)))
    height = np.sum(w * np.abs(v_hat * (pred.heights - gt.heights)))
    visibility = np.sum(w * np.abs(pred.visibility - v_hat))
    return LossBreakdown(float(existence) + 0.0, float(offset), float(height), float(visibility))
