"""Precision/recall sweeps, average precision, max F-score and error statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset
from .lanes import CATEGORIES, LANELINE, Lane3D
from .matching import FrameMatcher, MatchConfig, MatchReport, densify

DEFAULT_THRESHOLDS = tuple(round(0.05 * k, 2) for k in range(1, 20))


@dataclass
class EvalFrame:
    """Ground-truth and predicted lanes of one frame (all categories)."""

    frame_id: str
    gt: list[Lane3D]
    pred: list[Lane3D]


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    precision: float
    recall: float
    f_score: float


@dataclass
class EvalReport:
    category: str
    ap: float
    f_max: float
    best_threshold: float
    curve: list[CurvePoint]
    x_err_near: float
    x_err_far: float
    z_err_near: float
    z_err_far: float
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def num(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v

        return {
            "category": self.category,
            "ap": self.ap,
            "f_max": self.f_max,
            "best_threshold": self.best_threshold,
            "x_err_near": num(self.x_err_near),
            "x_err_far": num(self.x_err_far),
            "z_err_near": num(self.z_err_near),
            "z_err_far": num(self.z_err_far),
            "counts": dict(self.counts),
            "curve": [
                {"threshold": c.threshold, "precision": c.precision, "recall": c.recall, "f_score": c.f_score}
                for c in self.curve
            ],
        }


def f_score(precision: float, recall: float) -> float:
    s = precision + recall
    return 0.0 if s == 0 else 2.0 * precision * recall / s


def average_precision(precisions, recalls) -> float:
    """Area under the monotone (non-increasing) precision envelope over recall.

    The envelope is extended flat down to recall 0 and stops at the largest
    recall attained.
    """
    p = np.asarray(precisions, dtype=np.float64)
    r = np.asarray(recalls, dtype=np.float64)
    if p.size == 0:
        return 0.0
    order = np.lexsort((p, r))
    r, p = r[order], p[order]
    envelope = np.maximum.accumulate(p[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], r]))
    return float(np.sum(steps * envelope))


class _CategoryEval:
    """Per-frame matchers for one category, with results cached per kept set."""

    def __init__(self, frames: list[EvalFrame], category: str, cfg: MatchConfig):
        self.cfg = cfg
        self.matchers = []
        for fr in frames:
            gts = [densify(l, cfg) for l in fr.gt if l.category == category]
            preds = [densify(l, cfg) for l in fr.pred if l.category == category]
            self.matchers.append(FrameMatcher(preds, gts, cfg))
        self._cache: list[dict[bytes, MatchReport]] = [{} for _ in self.matchers]

    def reports(self, tau: float) -> list[tuple[np.ndarray, MatchReport]]:
        out = []
        for m, cache in zip(self.matchers, self._cache):
            keep = m.pred_probs >= tau
            key = keep.tobytes()
            if key not in cache:
                cache[key] = m.report(keep)
            out.append((keep, cache[key]))
        return out

    def counts(self, tau: float) -> dict[str, int]:
        n_gt = n_pred = m_gt = m_pred = 0
        for m, (keep, rep) in zip(self.matchers, self.reports(tau)):
            n_gt += m.n_gt
            n_pred += int(keep.sum())
            m_gt += int(rep.gt_matched.sum())
            m_pred += int(rep.pred_matched.sum())
        return {"gt": n_gt, "pred": n_pred, "matched_gt": m_gt, "matched_pred": m_pred}

    def errors(self, tau: float) -> tuple[float, float, float, float]:
        ys = np.asarray(self.cfg.dense_y_positions)
        near = ys <= self.cfg.near_far_split
        far = (ys > self.cfg.near_far_split) & (ys <= self.cfg.range_end)
        sums = np.zeros(4)
        cnts = np.zeros(4)
        for keep, rep in self.reports(tau):
            for k, (p, g, _) in enumerate(rep.assignment):
                if not (rep.pred_matched[p] and rep.gt_matched[g]):
                    continue
                for j, (dev, region) in enumerate(
                    ((rep.x_dev[k], near), (rep.x_dev[k], far), (rep.z_dev[k], near), (rep.z_dev[k], far))
                ):
                    vals = dev[region & ~np.isnan(dev)]
                    sums[j] += vals.sum()
                    cnts[j] += vals.size
        means = [float(s / c) if c else math.nan for s, c in zip(sums, cnts)]
        return means[0], means[1], means[2], means[3]


def _precision_recall(counts: dict[str, int]) -> tuple[float, float]:
    precision = counts["matched_pred"] / counts["pred"] if counts["pred"] else 1.0
    recall = counts["matched_gt"] / counts["gt"] if counts["gt"] else 1.0
    return precision, recall


def pr_at_threshold(
    frames: list[EvalFrame], tau: float, cfg: MatchConfig | None = None, category: str = LANELINE
) -> tuple[float, float]:
    """Precision and recall over all frames keeping predictions with ``prob >= tau``."""
    cfg = cfg or MatchConfig()
    return _precision_recall(_CategoryEval(list(frames), category, cfg).counts(tau))


def evaluate(
    frames: list[EvalFrame],
    cfg: MatchConfig | None = None,
    thresholds=DEFAULT_THRESHOLDS,
    category: str = LANELINE,
) -> EvalReport:
    """Sweep probability thresholds and summarize one lane category.

    Error columns are mean absolute per-axis deviations pooled over the
    positions covered by both lanes of every fully matched pair at the
    threshold with the best F-score (the first such threshold on ties).
    """
    cfg = cfg or MatchConfig()
    frames = list(frames)
    if not frames:
        raise EmptyDataset("no frames to evaluate")
    thresholds = [float(t) for t in thresholds]
    if not thresholds:
        raise ValueError("at least one threshold is required")

    ev = _CategoryEval(frames, category, cfg)
    curve = []
    for tau in thresholds:
        precision, recall = _precision_recall(ev.counts(tau))
        curve.append(CurvePoint(tau, precision, recall, f_score(precision, recall)))

    best = max(range(len(curve)), key=lambda i: (curve[i].f_score, -i))
    tau_best = curve[best].threshold
    ap = average_precision([c.precision for c in curve], [c.recall for c in curve])
    xn, xf, zn, zf = ev.errors(tau_best)
    return EvalReport(
        category=category,
        ap=ap,
        f_max=curve[best].f_score,
        best_threshold=tau_best,
        curve=curve,
        x_err_near=xn,
        x_err_far=xf,
        z_err_near=zn,
        z_err_far=zf,
        counts=ev.counts(tau_best),
    )


def evaluate_all(
    frames: list[EvalFrame], cfg: MatchConfig | None = None, thresholds=DEFAULT_THRESHOLDS
) -> dict[str, EvalReport]:
    """One :class:`EvalReport` per lane category."""
    frames = list(frames)
    return {cat: evaluate(frames, cfg, thresholds, cat) for cat in CATEGORIES}
