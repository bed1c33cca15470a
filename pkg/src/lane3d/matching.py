"""Lane-to-lane cost and global one-to-one matching of lane sets.

Lanes are resampled on a dense grid of y-positions. Two lanes are compared
position by position: squared euclidean (x, z) distance where both cover the
position, nothing where neither does, and a fixed edit charge where only one
does. The matching between predicted and ground-truth lanes minimizes the
summed cost over a unit-capacity flow network, solved by successive shortest
paths with node potentials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch
from .lanes import Lane3D, coverage_mask

DEFAULT_DENSE_Y = tuple(float(y) for y in range(0, 101, 2))


@dataclass(frozen=True)
class MatchConfig:
    """Parameters of the matching metric.

    ``edit_cost`` is the per-position charge when exactly one lane covers a
    position; ``None`` means ``d_max`` itself (not squared).
    """

    dense_y_positions: tuple[float, ...] = DEFAULT_DENSE_Y
    d_max: float = 1.5
    match_fraction: float = 0.75
    near_far_split: float = 40.0
    range_end: float = 100.0
    edit_cost: float | None = None

    def __post_init__(self):
        ys = tuple(float(y) for y in self.dense_y_positions)
        object.__setattr__(self, "dense_y_positions", ys)
        if len(ys) < 1 or np.any(np.diff(ys) <= 0):
            raise ValueError("dense y-positions must be strictly increasing")
        if not self.d_max > 0:
            raise ValueError(f"d_max must be positive, got {self.d_max}")
        if not 0.0 < self.match_fraction <= 1.0:
            raise ValueError(f"match_fraction must lie in (0, 1], got {self.match_fraction}")
        if self.edit_cost is not None and self.edit_cost < 0:
            raise ValueError("edit_cost must be non-negative")

    @property
    def edit_charge(self) -> float:
        return self.d_max if self.edit_cost is None else float(self.edit_cost)


@dataclass(frozen=True, eq=False)
class DenseLane:
    xs: np.ndarray
    zs: np.ndarray
    covered: np.ndarray
    prob: float = 1.0


@dataclass(eq=False)
class MatchReport:
    """Outcome of matching one frame.

    ``pointwise[k]`` holds, for the k-th assigned pair, the per-position
    distance: euclidean where both lanes cover the position, ``d_max`` where
    one does, 0 where neither does. ``x_dev`` / ``z_dev`` hold absolute
    per-axis deviations at positions covered by both (NaN elsewhere).
    """

    assignment: list[tuple[int, int, float]]
    pred_matched: np.ndarray
    gt_matched: np.ndarray
    pointwise: list[np.ndarray] = field(default_factory=list)
    x_dev: list[np.ndarray] = field(default_factory=list)
    z_dev: list[np.ndarray] = field(default_factory=list)


def densify(lane: Lane3D, cfg: MatchConfig) -> DenseLane:
    ys = np.asarray(cfg.dense_y_positions)
    covered = coverage_mask(ys, lane.ys, lane.visibility) & (ys <= cfg.range_end)
    xs = np.interp(ys, lane.ys, lane.xs)
    zs = np.interp(ys, lane.ys, lane.zs)
    return DenseLane(xs, zs, covered, lane.prob)


def _pair_terms(a: DenseLane, b: DenseLane, cfg: MatchConfig):
    both = a.covered & b.covered
    one = a.covered ^ b.covered
    sq = np.where(both, (a.xs - b.xs) ** 2 + (a.zs - b.zs) ** 2, 0.0)
    d = np.where(one, cfg.edit_charge, sq)
    dist = np.where(both, np.sqrt(sq), np.where(one, cfg.d_max, 0.0))
    return d, dist, both


def lane_cost(a: DenseLane, b: DenseLane, cfg: MatchConfig) -> tuple[float, np.ndarray]:
    """Return ``(cost, pointwise distances)`` between two densified lanes."""
    if a.xs.shape != b.xs.shape:
        raise LengthMismatch(f"dense lanes differ in length: {a.xs.shape} vs {b.xs.shape}")
    d, dist, _ = _pair_terms(a, b, cfg)
    return math.sqrt(float(np.sum(d))), dist


class MinCostFlow:
    """Successive-shortest-path min-cost flow on a small graph.

    Dijkstra runs over reduced costs with node potentials, so edge costs must
    be non-negative. Ties in path length are broken towards the lower node
    index and earlier-added edges, which makes the result deterministic.
    """

    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.adj: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.cost: list[float] = []

    def add_edge(self, u: int, v: int, cap: int, cost: float) -> int:
        if cost < 0:
            raise ValueError("edge costs must be non-negative")
        e = len(self.to)
        self.to += [v, u]
        self.cap += [cap, 0]
        self.cost += [cost, -cost]
        self.adj[u].append(e)
        self.adj[v].append(e + 1)
        return e

    def flow_on(self, e: int) -> int:
        return self.cap[e ^ 1]

    def solve(self, s: int, t: int, max_flow: int | None = None) -> tuple[int, float]:
        n = self.n
        inf = math.inf
        potential = [0.0] * n
        flow, total = 0, 0.0
        limit = math.inf if max_flow is None else max_flow
        while flow < limit:
            dist = [inf] * n
            parent_edge = [-1] * n
            done = [False] * n
            dist[s] = 0.0
            for _ in range(n):
                u, best = -1, inf
                for i in range(n):
                    if not done[i] and dist[i] < best:
                        u, best = i, dist[i]
                if u < 0:
                    break
                done[u] = True
                pu = potential[u]
                for e in self.adj[u]:
                    if self.cap[e] <= 0:
                        continue
                    v = self.to[e]
                    if done[v]:
                        continue
                    # Reduced costs are >= 0 up to rounding.
                    nd = best + max(self.cost[e] + pu - potential[v], 0.0)
                    if nd < dist[v]:
                        dist[v] = nd
                        parent_edge[v] = e
            if dist[t] == inf:
                break
            for i in range(n):
                if dist[i] < inf:
                    potential[i] += dist[i]
            push = limit - flow
            v = t
            while v != s:
                e = parent_edge[v]
                push = min(push, self.cap[e])
                v = self.to[e ^ 1]
            v = t
            while v != s:
                e = parent_edge[v]
                self.cap[e] -= push
                self.cap[e ^ 1] += push
                total += push * self.cost[e]
                v = self.to[e ^ 1]
            flow += push
        return flow, total


def min_cost_assign(cost_matrix) -> list[tuple[int, int]]:
    """Minimum-total-cost matching of cardinality ``min(P, G)``.

    Returns ``(pred, gt)`` index pairs sorted by pred index.
    """
    C = np.asarray(cost_matrix, dtype=np.float64)
    if C.ndim != 2:
        raise ValueError("cost matrix must be 2D")
    P, G = C.shape
    if P == 0 or G == 0:
        return []
    if not np.all(np.isfinite(C)) or np.any(C < 0):
        raise ValueError("costs must be finite and non-negative")

    source, sink = 0, P + G + 1
    net = MinCostFlow(P + G + 2)
    for p in range(P):
        net.add_edge(source, 1 + p, 1, 0.0)
    pair_edges = {}
    for p in range(P):
        for g in range(G):
            pair_edges[p, g] = net.add_edge(1 + p, 1 + P + g, 1, float(C[p, g]))
    for g in range(G):
        net.add_edge(1 + P + g, sink, 1, 0.0)
    net.solve(source, sink, min(P, G))
    return sorted(pg for pg, e in pair_edges.items() if net.flow_on(e) > 0)


class FrameMatcher:
    """Pairwise lane costs for one frame, reusable across prediction subsets."""

    def __init__(self, preds: list[DenseLane], gts: list[DenseLane], cfg: MatchConfig):
        self.cfg = cfg
        self.n_pred, self.n_gt = len(preds), len(gts)
        n = len(cfg.dense_y_positions)
        self.pred_probs = np.array([p.prob for p in preds])
        P, G = self.n_pred, self.n_gt
        self.cost = np.zeros((P, G))
        self.dist = np.zeros((P, G, n))
        self.both = np.zeros((P, G, n), dtype=bool)
        self.dx = np.zeros((P, G, n))
        self.dz = np.zeros((P, G, n))
        if P and G:
            px = np.stack([p.xs for p in preds])[:, None, :]
            pz = np.stack([p.zs for p in preds])[:, None, :]
            pc = np.stack([p.covered for p in preds])[:, None, :]
            gx = np.stack([g.xs for g in gts])[None, :, :]
            gz = np.stack([g.zs for g in gts])[None, :, :]
            gc = np.stack([g.covered for g in gts])[None, :, :]
            both = pc & gc
            one = pc ^ gc
            dx = np.abs(px - gx)
            dz = np.abs(pz - gz)
            sq = np.where(both, dx**2 + dz**2, 0.0)
            d = np.where(one, cfg.edit_charge, sq)
            self.cost = np.sqrt(d.sum(axis=-1))
            self.dist = np.where(both, np.sqrt(sq), np.where(one, cfg.d_max, 0.0))
            self.both = both
            self.dx, self.dz = dx, dz
        self.within = np.sum(self.both & (self.dist < cfg.d_max), axis=-1)
        self.pred_cov = np.array([int(p.covered.sum()) for p in preds], dtype=np.int64)
        self.gt_cov = np.array([int(g.covered.sum()) for g in gts], dtype=np.int64)

    def report(self, keep=None) -> MatchReport:
        """Match the predictions selected by boolean mask ``keep`` (default all).

        Indices in the report refer to the full prediction list.
        """
        cfg = self.cfg
        keep = np.ones(self.n_pred, dtype=bool) if keep is None else np.asarray(keep, dtype=bool)
        rows = np.flatnonzero(keep)
        pairs = min_cost_assign(self.cost[rows]) if len(rows) and self.n_gt else []
        pred_matched = np.zeros(self.n_pred, dtype=bool)
        gt_matched = np.zeros(self.n_gt, dtype=bool)
        assignment, pointwise, x_dev, z_dev = [], [], [], []
        for r, g in pairs:
            p = int(rows[r])
            hits = self.within[p, g]
            # A lane with no covered position can never satisfy the criterion.
            if self.pred_cov[p] > 0 and hits >= cfg.match_fraction * self.pred_cov[p]:
                pred_matched[p] = True
            if self.gt_cov[g] > 0 and hits >= cfg.match_fraction * self.gt_cov[g]:
                gt_matched[g] = True
            assignment.append((p, int(g), float(self.cost[p, g])))
            pointwise.append(self.dist[p, g].copy())
            both = self.both[p, g]
            x_dev.append(np.where(both, self.dx[p, g], np.nan))
            z_dev.append(np.where(both, self.dz[p, g], np.nan))
        return MatchReport(assignment, pred_matched, gt_matched, pointwise, x_dev, z_dev)


def match_frame(preds: list[Lane3D], gts: list[Lane3D], cfg: MatchConfig | None = None) -> MatchReport:
    """Match one frame's predicted lanes against its ground truth (one category)."""
    cfg = cfg or MatchConfig()
    matcher = FrameMatcher([densify(p, cfg) for p in preds], [densify(g, cfg) for g in gts], cfg)
    return matcher.report()
