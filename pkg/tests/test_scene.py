import math

import numpy as np
import pytest

from lane3d.errors import InvalidSpec
from lane3d.geometry import CameraModel, project_to_image
from lane3d.lanes import CENTERLINE, LANELINE, Lane3D
from lane3d.matching import MatchConfig
from lane3d.metrics import EvalFrame, evaluate
from lane3d.scene import (
    Box,
    NoiseModel,
    OcclusionLabel as L,
    RoadSpec,
    SemanticClass,
    finalize_ground_truth,
    generate_scene,
    label_occlusion,
    label_points,
    perturb_predictions,
    random_road_spec,
    road_lanes,
    sample_depth,
)


def camera(h=1.6, pitch_deg=3.0):
    return CameraModel.from_focal(h, math.radians(pitch_deg), 400.0, (480, 360))


def ray_of(cam, u, v):
    """Ego-frame direction of the ray through pixel (u, v), written out by hand."""
    a = (u - cam.cx) / cam.fx
    b = (v - cam.cy) / cam.fy
    s, c = math.sin(cam.pitch_rad), math.cos(cam.pitch_rad)
    return np.array([a, -s * b + c, -c * b - s])


def slab_entry(origin, d, lo, hi):
    t0, t1 = -np.inf, np.inf
    for k in range(3):
        if d[k] == 0:
            if not lo[k] <= origin[k] <= hi[k]:
                return np.inf
            continue
        ta, tb = sorted(((lo[k] - origin[k]) / d[k], (hi[k] - origin[k]) / d[k]))
        t0, t1 = max(t0, ta), min(t1, tb)
    return t0 if t0 <= t1 and t0 > 0 else np.inf


def segment_hits_box(a, b, box):
    """Whether the open segment from a to b passes through the box."""
    d = b - a
    t0, t1 = 0.0, 1.0
    for k, (lo, hi) in enumerate(zip(box.lower, box.upper)):
        if d[k] == 0:
            if not lo <= a[k] <= hi:
                return False
            continue
        ta, tb = sorted(((lo - a[k]) / d[k], (hi - a[k]) / d[k]))
        t0, t1 = max(t0, ta), min(t1, tb)
    return t0 <= t1


# -- specs -----------------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(InvalidSpec):
        RoadSpec(y_span=(50.0, 10.0))
    with pytest.raises(InvalidSpec):
        RoadSpec(height_profile=((10.0, 0.0), (5.0, 1.0)))
    with pytest.raises(InvalidSpec):
        Box(0, 0, 0, 1, 0, 1)
    with pytest.raises(InvalidSpec):
        generate_scene(RoadSpec(height_profile=((0.0, 0.0), (50.0, 2.0))), 0, camera=camera(1.6))


def test_road_lanes_layout():
    spec = RoadSpec(centerline_coeffs=(1.0, 0.01), y_span=(1.0, 50.0))
    lanes = road_lanes(spec)
    assert [l.category for l in lanes] == [LANELINE] * 4 + [CENTERLINE] * 3
    np.testing.assert_array_equal(lanes[0].ys, np.arange(1.0, 51.0))
    np.testing.assert_allclose(lanes[0].xs, 1.0 + 0.01 * lanes[0].ys - 5.25)
    np.testing.assert_allclose(lanes[4].xs, 1.0 + 0.01 * lanes[4].ys - 3.5)


# -- generation and rendering ----------------------------------------------------


def test_camera_sampling_ranges():
    for seed in range(30):
        cam = generate_scene(RoadSpec(), seed).camera
        assert 1.4 <= cam.height_m <= 1.8
        assert 0.0 <= cam.pitch_rad <= math.radians(10.0)


def test_generation_is_deterministic():
    spec = random_road_spec(np.random.default_rng(3))
    a = generate_scene(spec, 42, n_vehicles=3)
    b = generate_scene(spec, 42, n_vehicles=3)
    assert a.camera == b.camera or (
        a.camera.height_m == b.camera.height_m and a.camera.pitch_rad == b.camera.pitch_rad
    )
    assert a.depth_map.tobytes() == b.depth_map.tobytes()
    assert a.semantic_map.tobytes() == b.semantic_map.tobytes()
    assert a.occluders == b.occluders
    assert all(x.same_as(y) for x, y in zip(a.lanes_gt, b.lanes_gt))
    c = generate_scene(spec, 43, n_vehicles=3)
    assert c.depth_map.tobytes() != a.depth_map.tobytes()


def test_flat_depth_is_a_plane():
    cam = camera()
    fx = generate_scene(RoadSpec(y_span=(1.0, 150.0)), 0, camera=cam)
    assert fx.depth_map.shape == (360, 480) and fx.semantic_map.shape == (360, 480)
    for v in range(0, 360, 7):
        for u in range(0, 480, 53):
            d = ray_of(cam, u, v)
            want = (cam.height_m / -d[2]) * d[1] if d[2] < 0 else np.inf
            got = fx.depth_map[v, u]
            if np.isinf(want):
                assert np.isinf(got) and fx.semantic_map[v, u] == SemanticClass.SKY
            else:
                assert got == pytest.approx(want, rel=1e-9)
    finite = np.isfinite(fx.depth_map)
    assert np.all(fx.depth_map[finite] > 0)


def test_flat_scene_all_visible():
    fx = generate_scene(RoadSpec(y_span=(1.0, 250.0)), 7, n_vehicles=0)
    for lab, lane in zip(label_occlusion(fx), fx.lanes_gt):
        assert not np.isin(lab, [L.FOREGROUND_OCCLUDED, L.BACKGROUND_OCCLUDED]).any()
        dist = np.linalg.norm(lane.points - [0, 0, fx.camera.height_m], axis=1)
        inside = lab != L.OUT_OF_IMAGE
        assert np.all(lab[inside & (dist <= 200)] == L.VISIBLE)
        assert np.all(lab[inside & (dist > 200)] == L.BEYOND_RANGE)


def test_box_pixels_match_ray_box_intersection():
    cam = camera()
    spec = RoadSpec(y_span=(1.0, 150.0))
    box = Box.on_ground(spec, 0.0, 20.0, 2.0, 2.0, 1.5)
    fx = generate_scene(spec, 0, camera=cam, occluders=[box])
    vs, us = np.nonzero(fx.semantic_map == SemanticClass.VEHICLE)
    assert len(us) > 100
    origin = np.array([0.0, 0.0, cam.height_m])
    for u, v in zip(us, vs):
        d = ray_of(cam, u, v)
        t = slab_entry(origin, d, box.lower, box.upper)
        assert np.isfinite(t)
        assert fx.depth_map[v, u] == pytest.approx(t * d[1], abs=1e-9)
        assert 19.0 - 1e-9 <= fx.depth_map[v, u] <= 21.0 + 1e-9
    # every pixel whose ray enters the box in front of the ground is vehicle
    for v in range(0, 360, 3):
        for u in range(0, 480, 3):
            d = ray_of(cam, u, v)
            t = slab_entry(origin, d, box.lower, box.upper)
            ground = cam.height_m / -d[2] if d[2] < 0 else np.inf
            assert (fx.semantic_map[v, u] == SemanticClass.VEHICLE) == (t < ground)


def test_box_shadow_is_foreground_occlusion():
    cam = camera(h=1.8, pitch_deg=2.0)
    spec = RoadSpec(lane_offsets=(0.5, 4.0), y_span=(1.0, 150.0))
    box = Box.on_ground(spec, 0.0, 20.0, 2.0, 2.0, 1.0)
    fx = generate_scene(spec, 0, camera=cam, occluders=[box])
    lane = fx.lanes_gt[0]
    labels = label_points(fx, lane.points)
    eye = np.array([0.0, 0.0, cam.height_m])

    def oracle(p):
        if p[1] <= 19.0 + 0.5:  # in front of the box or within eps of its face
            return False
        return segment_hits_box(eye, p, box)

    truth = np.array([oracle(p) for p in lane.points])
    # the analytic shadow ends where the ray over the box's far top edge lands
    s = 1 - 1.0 / 1.8
    assert truth[lane.ys <= 21 / s].sum() == truth.sum() and truth.any()
    inside = labels != L.OUT_OF_IMAGE
    # skip points within 1.5 px of a shadow boundary, where the sampled depth
    # blends the box edge with the road behind it
    v = project_to_image(cam, lane.points)[:, 1]
    edges = np.flatnonzero(np.diff(truth.astype(int)))
    v_edges = 0.5 * (v[edges] + v[edges + 1])
    stable = np.all(np.abs(v[:, None] - v_edges[None, :]) > 1.5, axis=1)
    check = inside & stable
    assert check.sum() > 100
    got = labels == L.FOREGROUND_OCCLUDED
    np.testing.assert_array_equal(got[check], truth[check])
    assert not np.any(labels == L.BACKGROUND_OCCLUDED)


def crest_fixture():
    spec = RoadSpec(height_profile=((0.0, 0.0), (50.0, 1.2), (70.0, -1.2)), y_span=(1.0, 150.0))
    return generate_scene(spec, 0, camera=camera(h=1.5, pitch_deg=0.0))


def test_crest_hides_downhill_road():
    fx = crest_fixture()
    lane = fx.lanes_gt[1]
    labels = label_points(fx, lane.points)
    h = fx.camera.height_m
    # the sight line grazing the crest drops 0.3 m per 50 m; past the crest the
    # road falls away much faster, so everything from the crest on is hidden
    # until the sight line meets the flat at z=-1.2, far beyond the lane end
    sight = lambda y: h - 0.3 / 50.0 * y
    hidden = lane.zs < sight(lane.ys) - 0.2
    hidden &= lane.ys > 52.0
    assert hidden.sum() > 80
    assert np.all(labels[hidden] == L.BACKGROUND_OCCLUDED)
    assert np.all(labels[(lane.ys < 48) & (labels != L.OUT_OF_IMAGE)] == L.VISIBLE)
    v = labels == L.VISIBLE
    # pixels where the hidden road would appear show the hill top instead
    assert np.all(np.isin(
        fx.semantic_map[np.isfinite(fx.depth_map)], [SemanticClass.ROAD, SemanticClass.TERRAIN]
    ))
    assert v.any()


def test_visible_points_agree_with_depth():
    for fx in (crest_fixture(), generate_scene(random_road_spec(np.random.default_rng(5)), 5, n_vehicles=2)):
        cam = fx.camera
        for lane, lab in zip(fx.lanes_gt, label_occlusion(fx)):
            vis = lab == L.VISIBLE
            if not vis.any():
                continue
            uv = project_to_image(cam, lane.points[vis])
            seen = sample_depth(fx.depth_map, uv[:, 0], uv[:, 1])
            assert np.all(lane.ys[vis] - seen <= 0.5)
            # away from silhouettes the agreement holds both ways
            u0 = np.floor(uv[:, 0]).astype(int)
            v0 = np.floor(uv[:, 1]).astype(int)
            near = np.stack([fx.depth_map[v0 + dv, u0 + du] for dv in (0, 1) for du in (0, 1)])
            smooth = near.max(axis=0) <= 1.2 * near.min(axis=0)
            assert smooth.mean() > 0.9
            assert np.all(np.abs(lane.ys[vis] - seen)[smooth] <= 0.5)


def test_points_beyond_200m():
    fx = generate_scene(RoadSpec(y_span=(1.0, 400.0)), 1)
    lab = label_points(fx, [[0.0, 250.0, 0.0], [0.0, 199.0, 0.0]])
    assert lab.tolist() == [L.BEYOND_RANGE, L.VISIBLE]


def test_points_behind_or_beside_camera():
    fx = generate_scene(RoadSpec(), 1)
    lab = label_points(fx, [[0.0, -5.0, 0.0], [60.0, 10.0, 0.0], [0.0, 0.5, 0.0]])
    assert lab.tolist() == [L.OUT_OF_IMAGE] * 3


# -- finalize ------------------------------------------------------------------


def lane(n=10):
    ys = np.arange(1.0, n + 1.0)
    return Lane3D(LANELINE, np.column_stack([np.zeros(n), ys, np.zeros(n)]))


def test_finalize_all_visible_unchanged():
    out = finalize_ground_truth([lane()], [np.zeros(10, dtype=int)])
    assert len(out) == 1 and out[0].same_as(lane()) and out[0].visibility.all()


def test_finalize_truncates_background_tail():
    lab = np.array([L.OUT_OF_IMAGE, L.VISIBLE, L.VISIBLE, L.FOREGROUND_OCCLUDED, L.VISIBLE]
                   + [L.BACKGROUND_OCCLUDED] * 5)
    out = finalize_ground_truth([lane()], [lab])[0]
    np.testing.assert_array_equal(out.ys, [2, 3, 4, 5])
    assert out.visibility.all()


def test_finalize_keeps_interior_gap_invisible():
    lab = np.array([L.VISIBLE] * 3 + [L.BACKGROUND_OCCLUDED] * 3 + [L.VISIBLE] * 4)
    out = finalize_ground_truth([lane()], [lab])[0]
    assert len(out.points) == 10
    np.testing.assert_array_equal(out.visibility, lab == L.VISIBLE)


def test_finalize_removes_lane_beyond_range():
    assert finalize_ground_truth([lane()], [np.full(10, L.BEYOND_RANGE)]) == []


def test_finalize_on_crest_fixture():
    fx = crest_fixture()
    out = finalize_ground_truth(fx.lanes_gt, label_occlusion(fx))
    assert len(out) == len(fx.lanes_gt)
    for lane_out in out:
        assert lane_out.ys[-1] < 55.0


# -- pseudo predictions -----------------------------------------------------------


def four_lanes():
    return road_lanes(RoadSpec(lane_offsets=(-5.25, -1.75, 1.75, 5.25), y_span=(1.0, 100.0)))[:4]


def test_perturb_identity():
    gt = four_lanes()
    out = perturb_predictions(gt, 0, NoiseModel())
    assert len(out) == 4
    for a, b in zip(out, gt):
        assert a.same_as(b) and a.prob == 1.0


def test_perturb_drop_replays_generator():
    gt = four_lanes()
    out = perturb_predictions(gt, 11, NoiseModel(drop_rate=0.25))
    assert len(out) == 3
    dropped = int(np.random.default_rng(11).choice(4, size=1, replace=False)[0])
    kept = [g for i, g in enumerate(gt) if i != dropped]
    assert all(a.same_as(b) for a, b in zip(out, kept))


def test_perturb_small_noise_keeps_perfect_f():
    gt = four_lanes()
    pred = perturb_predictions(gt, 5, NoiseModel(sigma_x=0.2))
    rep = evaluate([EvalFrame("a", gt, pred)], MatchConfig())
    assert rep.f_max == 1.0
    assert any(not a.same_as(b) for a, b in zip(pred, gt))


def test_perturb_spurious_lanes():
    gt = four_lanes()
    noise = NoiseModel(spurious_rate=0.5)
    out = perturb_predictions(gt, 2, noise)
    assert len(out) == 6
    for s in out[4:]:
        assert noise.spurious_prob[0] <= s.prob <= noise.spurious_prob[1]
        shifts = [s.xs[0] - g.xs[0] for g in gt if np.allclose(s.points[:, 1:], g.points[:, 1:])]
        assert any(abs(d) >= 3.0 for d in shifts)


def test_perturb_is_deterministic():
    gt = four_lanes()
    noise = NoiseModel(0.3, 0.1, 0.25, 0.5, true_prob=(0.5, 1.0))
    a = perturb_predictions(gt, 9, noise)
    b = perturb_predictions(gt, 9, noise)
    assert len(a) == len(b) and all(x.same_as(y) and x.prob == y.prob for x, y in zip(a, b))
