import json

import numpy as np
import pytest

from lane3d.cli import main
from lane3d.io import FrameRecord, read_jsonl, write_jsonl
from lane3d.scene import RoadSpec, road_lanes

from conftest import straight_lane


@pytest.fixture
def gt_file(tmp_path):
    lanes = road_lanes(RoadSpec(y_span=(1.0, 100.0)))
    frames = [FrameRecord(f"{k:03d}", None, lanes) for k in range(3)]
    path = tmp_path / "gt.jsonl"
    write_jsonl(path, frames)
    return path


def test_eval_self_match(tmp_path, gt_file, capsys):
    out = tmp_path / "r.json"
    assert main(["eval", "--gt", str(gt_file), "--pred", str(gt_file), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    for rep in doc["reports"].values():
        assert rep["ap"] == 1.0 and rep["f_max"] == 1.0
    assert doc["config"]["d_max"] == 1.5
    table = capsys.readouterr().out
    assert "laneline" in table and "centerline" in table


def test_eval_is_byte_identical(tmp_path, gt_file):
    pred = tmp_path / "pred.jsonl"
    assert main(["fixtures", "perturb", "--gt", str(gt_file), "--out", str(pred), "--seed", "4",
                 "--sigma-x", "0.4", "--drop-rate", "0.25", "--spurious-rate", "0.25"]) == 0
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert main(["eval", "--gt", str(gt_file), "--pred", str(pred), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_eval_config_precedence(tmp_path, gt_file):
    cfg = tmp_path / "c.txt"
    cfg.write_text("d_max = 2.5\nmatch_fraction = 0.5\nthresholds = 0.5\n")
    out = tmp_path / "r.json"
    assert main(["eval", "--gt", str(gt_file), "--pred", str(gt_file), "--out", str(out),
                 "--config", str(cfg), "--d-max", "1.0"]) == 0
    doc = json.loads(out.read_text())["config"]
    assert doc["d_max"] == 1.0 and doc["match_fraction"] == 0.5 and doc["thresholds"] == [0.5]


def test_eval_dump_matches(tmp_path, gt_file):
    out, dump = tmp_path / "r.json", tmp_path / "m.json"
    assert main(["eval", "--gt", str(gt_file), "--pred", str(gt_file), "--out", str(out),
                 "--dump-matches", str(dump)]) == 0
    assert json.loads(dump.read_text())


def test_eval_data_errors(tmp_path, gt_file):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"frame_id": "x", "lanes": [\n')
    out = tmp_path / "r.json"
    assert main(["eval", "--gt", str(gt_file), "--pred", str(bad), "--out", str(out)]) == 2
    assert main(["eval", "--gt", str(tmp_path / "missing"), "--pred", str(gt_file), "--out", str(out)]) == 2
    cfg = tmp_path / "c.txt"
    cfg.write_text("nonsense_key = 1\n")
    assert main(["eval", "--gt", str(gt_file), "--pred", str(gt_file), "--out", str(out),
                 "--config", str(cfg)]) == 2


def test_usage_errors(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()
    assert main([]) == 1
    assert main(["eval", "--gt", "x"]) == 1
    assert main(["fixtures", "gen", "--seed", "1"]) == 1
    assert main(["transform", "--to-ego", "--height", "1.5", "--z", "0.75", "4"]) == 1


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0


def test_transform(capsys):
    assert main(["transform", "--to-ego", "--height", "1.5", "--z", "0.75", "4", "20"]) == 0
    assert capsys.readouterr().out.split() == ["2.0", "10.0", "0.75"]
    assert main(["transform", "--to-topview", "--height", "1.5", "2", "10", "0.75"]) == 0
    assert capsys.readouterr().out.split() == ["4.0", "20.0"]
    assert main(["transform", "--to-topview", "--height", "1.5", "2", "10", "1.5"]) == 2


def test_anchors_round_trip(tmp_path, capsys):
    ys = np.array([3.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 65.0, 80.0, 100.0])
    from lane3d.geometry import CameraModel
    from lane3d.lanes import Lane3D

    cam = CameraModel.from_focal(1.5, 0.05, 400.0, (480, 360))
    lane = Lane3D("laneline", np.column_stack([np.full_like(ys, 2.0), ys, np.zeros_like(ys)]))
    src = tmp_path / "lanes.jsonl"
    write_jsonl(src, [FrameRecord("f", cam, [lane])])
    enc, dec = tmp_path / "enc.jsonl", tmp_path / "dec.jsonl"
    assert main(["anchors", "encode", "--in", str(src), "--out", str(enc)]) == 0
    assert read_jsonl(enc)[0].anchors is not None
    assert main(["anchors", "decode", "--in", str(enc), "--out", str(dec)]) == 0
    back = read_jsonl(dec)[0].lanes
    assert len(back) == 1
    np.testing.assert_allclose(back[0].points, lane.points, atol=1e-9)
    # a file without cameras cannot be encoded
    write_jsonl(src, [FrameRecord("f", None, [lane])])
    assert main(["anchors", "encode", "--in", str(src), "--out", str(enc)]) == 2


def test_loss_command(tmp_path, capsys):
    from lane3d.anchors import AnchorConfig, encode
    from lane3d.geometry import CameraModel

    cam = CameraModel.from_focal(1.5, 0.05, 400.0, (480, 360))
    gt = encode([straight_lane(2.0, 1, 100)], AnchorConfig(), 1.5)
    pred = gt.replace(x_offsets=gt.x_offsets + 0.1 * gt.visibility)
    write_jsonl(tmp_path / "gt.jsonl", [FrameRecord("f", cam, [], gt)])
    write_jsonl(tmp_path / "pred.jsonl", [FrameRecord("f", cam, [], pred)])
    out = tmp_path / "loss.json"
    assert main(["loss", "--pred", str(tmp_path / "pred.jsonl"), "--gt", str(tmp_path / "gt.jsonl"),
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["sum"]["offset_term"] == pytest.approx(1.1)


def test_fixtures_and_occlusion(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({
        "height_profile": [[0, 0], [100, 0]],
        "y_span": [1, 120],
        "occluders": [{"x": 1.75, "y": 25.0, "width": 1.8, "length": 4.5, "height": 1.5}],
    }))
    out_dir = tmp_path / "scene"
    assert main(["fixtures", "gen", "--spec", str(spec), "--seed", "7", "--out-dir", str(out_dir)]) == 0
    for name in ("scene.json", "lanes.jsonl", "depth.l3dr", "semantic.l3dr", "gt.jsonl"):
        assert (out_dir / name).exists()
    first = (out_dir / "depth.l3dr").read_bytes()
    assert main(["fixtures", "gen", "--spec", str(spec), "--seed", "7", "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "depth.l3dr").read_bytes() == first
    capsys.readouterr()
    assert main(["occlusion", "label", "--scene", str(out_dir), "--eps", "0.5"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["labels"]["foreground_occluded"] > 0
    assert (out_dir / "gt_final.jsonl").exists()


def test_fixtures_many_frames(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text("{}")
    out_dir = tmp_path / "many"
    assert main(["fixtures", "gen", "--spec", str(spec), "--seed", "0", "--frames", "3",
                 "--lanes-only", "--out-dir", str(out_dir)]) == 0
    frames = read_jsonl(out_dir / "gt.jsonl")
    assert [f.frame_id for f in frames] == ["000000", "000001", "000002"]


def test_fixtures_bad_spec(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"y_span": [10, 1]}))
    assert main(["fixtures", "gen", "--spec", str(spec), "--out-dir", str(tmp_path / "x")]) == 2
    spec.write_text("{not json")
    assert main(["fixtures", "gen", "--spec", str(spec), "--out-dir", str(tmp_path / "x")]) == 2
