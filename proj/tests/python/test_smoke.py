import math

import numpy as np
import pytest

import geoperc


UNIT = [0, 0, 0, 1, 1, 1, 0, 0, 0]


def test_box_iou_shifted_unit_cubes():
    shifted = [0.5, 0, 0, 1, 1, 1, 0, 0, 0]
    assert geoperc.box_iou(UNIT, UNIT) == pytest.approx(1.0)
    assert geoperc.box_iou(UNIT, shifted) == pytest.approx(1 / 3)
    assert geoperc.box_iou_mc(UNIT, shifted, 200000, 3) == pytest.approx(1 / 3, abs=0.01)
    assert geoperc.box_corners(UNIT).shape == (8, 3)


def test_bad_box_raises():
    with pytest.raises(ValueError):
        geoperc.box_iou([0] * 8, UNIT)
    with pytest.raises(ValueError):
        geoperc.box_iou([0, 0, 0, -1, 1, 1, 0, 0, 0], UNIT)


def test_umeyama_recovers_similarity():
    rng = np.random.default_rng(0)
    src = rng.normal(size=(40, 3))
    rot = geoperc.euler_to_rotation(0.3, -0.2, 0.1)
    dst = 1.7 * src @ rot.T + np.array([0.5, -1.0, 2.0])
    s = geoperc.umeyama(src, dst)
    assert s["scale"] == pytest.approx(1.7, abs=1e-9)
    assert np.allclose(s["rotation"], rot, atol=1e-9)
    assert np.allclose(s["translation"], [0.5, -1.0, 2.0], atol=1e-9)
    assert np.allclose(geoperc.rotation_to_euler(rot), (0.3, -0.2, 0.1))


def test_parse_round_trips():
    text = geoperc.fence_json(geoperc.bbox3d_json([1, 2, 3, 0.5, 0.5, 0.5, 0.1, 0, 0]))
    assert geoperc.parse_bbox3d("Sure. " + text) == pytest.approx([1, 2, 3, 0.5, 0.5, 0.5, 0.1, 0, 0])
    assert geoperc.parse_frame(geoperc.frame_json(3)) == 3
    label, point = geoperc.parse_point_semantic(geoperc.point_semantic_json("chair", (0.1, 0.2, 1.5)))
    assert label == "chair" and point == pytest.approx((0.1, 0.2, 1.5))
    entries, dropped = geoperc.parse_detections(geoperc.detections_json([("cup", UNIT)]))
    assert entries[0][0] == "cup" and not dropped


def test_parse_error_carries_defect():
    with pytest.raises(geoperc.ParseError) as info:
        geoperc.parse_bbox3d("no json here")
    assert info.value.defect == "no_json"
    assert isinstance(info.value, ValueError)


def test_prompt_mentions_frames():
    prompt = geoperc.serialize_prompt("grounding_box", 4, query="the red chair")
    assert "the red chair" in prompt


def test_detection_and_grounding():
    shifted = [0.5, 0, 0, 1, 1, 1, 0, 0, 0]
    r = geoperc.detection_prf([([("cup", UNIT), ("cup", shifted)], [("cup", UNIT)])], ["cup"], 0.25)
    assert (r["tp"], r["fp"], r["fn"]) == (1, 1, 0)
    assert r["f1"] == pytest.approx(2 / 3)
    g = geoperc.grounding_accuracy([shifted, None], [UNIT, UNIT])
    assert g["acc_025"] == pytest.approx(0.5) and g["acc_05"] == 0.0
    assert g["n_parse_failures"] == 1


def test_caption_scores_exact_and_gated():
    refs = [["a red chair by the desk", "the chair is red"], ["a tall lamp", "lamp in the corner"]]
    cands = ["a red chair by the desk", "a tall lamp"]
    full = geoperc.caption_scores(cands, refs, [0.9, 0.9])
    assert full["bleu4"] == pytest.approx(1.0) and full["rouge_l"] == pytest.approx(1.0)
    none = geoperc.caption_scores(cands, refs, [0.1, 0.1])
    assert none["cider"] == none["bleu4"] == none["rouge_l"] == 0.0


def test_pointmap_eval_modes():
    rng = np.random.default_rng(1)
    gt = rng.uniform(-1, 1, size=(50, 3))
    rot = geoperc.euler_to_rotation(0.4, 0.0, 0.2)
    pred = 0.5 * gt @ rot.T + 3.0
    aligned = geoperc.pointmap_eval(pred, gt, "aligned")
    metric = geoperc.pointmap_eval(pred, gt, "metric")
    assert aligned["accuracy"]["mean"] < 1e-9
    assert metric["accuracy"]["mean"] > 1.0


def test_gated_fusion_endpoints():
    rng = np.random.default_rng(2)
    v = rng.normal(size=(2, 2, 3))
    g = rng.normal(size=(2, 2, 3))
    with pytest.raises(ValueError):
        geoperc.fuse_gated(v, g, np.full_like(v, 1.0))
    near_one = np.full_like(v, np.nextafter(1.0, 0.0))
    assert np.allclose(geoperc.fuse_gated(v, g, near_one), v, atol=1e-12)
    w1, b1 = rng.normal(size=(3, 6)) * 0.1, np.zeros(3)
    w2, b2 = rng.normal(size=(3, 3)) * 0.1, np.zeros(3)
    gate = geoperc.gate_coefficients(v, g, w1, b1, w2, b2)
    assert gate.shape == v.shape and ((gate > 0) & (gate < 1)).all()
    fused = geoperc.fuse_gated(v, g, gate)
    assert np.allclose(fused, gate * v + (1 - gate) * g)


def test_grad_check_passes():
    r = geoperc.grad_check(channels=3, seed=4)
    assert r["passed"] and r["parameters_checked"] > 0
    assert math.isfinite(r["max_relative_error"])


def write_flat_scene(root):
    # Four frames facing a wall 2 m away, one object on the wall at the optical axis.
    w, h = 32, 24
    frames = []
    for i in range(4):
        depth = root / f"depth_{i}.bin"
        np.full(w * h, 2000, dtype="<u2").tofile(depth)
        (root / f"depth_{i}.bin.json").write_text(f'{{"width": {w}, "height": {h}, "depth_scale": 1000}}')
        frames.append({
            "index": i, "image": f"rgb_{i}.ppm", "depth": f"depth_{i}.bin",
            "pose": [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1],
            "intrinsics": {"fx": 20, "fy": 20, "cx": 16, "cy": 12, "width": w, "height": h},
            "timestamp": float(i),
        })
    import json
    (root / "scene.json").write_text(json.dumps({"scene_id": "flat", "frames": frames}))
    (root / "ann.json").write_text(json.dumps({"flat": [{"label": "clock", "center": [0, 0, 2]}]}))


def test_generate_samples(tmp_path):
    write_flat_scene(tmp_path)
    samples, stats = geoperc.generate_samples(str(tmp_path), str(tmp_path / "ann.json"))
    assert stats["accepted"] == len(samples) >= 1
    s = samples[0]
    assert s["label"] == "clock" and s["frame_indices"] == [0, 1, 2, 3]
    assert s["pixel"] == (16, 12)
    assert s["point"] == pytest.approx((0.0, 0.0, 2.0))
