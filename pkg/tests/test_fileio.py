import json

import numpy as np
import pytest

from motionretarget.config import load_config
from motionretarget.fileio import (InputError, read_camera, read_constraints, read_frames, read_image, read_mesh,
                                   read_motion, write_image, write_labels, write_motion, write_obj)
from motionretarget.skeleton import Motion
from motionretarget.synth import default_camera


def test_motion_roundtrip(tmp_path, rng):
    m = Motion(24.0, rng.normal(size=(4, 24, 3)), rng.normal(size=(4, 3)))
    write_motion(tmp_path / "m.json", m, np.arange(10) * 0.1, "smpl24")
    again, betas, header = read_motion(tmp_path / "m.json")
    assert np.array_equal(again.theta, m.theta) and np.array_equal(again.root_t, m.root_t)
    assert again.fps == 24.0 and header["skeleton_ref"] == "smpl24"
    assert np.allclose(betas, [np.arange(10) * 0.1])


def test_syntax_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "header": {"fps": 30,\n}')
    with pytest.raises(InputError, match="line 3"):
        read_motion(p)


def test_schema_error_names_field(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"header": {"fps": 30, "frame_count": 1}, "frames": [{"theta": [0] * 71, "root_t": [0, 0, 0]}]}))
    with pytest.raises(InputError, match=r"frames\[0\]\.theta"):
        read_motion(p)


def test_frame_count_mismatch(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"header": {"fps": 30, "frame_count": 2}, "frames": [{"theta": [0] * 72, "root_t": [0, 0, 0]}]}))
    with pytest.raises(InputError, match="frame_count"):
        read_motion(p)


def test_constraints_accept_joint_names(tmp_path, skel):
    p = tmp_path / "c.json"
    p.write_text(json.dumps([{"frame": 3, "joint": "left_foot", "kind": "p3d", "target": [0, 0, 0]}]))
    cs = read_constraints(p, skel)
    assert cs.constraints[0].joint == 10


def test_unknown_joint_name(tmp_path, skel):
    p = tmp_path / "c.json"
    p.write_text(json.dumps([{"frame": 3, "joint": "tail", "kind": "p3d", "target": [0, 0, 0]}]))
    with pytest.raises(InputError, match=r"\[0\]"):
        read_constraints(p, skel)


def test_camera_roundtrip(tmp_path):
    cam = default_camera()
    p = tmp_path / "cam.json"
    p.write_text(json.dumps(cam.to_dict()))
    again = read_camera(p)
    assert np.array_equal(again.R, cam.R) and np.array_equal(again.t, cam.t)


def test_mesh_roundtrip(tmp_path, bar):
    write_obj(tmp_path / "m.obj", bar.vertices, bar.triangles)
    write_labels(tmp_path / "m.labels", bar.labels)
    mesh = read_mesh(tmp_path / "m.obj", tmp_path / "m.labels")
    assert np.array_equal(mesh.vertices, bar.vertices) and np.array_equal(mesh.triangles, bar.triangles)


def test_label_count_mismatch(tmp_path, bar):
    write_obj(tmp_path / "m.obj", bar.vertices, bar.triangles)
    write_labels(tmp_path / "m.labels", bar.labels[:-1])
    with pytest.raises(InputError):
        read_mesh(tmp_path / "m.obj", tmp_path / "m.labels")


def test_images(tmp_path, rng):
    a = rng.integers(0, 256, (12, 14, 3))
    write_image(tmp_path / "f000.png", a)
    write_image(tmp_path / "f001.png", a[::-1])
    frames = read_frames(tmp_path)
    assert len(frames) == 2 and np.array_equal(frames[0], a)
    (tmp_path / "g.json").write_text("[[0, 1], [2, 3]]")
    assert read_image(tmp_path / "g.json").tolist() == [[0, 1], [2, 3]]


def test_config_precedence(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text("[retarget]\nlambda1 = 2.0\niterations = 50\n")
    cfg = load_config(p, {"retarget.iterations": 7, "retarget.lambda2": None})
    assert cfg.retarget.lambda1 == 2.0 and cfg.retarget.iterations == 7 and cfg.retarget.lambda2 == 1.0
    assert load_config().recon.gamma == 10.0


def test_config_rejects_unknown_keys(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"retarget": {"lambda9": 1}}))
    with pytest.raises(InputError, match="lambda9"):
        load_config(p)


def test_config_rejects_bad_values(tmp_path):
    p = tmp_path / "cfg.toml"
    p.write_text("[retarget]\nlambda1 = -1.0\n")
    with pytest.raises(InputError):
        load_config(p)
