import csv
import json

import numpy as np
import pytest

from motionretarget.cli import main
from motionretarget.fileio import read_motion, sha256, write_image, write_labels, write_motion, write_obj
from motionretarget.skeleton import Motion

from conftest import bar_mesh


@pytest.fixture(scope="module")
def pickup(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    rc = main(["synth", "--template", "pickup-box", "--ratio", "0.8", "--duration", "5", "--out-dir", str(out)])
    assert rc == 0
    return out


def test_synth_outputs(pickup):
    names = {p.name for p in pickup.iterdir()}
    assert {"source.json", "observed.json", "target.json", "constraints.json", "camera.json", "scenario.json",
            "manifest.json"} <= names
    manifest = json.loads((pickup / "manifest.json").read_text())
    for name, digest in manifest["outputs"].items():
        assert sha256(pickup / name) == digest


def test_synth_unknown_template(tmp_path):
    assert main(["synth", "--template", "cartwheel", "--out-dir", str(tmp_path / "x")]) == 2


def test_retarget_pickup_meets_constraints(pickup, tmp_path):
    out = tmp_path / "rt"
    rc = main(["retarget", "--motion", str(pickup / "source.json"), "--beta-target", str(pickup / "scenario.json"),
               "--constraints", str(pickup / "constraints.json"), "--camera", str(pickup / "camera.json"),
               "--optimize-root", "--out-dir", str(out)])
    assert rc == 0
    res = json.loads((out / "residuals.json").read_text())
    assert res["retargeted"]["max_3d_m"] < 0.01
    assert res["retargeted"]["end_effector_px"] < 0.25 * res["direct_transfer"]["end_effector_px"]
    rows = list(csv.DictReader(open(out / "loss_trace.csv")))
    assert rows and set(rows[0]) == {"window", "start", "stop", "iteration", "loss"}


def test_retarget_identity(tmp_path, rng):
    m = Motion(30.0, np.cumsum(rng.normal(size=(20, 24, 3)) * 0.01, axis=0), np.zeros((20, 3)))
    write_motion(tmp_path / "in.json", m, np.zeros(10))
    assert main(["retarget", "--motion", str(tmp_path / "in.json"), "--iterations", "20",
                 "--out-dir", str(tmp_path / "o")]) == 0
    out, _, _ = read_motion(tmp_path / "o" / "motion.json")
    assert np.abs(out.theta - m.theta).max() < 1e-4


def test_retarget_2d_without_camera(tmp_path, rng):
    write_motion(tmp_path / "in.json", Motion(30.0, np.zeros((5, 24, 3)), np.zeros((5, 3))))
    (tmp_path / "c.json").write_text(json.dumps([{"frame": 1, "joint": 23, "kind": "p2d", "target": [5, 5]}]))
    rc = main(["retarget", "--motion", str(tmp_path / "in.json"), "--constraints", str(tmp_path / "c.json"),
               "--out-dir", str(tmp_path / "o")])
    assert rc == 2 and not (tmp_path / "o").exists()


def test_retarget_invalid_constraint_frame(tmp_path):
    write_motion(tmp_path / "in.json", Motion(30.0, np.zeros((5, 24, 3)), np.zeros((5, 3))))
    (tmp_path / "c.json").write_text(json.dumps([{"frame": 9, "joint": 10, "kind": "p3d", "target": [0, 0, 0]}]))
    rc = main(["retarget", "--motion", str(tmp_path / "in.json"), "--constraints", str(tmp_path / "c.json"),
               "--out-dir", str(tmp_path / "o")])
    assert rc == 2


def test_malformed_json_writes_nothing(tmp_path):
    (tmp_path / "bad.json").write_text("{ not json")
    rc = main(["reconstruct", "--motion", str(tmp_path / "bad.json"), "--out-dir", str(tmp_path / "o")])
    assert rc == 2 and not (tmp_path / "o").exists()


def test_reconstruct_clean_walk(tmp_path):
    assert main(["synth", "--template", "walk", "--out-dir", str(tmp_path / "s")]) == 0
    assert main(["reconstruct", "--motion", str(tmp_path / "s" / "source.json"), "--iterations", "100",
                 "--out-dir", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert rep["outlier_count"] == 0
    assert rep["relative_motion_change"] < 0.01


def test_reconstruct_flags_injected_spikes(tmp_path):
    assert main(["synth", "--template", "walk", "--spikes", "3", "--seed", "4", "--out-dir", str(tmp_path / "s")]) == 0
    assert main(["reconstruct", "--motion", str(tmp_path / "s" / "observed.json"), "--iterations", "50",
                 "--out-dir", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    spikes = json.loads((tmp_path / "s" / "scenario.json").read_text())["spikes"]
    assert sorted([a["frame"], a["joint"]] for a in rep["outlier_angles"]) == sorted(spikes)


def silhouette_case(tmp_path, offset_px=0):
    from motionretarget.camera import CameraIntrinsics, project_world
    mesh = bar_mesh(20, 5, 5)
    K = CameraIntrinsics(500, 500, 320, 240, 640, 480, np.diag([1.0, -1.0, -1.0]), [-0.5, 0.05, 2.0])
    pix = np.round(project_world(mesh.vertices, K)).astype(int)
    img = np.zeros((480, 640), dtype=np.uint8)
    for (u, v), lab in zip(pix, mesh.labels):
        img[v, u + offset_px] = lab
    write_obj(tmp_path / "m.obj", mesh.vertices, mesh.triangles)
    write_labels(tmp_path / "m.labels", mesh.labels)
    write_image(tmp_path / "labels.png", img)
    (tmp_path / "cam.json").write_text(json.dumps(K.to_dict()))
    return mesh, ["deform", "--mesh", str(tmp_path / "m.obj"), "--labels", str(tmp_path / "m.labels"),
                  "--label-image", str(tmp_path / "labels.png"), "--camera", str(tmp_path / "cam.json"),
                  "--stride", "1"]


def test_deform_identity_silhouette(tmp_path):
    mesh, argv = silhouette_case(tmp_path)
    assert main(argv + ["--out-dir", str(tmp_path / "o")]) == 0
    v = np.array([[float(x) for x in line.split()[1:]] for line in open(tmp_path / "o" / "mesh.obj") if line[0] == "v"])
    assert np.abs(v - mesh.vertices).max() < 5e-3


def test_deform_offset_energy_non_increasing(tmp_path):
    _, argv = silhouette_case(tmp_path, offset_px=6)
    assert main(argv + ["--out-dir", str(tmp_path / "o")]) == 0
    e = [float(r["energy"]) for r in csv.DictReader(open(tmp_path / "o" / "energy.csv"))]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(e, e[1:]))


def test_deform_label_out_of_range(tmp_path):
    _, argv = silhouette_case(tmp_path)
    img = np.zeros((480, 640), dtype=np.uint8)
    img[10:20, 10:20] = 15
    write_image(tmp_path / "labels.png", img)
    assert main(argv + ["--out-dir", str(tmp_path / "o")]) == 2


def write_frames(d, frames):
    d.mkdir()
    for k, f in enumerate(frames):
        write_image(d / f"{k:04d}.png", f)


def test_eval_identical_and_shifted(tmp_path, rng):
    frames = [rng.integers(0, 256, (16, 16)).astype(np.uint8) for _ in range(30)]
    write_frames(tmp_path / "a", frames)
    write_frames(tmp_path / "b", frames[5:] + frames[:5])
    assert main(["eval", "--pred", str(tmp_path / "a"), "--ref", str(tmp_path / "a"), "--out-dir", str(tmp_path / "o1")]) == 0
    rep = json.loads((tmp_path / "o1" / "report.json").read_text())
    assert rep["aggregate"]["mse"] == 0.0 and abs(rep["aggregate"]["ssim"] - 1.0) < 1e-12
    assert main(["eval", "--pred", str(tmp_path / "b"), "--ref", str(tmp_path / "a"), "--window", "5",
                 "--out-dir", str(tmp_path / "o2")]) == 0
    rep = json.loads((tmp_path / "o2" / "report.json").read_text())
    assert rep["per_frame"]["mse"][:25] == [0.0] * 25


def test_eval_matches_library(tmp_path, rng):
    from motionretarget.metrics import windowed_score
    a = [rng.integers(0, 256, (14, 14)).astype(np.uint8) for _ in range(6)]
    b = [rng.integers(0, 256, (14, 14)).astype(np.uint8) for _ in range(6)]
    write_frames(tmp_path / "a", a)
    write_frames(tmp_path / "b", b)
    assert main(["eval", "--pred", str(tmp_path / "a"), "--ref", str(tmp_path / "b"), "--out-dir", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert np.allclose(rep["per_frame"]["ssim"], windowed_score(a, b, "ssim", 15))


def test_plot_constant_motion(tmp_path):
    write_motion(tmp_path / "m.json", Motion(30.0, np.zeros((10, 24, 3)), np.tile([0, 1, 0], (10, 1))))
    assert main(["plot", "--motion", str(tmp_path / "m.json"), "--joint", "left_hand", "--out-dir", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "o" / "trajectory.csv")))
    assert len({r["m"] for r in rows}) == 1
    assert (tmp_path / "o" / "trajectory.svg").read_text().lstrip().startswith("<?xml")


def test_plot_unknown_joint(tmp_path):
    write_motion(tmp_path / "m.json", Motion(30.0, np.zeros((10, 24, 3)), np.zeros((10, 3))))
    assert main(["plot", "--motion", str(tmp_path / "m.json"), "--joint", "tail", "--out-dir", str(tmp_path / "o")]) == 2


def test_replay_is_bitwise_identical(pickup, tmp_path):
    assert main(["replay", str(pickup / "manifest.json"), "--out-dir", str(tmp_path / "again")]) == 0
    manifest = json.loads((pickup / "manifest.json").read_text())
    for name, digest in manifest["outputs"].items():
        assert sha256(tmp_path / "again" / name) == digest


def test_unknown_flag_is_input_error(tmp_path):
    assert main(["retarget", "--bogus"]) == 2
