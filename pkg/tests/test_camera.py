import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from motionretarget.camera import (BehindCameraError, CameraIntrinsics, backproject, project,
                                   project_jacobian, project_world)

from oracles import project_pinhole, rotvec_matrix

K = CameraIntrinsics(fx=1000, fy=1000, cx=960, cy=540, width=1920, height=1080)


def test_principal_axis():
    assert np.allclose(project([0, 0, 1], K), [960, 540])


def test_pinhole_arithmetic():
    assert np.allclose(project([0.1, 0, 1], K), [1060, 540])


@given(arrays(np.float64, 3, elements=st.floats(-5, 5)), st.floats(0.1, 10))
def test_scale_invariance(p, s):
    p = p.copy()
    p[2] = abs(p[2]) + 0.5
    assert np.allclose(project(p, K), project(s * p, K), rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("z", [0.0, -1.0, 1e-7])
def test_behind_camera(z):
    with pytest.raises(BehindCameraError):
        project([0, 0, z], K)


def test_jacobian_finite_differences(rng):
    p = np.array([0.3, -0.2, 2.5])
    J = project_jacobian(p, K)
    h = 1e-6
    for k in range(3):
        d = np.zeros(3)
        d[k] = h
        assert np.allclose((project(p + d, K) - project(p - d, K)) / (2 * h), J[:, k], atol=1e-5)


def test_posed_camera_matches_oracle(rng):
    R = rotvec_matrix([0.1, -0.3, 0.2])
    t = np.array([0.2, 0.1, 4.0])
    cam = CameraIntrinsics(800, 820, 500, 400, 1000, 800, R, t)
    for p in rng.normal(size=(20, 3)):
        assert np.allclose(project_world(p, cam), project_pinhole(p, 800, 820, 500, 400, R, t), atol=1e-9)


@given(arrays(np.float64, 2, elements=st.floats(0, 2000)), st.floats(0.1, 50))
def test_backproject_inverts_project(pix, depth):
    assert np.allclose(project(backproject(pix, depth, K), K), pix, atol=1e-8)


def test_dict_roundtrip():
    cam = CameraIntrinsics(800, 820, 500, 400, 1000, 800, rotvec_matrix([0, 0.5, 0]), [1, 2, 3])
    again = CameraIntrinsics.from_dict(cam.to_dict())
    assert np.allclose(again.R, cam.R) and np.allclose(again.t, cam.t)
    assert CameraIntrinsics.from_dict(K.to_dict()).to_dict() == K.to_dict()


def test_invalid_intrinsics():
    with pytest.raises(ValueError):
        CameraIntrinsics(0, 1000, 0, 0, 10, 10)
