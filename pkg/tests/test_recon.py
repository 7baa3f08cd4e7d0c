import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import make_smoothing_spline

from motionretarget.recon import (ReconConfig, angle_mask, average_shape, detect_angle_outliers, detect_outliers,
                                  fit_positions_spline, fit_spline, outlier_sources, reconstruct, regularize_motion,
                                  smoothing_spline_values)
from motionretarget.skeleton import Motion, bone_offsets, fk_batch
from motionretarget.synth import ScenarioSpec, generate


def test_average_shape_examples(rng):
    b = rng.uniform(-1, 1, 10)
    assert np.allclose(average_shape([b, b, b]), b, atol=1e-15)
    e0 = np.eye(10)[0]
    assert np.array_equal(average_shape([e0, -e0]), np.zeros(10))
    many = rng.uniform(-2, 2, (100, 10))
    want = np.array([sum(many[i, k] for i in range(100)) / 100 for k in range(10)])
    assert np.abs(average_shape(many) - want).max() < 1e-12


def test_average_shape_empty():
    with pytest.raises(ValueError):
        average_shape([])


@settings(max_examples=20, deadline=None)
@given(st.integers(5, 60), st.floats(1e-6, 1e2), st.integers(0, 2**31 - 1))
def test_smoothing_spline_matches_scipy(n, lam, seed):
    r = np.random.default_rng(seed)
    t = np.arange(n) / 30.0
    y = r.normal(size=n)
    want = make_smoothing_spline(t, y, lam=lam)(t)
    assert np.allclose(smoothing_spline_values(t, y, lam), want, atol=1e-8 * (1 + np.abs(y).max()))


def test_weighted_spline_matches_scipy(rng):
    t = np.arange(40) / 30.0
    y = rng.normal(size=40)
    w = rng.uniform(0.1, 2.0, 40)
    want = make_smoothing_spline(t, y, w=w, lam=1e-3)(t)
    assert np.allclose(smoothing_spline_values(t, y, 1e-3, w), want, atol=1e-9)


def test_cutoff_gives_half_gain():
    cfg = ReconConfig(cutoff_hz=5.0)
    fps = 240.0
    n = 2400
    t = np.arange(n) / fps
    y = np.sin(2 * np.pi * 5.0 * t)
    g = smoothing_spline_values(t, y, cfg.spline_lambda(fps))
    mid = slice(n // 4, 3 * n // 4)
    assert abs(np.abs(g[mid]).max() - 0.5) < 0.02


def test_constant_positions_reproduced():
    pos = np.tile(np.random.default_rng(0).normal(size=(1, 24, 3)), (30, 1, 1))
    sp = fit_positions_spline(pos, 30.0)
    assert np.abs(sp(np.linspace(0, 29, 97)) - pos[0]).max() <= 1e-9


def test_cubic_reproduced_without_smoothing():
    k = np.arange(20, dtype=float)
    t = k / 30.0
    c = 0.3 * t**3 - t**2 + 0.5 * t + 2.0
    pos = np.broadcast_to(c[:, None, None], (20, 24, 3)).copy()
    sp = fit_positions_spline(pos, 30.0, ReconConfig(smoothing=0.0))
    q = np.linspace(0, 19, 77)
    tq = q / 30.0
    want = 0.3 * tq**3 - tq**2 + 0.5 * tq + 2.0
    assert np.abs(sp(q)[:, 5, 1] - want).max() <= 1e-8


def test_noisy_sinusoid_is_denoised(rng):
    t = np.arange(120) / 30.0
    clean = np.sin(2 * np.pi * 0.7 * t)
    noise = rng.normal(scale=0.05, size=(120, 24, 3))
    sp = fit_positions_spline(clean[:, None, None] + noise, 30.0)
    assert np.sqrt(np.mean((sp.values - clean[:, None, None]) ** 2)) < np.sqrt(np.mean(noise**2))


def test_too_few_frames():
    with pytest.raises(ValueError):
        fit_positions_spline(np.zeros((3, 24, 3)), 30.0)


def smooth_positions(n=90, fps=30.0):
    t = np.arange(n) / fps
    base = np.random.default_rng(5).normal(size=(24, 3))
    wave = np.stack([np.sin(2 * np.pi * 0.5 * t), np.cos(2 * np.pi * 0.3 * t), 0.2 * t], axis=1)
    return base[None] + 0.2 * wave[:, None, :]


def test_smooth_motion_has_no_outliers():
    mask = detect_outliers(fit_positions_spline(smooth_positions(), 30.0))
    assert mask.all()


def test_identical_frames_have_no_outliers():
    pos = np.zeros((40, 24, 3))
    assert detect_outliers(fit_positions_spline(pos, 30.0)).all()


@pytest.mark.parametrize("frame,joint", [(20, 7), (0, 0), (39, 23), (5, 15)])
def test_single_spike_flagged_exactly(frame, joint):
    pos = np.tile(np.random.default_rng(1).normal(size=(1, 24, 3)), (40, 1, 1))
    pos[frame, joint] += [0.5, 0, 0]
    mask = detect_outliers(fit_positions_spline(pos, 30.0))
    want = np.ones((40, 24), dtype=bool)
    want[frame, joint] = False
    assert np.array_equal(mask, want)


def test_angle_mask_drops_parent(skel):
    pm = np.ones((2, 24), dtype=bool)
    pm[1, 4] = False
    am = angle_mask(skel, pm)
    assert not am[1, skel.parents[4]] and am.sum() == 47


def test_gamma_zero_keeps_angles(skel, rng):
    th = rng.normal(size=(10, 24, 3)) * 0.3
    m = Motion(30.0, th, np.zeros((10, 3)))
    sp = fit_spline(m, skel, np.zeros(10))
    cfg = ReconConfig(smooth_root=False, iterations=50)
    out = regularize_motion(m, skel, np.zeros(10), sp, None, 0.0, cfg).motion
    assert np.array_equal(out.theta, th)


def test_constant_motion_spike_is_repaired(skel):
    n = 40
    th = np.zeros((n, 24, 3))
    th[:, 16, 2] = -1.2
    th[:, 17, 2] = 1.2
    th[20, 4, 0] = 0.9  # knee spike moves the ankle and foot
    m = Motion(30.0, th, np.tile([0, 0.93, 0], (n, 1)))
    res = reconstruct(m, skel, np.zeros((1, 10)), ReconConfig(iterations=300))
    clean = th.copy()
    clean[20, 4, 0] = 0
    off = bone_offsets(skel, np.zeros(10))
    want = fk_batch(skel, off, clean[[20]], m.root_t[[20]])[1][0]
    got = fk_batch(skel, off, res.motion.theta[[20]], res.motion.root_t[[20]])[1][0]
    assert np.linalg.norm(got - want, axis=1).max() < 0.01
    assert set(map(tuple, np.argwhere(~res.mask))) == {(20, 7), (20, 10)}
    assert res.outliers == [(20, 4)]
    assert outlier_sources(skel, res.mask) == [(20, 4)]
    assert not res.angle_inliers[20, 4]


def test_wrist_spike_found_in_angle_space(skel):
    # a wrist twist barely moves the short hand bone, so only the angle track reveals it
    m = slow_motion()
    th = m.theta.copy()
    th[30, 21] += [0.0, 0.8, 0.0]
    flags = detect_angle_outliers(Motion(30.0, th, m.root_t))
    assert set(map(tuple, np.argwhere(~flags))) == {(30, 21)}
    res = reconstruct(Motion(30.0, th, m.root_t), skel, np.zeros((1, 10)), ReconConfig(iterations=50))
    assert (30, 21) in res.outliers


def test_angle_check_can_be_disabled():
    m = slow_motion()
    th = m.theta.copy()
    th[30, 21, 1] += 0.8
    assert detect_angle_outliers(Motion(30.0, th, m.root_t), ReconConfig(angle_outlier_floor=None)).all()


def slow_motion(n=60):
    t = np.arange(n) / 30.0
    th = np.zeros((n, 24, 3))
    for j, amp in [(1, 0.3), (2, -0.3), (4, 0.4), (16, 0.5), (18, -0.4)]:
        th[:, j, 0] = amp * np.sin(2 * np.pi * 0.4 * t + j)
    root = np.stack([0.1 * t, np.full(n, 0.93), 0.4 * t], axis=1)
    return Motion(30.0, th, root)


def test_smooth_motion_is_near_fixed_point(skel):
    m = slow_motion()
    res = reconstruct(m, skel, np.zeros((1, 10)), ReconConfig(iterations=150))
    assert res.mask.all()
    assert np.abs(res.motion.theta - m.theta).max() < 1e-3
    reg = res.regularized
    assert np.all(reg.cost_after <= reg.cost_before + 1e-12)


def test_monotone_regularization_cost(skel, rng):
    sc = generate(ScenarioSpec("jump", duration=1.5, noise=0.02, seed=3))
    sp = fit_spline(sc.observed, skel, np.zeros(10))
    res = regularize_motion(sc.observed, skel, np.zeros(10), sp, None, 10.0, ReconConfig(iterations=60))
    assert all(b <= a + 1e-9 for a, b in zip(res.trace, res.trace[1:]))


def test_negative_gamma_rejected():
    with pytest.raises(ValueError):
        ReconConfig(gamma=-1)
