import numpy as np
import pytest

from motionretarget.camera import project_world
from motionretarget.skeleton import bone_offsets, fk_batch, motion_positions
from motionretarget.synth import TEMPLATES, ScenarioSpec, generate, scale_beta


@pytest.mark.parametrize("template", TEMPLATES)
def test_equal_shapes_give_identical_motions(template):
    sc = generate(ScenarioSpec(template, duration=5.0))
    assert np.array_equal(sc.source.theta, sc.target.theta)
    assert np.array_equal(sc.source.root_t, sc.target.root_t)
    assert np.array_equal(sc.source.theta, sc.observed.theta)


@pytest.mark.parametrize("template", TEMPLATES)
@pytest.mark.parametrize("ratio", [0.8, 1.25])
def test_target_meets_constraints(skel, template, ratio):
    beta_t = scale_beta(ratio)
    sc = generate(ScenarioSpec(template, duration=5.0, beta_target=beta_t.tolist()))
    assert len(sc.constraints) > 0
    pos = motion_positions(skel, beta_t, sc.target)
    for c in sc.constraints:
        p = pos[c.frame, c.joint]
        if c.kind == "p3d":
            assert np.linalg.norm(p - c.target) < 1e-9
        else:
            assert np.linalg.norm(project_world(p, sc.constraints.camera) - c.target) < 1e-6


def test_pickup_spans_are_hand_touches(skel):
    sc = generate(ScenarioSpec("pickup-box", duration=5.0))
    assert len(sc.touch_spans) == 2
    for start, stop, joint in sc.touch_spans:
        frames = {c.frame for c in sc.constraints if c.joint == joint}
        assert set(range(start, stop)) <= frames


def test_scale_beta_scales_bones(skel):
    assert np.allclose(bone_offsets(skel, scale_beta(0.8)), 0.8 * skel.rest_offsets)


def test_feet_stay_above_floor(skel):
    for template in TEMPLATES:
        sc = generate(ScenarioSpec(template, duration=5.0))
        pos = motion_positions(skel, np.zeros(10), sc.source)
        assert pos[:, [10, 11], 1].min() > -0.05


def test_seeded_runs_are_bitwise_identical():
    spec = ScenarioSpec("walk", noise=0.02, spikes=3, seed=11)
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.observed.theta, b.observed.theta) and a.spikes == b.spikes


def test_spikes_are_injected_where_reported():
    sc = generate(ScenarioSpec("walk", spikes=4, seed=2))
    diff = np.linalg.norm(sc.observed.theta - sc.source.theta, axis=-1)
    assert sorted(map(tuple, np.argwhere(diff > 0))) == sorted(sc.spikes)
    assert np.allclose(diff[diff > 0], 0.8)


def test_unknown_template():
    with pytest.raises(ValueError):
        ScenarioSpec("cartwheel")


def test_custom_schedule(skel):
    schedule = [{"joint": "right_hand", "kind": "p3d", "start": 10, "stop": 20}]
    sc = generate(ScenarioSpec("walk", constraint_schedule=schedule, beta_target=scale_beta(0.9).tolist()))
    assert sorted(c.frame for c in sc.constraints) == list(range(10, 20))
    assert {c.joint for c in sc.constraints} == {skel.joint_index("right_hand")}
