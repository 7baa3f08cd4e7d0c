"""Procedural paired-motion scenarios with exactly satisfiable constraints.

Each template scripts joint angles analytically. Constraint targets are the
source actor's end-effector positions (the scene interaction points). The
ground-truth target motion keeps the source angles and shifts the root by a
correction that puts the constrained end-effector exactly on its target at
every constrained frame, interpolated linearly in between.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .camera import CameraIntrinsics, project_world
from .retarget import Constraint, ConstraintSet
from .skeleton import NUM_BETAS, NUM_JOINTS, Motion, Skeleton, bone_offsets, fk_batch, load_skeleton

TEMPLATES = ("walk", "jump", "pickup-box", "touch-cone")

PELVIS, L_HIP, R_HIP, SPINE1, L_KNEE, R_KNEE, SPINE2, L_ANKLE, R_ANKLE = range(9)
SPINE3, L_FOOT, R_FOOT, NECK, L_COLLAR, R_COLLAR, HEAD = range(9, 16)
L_SHOULDER, R_SHOULDER, L_ELBOW, R_ELBOW, L_WRIST, R_WRIST, L_HAND, R_HAND = range(16, 24)

# SMPL-like rest pelvis height above the floor for the bundled skeleton
PELVIS_HEIGHT = 0.93
ACTOR_DEPTH = -4.0


def default_camera() -> CameraIntrinsics:
    """1000x1080 pinhole camera at 1 m height looking down world -z (image y down)."""
    R = np.diag([1.0, -1.0, -1.0])
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=500.0, cy=540.0, width=1000, height=1080,
                            R=R, t=-R @ np.array([0.0, 1.0, 0.0]))


def scale_beta(ratio: float) -> np.ndarray:
    """Shape coefficients that scale every bone of the default skeleton by `ratio`."""
    beta = np.zeros(NUM_BETAS)
    beta[0] = (ratio - 1.0) / 0.1
    return beta


@dataclass
class ScenarioSpec:
    template: str = "walk"
    duration: float = 4.0
    fps: float = 30.0
    beta_source: list = field(default_factory=lambda: [0.0] * NUM_BETAS)
    beta_target: list = field(default_factory=lambda: [0.0] * NUM_BETAS)
    # list of {"joint", "kind", "start", "stop"} spans; None -> template default
    constraint_schedule: list | None = None
    noise: float = 0.0        # std of Gaussian joint-angle noise, radians
    spikes: int = 0           # number of single-frame spike outliers
    spike_magnitude: float = 0.8  # radians added to one joint angle
    seed: int = 0

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}; expected one of {TEMPLATES}")
        if self.fps <= 0 or self.duration * self.fps < 4:
            raise ValueError("scenario needs at least 4 frames")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.fps))


@dataclass
class Scenario:
    spec: ScenarioSpec
    source: Motion          # noise-free source motion
    observed: Motion        # source with noise and spikes (what an estimator would deliver)
    target: Motion          # ground-truth target motion
    constraints: ConstraintSet
    spikes: list            # (frame, joint) of injected spikes
    touch_spans: list       # (start, stop, joint) constrained spans


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def _pulse(t, t0, t1, t2, t3):
    """0 before t0, ramps to 1 over [t0, t1], holds to t2, ramps back to 0 by t3."""
    return _smoothstep((t - t0) / (t1 - t0)) * (1 - _smoothstep((t - t2) / (t3 - t2)))


def _arm(side: int, lower, swing):
    """Axis-angle for a collar rotation that lowers the arm and swings it about world x."""
    n = len(lower)
    rz = Rotation.from_euler("z", -side * np.asarray(lower))
    rx = Rotation.from_euler("x", np.broadcast_to(swing, (n,)))
    return (rx * rz).as_rotvec()


def _base(n):
    return np.zeros((n, NUM_JOINTS, 3)), np.zeros((n, 3))


def _walk(t, start_z=-4.8, speed=0.45):
    n = len(t)
    theta, root = _base(n)
    ph = 2 * np.pi * 1.0 * t
    theta[:, L_HIP, 0] = -0.35 * np.sin(ph)
    theta[:, R_HIP, 0] = 0.35 * np.sin(ph)
    theta[:, L_KNEE, 0] = 0.3 * (1 - np.cos(ph + 0.5)) / 2 + 0.05
    theta[:, R_KNEE, 0] = 0.3 * (1 + np.cos(ph + 0.5)) / 2 + 0.05
    theta[:, L_ANKLE, 0] = 0.1 * np.sin(ph)
    theta[:, R_ANKLE, 0] = -0.1 * np.sin(ph)
    theta[:, L_COLLAR] = _arm(+1, np.full(n, 1.25), 0.3 * np.sin(ph))
    theta[:, R_COLLAR] = _arm(-1, np.full(n, 1.25), -0.3 * np.sin(ph))
    theta[:, L_ELBOW, 1] = 0.2
    theta[:, R_ELBOW, 1] = -0.2
    theta[:, SPINE2, 1] = 0.05 * np.sin(ph)
    root[:, 1] = PELVIS_HEIGHT - 0.02 + 0.015 * np.cos(2 * ph)
    root[:, 2] = start_z + speed * t
    return theta, root


def _jump(t):
    n = len(t)
    theta, root = _base(n)
    crouch = _pulse(t, 0.3, 0.8, 0.85, 1.0) + _pulse(t, 1.5, 1.65, 1.75, 2.3)
    air = np.clip((t - 1.0) / 0.5, 0.0, 1.0)
    height = np.where((t > 1.0) & (t < 1.5), 4 * 0.3 * air * (1 - air), 0.0)
    theta[:, L_HIP, 0] = theta[:, R_HIP, 0] = -0.7 * crouch
    theta[:, L_KNEE, 0] = theta[:, R_KNEE, 0] = 1.2 * crouch
    theta[:, L_ANKLE, 0] = theta[:, R_ANKLE, 0] = -0.45 * crouch
    theta[:, SPINE1, 0] = 0.25 * crouch
    swing = -1.2 * _pulse(t, 0.8, 1.05, 1.3, 1.6) + 0.4 * crouch
    theta[:, L_COLLAR] = _arm(+1, np.full(n, 1.2), swing)
    theta[:, R_COLLAR] = _arm(-1, np.full(n, 1.2), swing)
    root[:, 1] = PELVIS_HEIGHT - 0.02 - 0.14 * crouch + height
    root[:, 2] = ACTOR_DEPTH
    return theta, root, height <= 0.0


def _pickup(t):
    n = len(t)
    theta, root = _base(n)
    # two holds at the box: pick it up low, then set it down higher
    bend1 = _pulse(t, 0.7, 1.4, 1.75, 2.4)
    bend2 = _pulse(t, 3.6, 4.2, 4.65, 5.2)
    bend = bend1 + 0.6 * bend2
    carry = _pulse(t, 1.75, 2.4, 3.6, 4.2)
    theta[:, SPINE1, 0] = 0.55 * bend
    theta[:, SPINE2, 0] = 0.25 * bend
    theta[:, L_HIP, 0] = theta[:, R_HIP, 0] = -0.5 * bend
    theta[:, L_KNEE, 0] = theta[:, R_KNEE, 0] = 0.9 * bend
    theta[:, L_ANKLE, 0] = theta[:, R_ANKLE, 0] = -0.4 * bend
    theta[:, L_COLLAR] = _arm(+1, np.full(n, 1.3) - 0.2 * bend, -0.9 * bend - 0.9 * carry)
    theta[:, R_COLLAR] = _arm(-1, np.full(n, 1.3), -0.5 * bend)
    theta[:, L_ELBOW, 1] = 0.15 + 0.9 * carry
    root[:, 1] = PELVIS_HEIGHT - 0.02 - 0.08 * bend
    root[:, 2] = ACTOR_DEPTH + 0.15 * np.clip(t / 5.0, 0.0, 1.0)
    return theta, root


def _cone(t):
    n = len(t)
    walk_theta, walk_root = _walk(np.minimum(t, 1.5), start_z=-4.6, speed=0.4)
    still = _smoothstep((t - 1.2) / 0.4)
    theta = walk_theta * (1 - still)[:, None, None]
    root = walk_root.copy()
    root[:, 1] = (1 - still) * walk_root[:, 1] + still * (PELVIS_HEIGHT - 0.02)
    reach = _pulse(t, 1.5, 2.1, 2.6, 3.2)
    theta[:, SPINE1, 0] += 0.5 * reach
    theta[:, SPINE2, 1] += -0.2 * reach
    theta[:, L_HIP, 0] += -0.35 * reach
    theta[:, R_HIP, 0] += -0.35 * reach
    theta[:, L_KNEE, 0] += 0.6 * reach
    theta[:, R_KNEE, 0] += 0.6 * reach
    theta[:, L_ANKLE, 0] += -0.25 * reach
    theta[:, R_ANKLE, 0] += -0.25 * reach
    rest_arm = 1.25 * (1 - still) + 1.3 * still
    theta[:, L_COLLAR] = _arm(+1, rest_arm, 0.3 * np.sin(2 * np.pi * np.minimum(t, 1.5)) * (1 - still))
    theta[:, R_COLLAR] = _arm(-1, rest_arm - 0.2 * reach, -0.3 * np.sin(2 * np.pi * np.minimum(t, 1.5)) * (1 - still) - 0.8 * reach)
    root[:, 1] -= 0.035 * reach
    return theta, root


def _frames_between(t, t0, t1):
    idx = np.flatnonzero((t >= t0) & (t <= t1))
    return int(idx[0]), int(idx[-1]) + 1


def _script(spec: ScenarioSpec):
    """Return (theta, root, default schedule) for the template."""
    n = spec.n_frames
    t = np.arange(n) / spec.fps
    if spec.template == "walk":
        theta, root = _walk(t)
        schedule = [{"joint": "feet", "kind": "p3d", "start": 0, "stop": n}]
    elif spec.template == "jump":
        theta, root, grounded = _jump(t)
        frames = np.flatnonzero(grounded)
        schedule = [{"joint": L_FOOT, "kind": "p3d", "frames": frames.tolist()}]
    elif spec.template == "pickup-box":
        theta, root = _pickup(t)
        s1 = _frames_between(t, 1.4, 1.75)
        s2 = _frames_between(t, 4.2, 4.65)
        schedule = [{"joint": L_HAND, "kind": "p3d", "start": s1[0], "stop": s1[1], "label": "pick up box"},
                    {"joint": L_HAND, "kind": "p3d", "start": s2[0], "stop": s2[1], "label": "put down box"}]
    else:
        theta, root = _cone(t)
        s = _frames_between(t, 2.1, 2.6)
        schedule = [{"joint": R_HAND, "kind": "p2d", "start": s[0], "stop": s[1], "label": "touch cone"}]
    return theta, root, schedule


def _expand(schedule, pos_s, skel: Skeleton):
    """Turn schedule spans into per-frame (frame, joint, kind, label) entries, one per frame."""
    entries = {}
    spans = []
    for item in schedule:
        frames = item.get("frames")
        if frames is None:
            frames = range(int(item["start"]), int(item["stop"]))
        frames = [int(f) for f in frames]
        joint = item["joint"]
        for f in frames:
            if joint == "feet":
                # the lower foot is the planted one
                j = L_FOOT if pos_s[f, L_FOOT, 1] <= pos_s[f, R_FOOT, 1] else R_FOOT
            else:
                j = skel.joint_index(joint)
            entries[f] = (j, item.get("kind", "p3d"), item.get("label", ""))
        if "frames" not in item and joint != "feet":
            spans.append((min(frames), max(frames) + 1, skel.joint_index(joint)))
    return dict(sorted(entries.items())), spans


def generate(spec: ScenarioSpec, skel: Skeleton | None = None, camera: CameraIntrinsics | None = None) -> Scenario:
    skel = skel or load_skeleton()
    camera = camera or default_camera()
    rng = np.random.default_rng(spec.seed)
    theta, root, schedule = _script(spec)
    if spec.constraint_schedule is not None:
        schedule = spec.constraint_schedule
    off_s = bone_offsets(skel, spec.beta_source)
    off_t = bone_offsets(skel, spec.beta_target)
    pos_s = fk_batch(skel, off_s, theta, root)[1]
    pos_t = fk_batch(skel, off_t, theta, root)[1]
    entries, spans = _expand(schedule, pos_s, skel)

    constraints = []
    n = len(theta)
    frames = np.array(list(entries), dtype=int)
    corr = np.zeros((len(frames), 3))
    for i, (f, (j, kind, label)) in enumerate(entries.items()):
        point = pos_s[f, j]
        corr[i] = point - pos_t[f, j]
        if kind == "p3d":
            target = point
        else:
            target = project_world(point, camera)
        constraints.append(Constraint(f, j, kind, target, label))
    if len(frames):
        allf = np.arange(n)
        shift = np.stack([np.interp(allf, frames, corr[:, k]) for k in range(3)], axis=1)
    else:
        shift = np.zeros((n, 3))
    source = Motion(spec.fps, theta, root)
    target = Motion(spec.fps, theta.copy(), root + shift)

    noisy = theta + rng.normal(0.0, spec.noise, theta.shape) if spec.noise > 0 else theta.copy()
    spikes = []
    if spec.spikes:
        # spike joints with at least one descendant so the spike shows in positions
        candidates = [j for j in range(1, NUM_JOINTS) if j in skel.parents]
        picked = rng.choice(np.arange(2, n - 2), size=spec.spikes, replace=False)
        for f in sorted(int(x) for x in picked):
            j = int(rng.choice(candidates))
            axis = rng.normal(size=3)
            noisy[f, j] += spec.spike_magnitude * axis / np.linalg.norm(axis)
            spikes.append((f, j))
    observed = Motion(spec.fps, noisy, root.copy())
    cset = ConstraintSet(tuple(constraints), camera)
    return Scenario(spec, source, observed, target, cset, spikes, spans)
