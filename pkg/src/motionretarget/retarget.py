"""Windowed retargeting of a source motion onto a target shape.

The target motion is theta_t = theta_s + e. Per window the optimizer minimizes

    ||W1 e||_2 + lambda1 * L_style + lambda2 * L_3d + lambda3 * L_2d

where L_style compares one-step joint velocities of the target against the
source, and the constraint terms are L1 distances of end-effectors to 3D
points or to pixels.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .camera import BehindCameraError, CameraIntrinsics, MIN_DEPTH, project, project_jacobian
from .optim import minimize
from .skeleton import NUM_JOINTS, Motion, Skeleton, bone_offsets, fk_batch, positions_vjp

log = logging.getLogger(__name__)

KINDS = ("p3d", "p2d")


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Constraint:
    frame: int
    joint: int
    kind: str      # "p3d" (meters, world frame) or "p2d" (pixels)
    target: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConstraintError(f"unknown constraint kind {self.kind!r}")
        target = np.asarray(self.target, dtype=float).reshape(-1)
        if target.shape != ((3,) if self.kind == "p3d" else (2,)):
            raise ConstraintError(f"{self.kind} target has wrong length {target.size}")
        if not np.all(np.isfinite(target)):
            raise ConstraintError("constraint target is not finite")
        object.__setattr__(self, "frame", int(self.frame))
        object.__setattr__(self, "joint", int(self.joint))
        object.__setattr__(self, "target", target)


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    constraints: tuple = ()
    camera: CameraIntrinsics | None = None

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.camera is None and any(c.kind == "p2d" for c in self.constraints):
            raise ConstraintError("2D constraints require a camera")

    def __len__(self):
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def validate(self, skel: Skeleton, n_frames: int):
        for c in self.constraints:
            if not 0 <= c.frame < n_frames:
                raise ConstraintError(f"constraint frame {c.frame} outside motion of {n_frames} frames")
            if c.joint not in skel.end_effectors:
                raise ConstraintError(f"constraint joint {c.joint} is not a declared end-effector")
            if self.camera is not None and c.kind == "p2d":
                if not (0 <= c.target[0] <= self.camera.width and 0 <= c.target[1] <= self.camera.height):
                    log.warning("2D constraint at frame %d lies outside the image", c.frame)

    def at_frames(self, start: int, stop: int) -> list[Constraint]:
        return [c for c in self.constraints if start <= c.frame < stop]


@dataclass
class RetargetConfig:
    lambda1: float = 5.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    window_seconds: float = 2.0
    iterations: int = 300
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.99
    optimize_root_translation: bool = False
    lr_final: float | None = 1e-3      # geometric decay target; None keeps lr constant
    joint_weights: list | None = None  # None -> depth-based default

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "window_seconds", "learning_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.beta1 < 1 or not 0 < self.beta2 < 1:
            raise ValueError("beta1, beta2 must lie in (0, 1)")
        if int(self.iterations) < 0:
            raise ValueError("iterations must be non-negative")

    def window_frames(self, fps: float) -> int:
        return max(2, int(round(self.window_seconds * fps)))


def default_joint_weights(skel: Skeleton) -> np.ndarray:
    """w_j = 1 + (D - depth_j) / D: 2 at the root, 1 at the deepest leaves."""
    D = skel.depth.max()
    return 1.0 + (D - skel.depth) / D


def joint_weights(skel: Skeleton, config: RetargetConfig) -> np.ndarray:
    if config.joint_weights is None:
        return default_joint_weights(skel)
    w = np.asarray(config.joint_weights, dtype=float)
    if w.shape != (NUM_JOINTS,) or np.any(w < 0):
        raise ValueError("joint_weights must be 24 non-negative values")
    return w


def motion_delta(skel, beta, theta_k, theta_k1, root_k=None, root_k1=None):
    """Joint position change between two consecutive poses, (24, 3)."""
    off = bone_offsets(skel, beta)
    theta = np.stack([np.reshape(theta_k, (NUM_JOINTS, 3)), np.reshape(theta_k1, (NUM_JOINTS, 3))])
    root = np.stack([np.zeros(3) if root_k is None else root_k,
                     np.zeros(3) if root_k1 is None else root_k1])
    pos = fk_batch(skel, off, theta, root)[1]
    return pos[1] - pos[0]


class WindowProblem:
    """Loss and exact gradient for one retargeting window.

    Variables are e (n, 24, 3) joint-angle offsets and d (n, 3) root
    translation offsets; d only moves when root translation is optimized.
    Constraint frames are window-local indices.
    """

    def __init__(self, skel, beta_s, beta_t, theta_s, root_s, constraints=(), camera=None,
                 weights=None, config: RetargetConfig | None = None):
        self.skel = skel
        self.config = config or RetargetConfig()
        self.off_s = bone_offsets(skel, beta_s)
        self.off_t = bone_offsets(skel, beta_t)
        self.theta_s = np.asarray(theta_s, dtype=float).reshape(-1, NUM_JOINTS, 3)
        n = len(self.theta_s)
        self.root_s = np.zeros((n, 3)) if root_s is None else np.asarray(root_s, dtype=float).reshape(n, 3)
        self.weights = default_joint_weights(skel) if weights is None else np.asarray(weights, dtype=float)
        self.camera = camera
        pos_s = fk_batch(skel, self.off_s, self.theta_s, self.root_s)[1]
        self.delta_s = np.diff(pos_s, axis=0)
        self.c3 = [c for c in constraints if c.kind == "p3d"]
        self.c2 = [c for c in constraints if c.kind == "p2d"]
        if self.c2 and camera is None:
            raise ConstraintError("2D constraints require a camera")

    @property
    def n(self):
        return len(self.theta_s)

    def target_fk(self, e, d=None):
        d = np.zeros((self.n, 3)) if d is None else d
        theta = self.theta_s + e
        rot, pos = fk_batch(self.skel, self.off_t, theta, self.root_s + d)
        return theta, rot, pos

    def terms(self, e, d=None):
        """Return (reg, style, l3d, l2d) for the given offsets."""
        _, _, pos = self.target_fk(e, d)
        return (self._reg(e)[0], self._style(pos)[0], self._loss3d(pos)[0], self._loss2d(pos)[0])

    def loss(self, e, d=None):
        reg, style, l3, l2 = self.terms(e, d)
        c = self.config
        return reg + c.lambda1 * style + c.lambda2 * l3 + c.lambda3 * l2

    def loss_and_grad(self, e, d=None):
        c = self.config
        theta, rot, pos = self.target_fk(e, d)
        reg, g_reg = self._reg(e)
        style, g_style = self._style(pos)
        l3, g3 = self._loss3d(pos)
        l2, g2 = self._loss2d(pos)
        total = reg + c.lambda1 * style + c.lambda2 * l3 + c.lambda3 * l2
        g_pos = c.lambda1 * g_style + c.lambda2 * g3 + c.lambda3 * g2
        g_theta, g_root = positions_vjp(self.skel, rot, pos, theta, g_pos)
        return total, g_theta + g_reg, g_root

    def _reg(self, e):
        w = np.repeat(self.weights, 3).reshape(NUM_JOINTS, 3)
        we = w * e
        norm = float(np.sqrt(np.sum(we * we)))
        if norm == 0.0:
            return 0.0, np.zeros_like(e)
        return norm, w * we / norm

    def _style(self, pos):
        if self.n < 2:
            return 0.0, np.zeros_like(pos)
        r = np.diff(pos, axis=0) - self.delta_s
        s = np.sign(r)
        g = np.zeros_like(pos)
        g[1:] += s
        g[:-1] -= s
        return float(np.abs(r).sum()), g

    def _loss3d(self, pos):
        g = np.zeros_like(pos)
        total = 0.0
        for c in self.c3:
            r = pos[c.frame, c.joint] - c.target
            total += float(np.abs(r).sum())
            g[c.frame, c.joint] += np.sign(r)
        return total, g

    def _loss2d(self, pos):
        g = np.zeros_like(pos)
        total = 0.0
        K = self.camera
        for c in self.c2:
            p_cam = K.to_camera(pos[c.frame, c.joint])
            if p_cam[2] <= MIN_DEPTH:
                raise BehindCameraError(
                    f"joint {c.joint} behind the camera at window frame {c.frame}")
            r = project(p_cam, K) - c.target
            total += float(np.abs(r).sum())
            g[c.frame, c.joint] += (np.sign(r) @ project_jacobian(p_cam, K)) @ K.R
        return total, g


def loss_style(skel, beta_t, beta_s, theta_window, e, root_window=None) -> float:
    return WindowProblem(skel, beta_s, beta_t, theta_window, root_window).terms(np.asarray(e, float))[1]


def loss_3d(skel, beta_t, theta_k, e_k, constraints, root_t=None) -> float:
    """3D constraint loss for a single frame; constraint frames are ignored."""
    cs = [Constraint(0, c.joint, c.kind, c.target, c.label) for c in constraints if c.kind == "p3d"]
    p = WindowProblem(skel, beta_t, beta_t, np.reshape(theta_k, (1, NUM_JOINTS, 3)),
                      None if root_t is None else np.reshape(root_t, (1, 3)), cs)
    return p.terms(np.reshape(e_k, (1, NUM_JOINTS, 3)))[2]


def loss_2d(skel, beta_t, theta_k, e_k, constraints, K, root_t=None) -> float:
    cs = [Constraint(0, c.joint, c.kind, c.target, c.label) for c in constraints if c.kind == "p2d"]
    p = WindowProblem(skel, beta_t, beta_t, np.reshape(theta_k, (1, NUM_JOINTS, 3)),
                      None if root_t is None else np.reshape(root_t, (1, 3)), cs, camera=K)
    return p.terms(np.reshape(e_k, (1, NUM_JOINTS, 3)))[3]


def total_loss(problem: WindowProblem, e, d=None) -> float:
    return problem.loss(np.asarray(e, float), d)


def loss_gradient(problem: WindowProblem, e, d=None):
    """Gradient of the window loss w.r.t. e (and d). L1 kinks use sign(0) = 0."""
    _, g_e, g_d = problem.loss_and_grad(np.asarray(e, float), d)
    return g_e, g_d


@dataclass
class WindowResult:
    e: np.ndarray
    d: np.ndarray       # per-frame root offsets (n, 3)
    trace: list
    initial_loss: float
    final_loss: float


def retarget_window(problem: WindowProblem, e0=None, d_prev=None, freeze_first=False) -> WindowResult:
    """Run the configured Adam iterations on one window.

    The optional root offset is a single 3-vector shared by the window's
    frames, so shifting the whole body costs nothing in the style term.
    freeze_first holds frame 0 (the overlap with the previous window) at its
    warm-started angles and at the previous window's root offset d_prev.
    """
    cfg = problem.config
    n = problem.n
    d_prev = np.zeros(3) if d_prev is None else np.asarray(d_prev, dtype=float)
    x0 = np.zeros((n * NUM_JOINTS + 1, 3))
    if e0 is not None:
        x0[:-1] = np.reshape(e0, (-1, 3))
    x0[-1] = d_prev
    frozen = np.zeros_like(x0, dtype=bool)
    if not cfg.optimize_root_translation:
        frozen[-1] = True
    if freeze_first:
        frozen[:NUM_JOINTS] = True
    first = 1 if freeze_first else 0

    def root_offsets(d):
        D = np.tile(d, (n, 1))
        D[:first] = d_prev
        return D

    def fun(x):
        x = x[0]
        e = x[:-1].reshape(n, NUM_JOINTS, 3)
        total, g_e, g_d = problem.loss_and_grad(e, root_offsets(x[-1]))
        g = np.concatenate([g_e.reshape(-1, 3), g_d[first:].sum(axis=0, keepdims=True)])
        return np.array([total]), g[None]

    res = minimize(fun, x0[None], lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2,
                   iterations=int(cfg.iterations), frozen=frozen[None], lr_final=cfg.lr_final)
    x = res.x[0]
    return WindowResult(x[:-1].reshape(n, NUM_JOINTS, 3).copy(), root_offsets(x[-1]), res.trace,
                        res.trace[0], float(res.cost[0]))


@dataclass
class RetargetResult:
    motion: Motion
    e: np.ndarray
    d: np.ndarray
    windows: list          # (start, stop) frame ranges
    traces: list           # loss trace per window


def window_ranges(n_frames: int, window: int) -> list[tuple[int, int]]:
    """Consecutive windows of `window` frames sharing one overlap frame."""
    ranges = []
    start = 0
    while True:
        stop = min(start + window, n_frames)
        ranges.append((start, stop))
        if stop >= n_frames:
            break
        start = stop - 1
    return ranges


def retarget_motion(skel: Skeleton, source: Motion, beta_s, beta_t, constraints: ConstraintSet | None = None,
                    config: RetargetConfig | None = None) -> RetargetResult:
    config = config or RetargetConfig()
    constraints = constraints or ConstraintSet()
    constraints.validate(skel, len(source))
    weights = joint_weights(skel, config)
    n_frames = len(source)
    e = np.zeros_like(source.theta)
    d = np.zeros_like(source.root_t)
    ranges = window_ranges(n_frames, config.window_frames(source.fps))
    traces = []
    for i, (start, stop) in enumerate(ranges):
        local = [Constraint(c.frame - start, c.joint, c.kind, c.target, c.label)
                 for c in constraints.at_frames(start, stop)]
        problem = WindowProblem(skel, beta_s, beta_t, source.theta[start:stop], source.root_t[start:stop],
                                local, constraints.camera, weights, config)
        e0 = np.zeros((stop - start, NUM_JOINTS, 3))
        if i > 0:
            e0[:] = e[start]  # constant extension of the overlap frame: no velocity jump
        res = retarget_window(problem, e0, d[start], freeze_first=i > 0)
        log.debug("window %d [%d, %d): loss %.6g -> %.6g", i, start, stop, res.initial_loss, res.final_loss)
        # the overlap frame keeps the previous window's value
        lo = 0 if i == 0 else 1
        e[start + lo:stop] = res.e[lo:]
        d[start + lo:stop] = res.d[lo:]
        traces.append(res.trace)
    motion = Motion(source.fps, source.theta + e, source.root_t + d)
    return RetargetResult(motion, e, d, ranges, traces)


def direct_transfer(source: Motion) -> Motion:
    """The e = 0 baseline: source angles and root translation applied unchanged."""
    return Motion(source.fps, source.theta.copy(), source.root_t.copy())
