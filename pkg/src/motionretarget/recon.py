"""Motion regularization: shape averaging, spline smoothing, outlier rejection, IK refit."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from .optim import DivergenceError, minimize
from .skeleton import NUM_BETAS, NUM_JOINTS, Motion, Skeleton, bone_offsets, check_beta, fk_batch, positions_vjp

log = logging.getLogger(__name__)


@dataclass
class ReconConfig:
    gamma: float = 10.0
    cutoff_hz: float = 5.0          # half-gain frequency of the smoothing spline
    smoothing: float | None = None  # explicit spline lambda; overrides cutoff_hz
    outlier_k: float = 3.0
    outlier_floor: float = 0.01     # meters
    angle_outlier_floor: float | None = 0.3  # radians; None skips the angle-space check
    iterations: int = 300
    learning_rate: float = 0.01
    lr_final: float | None = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    smooth_root: bool = True

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.cutoff_hz <= 0:
            raise ValueError("cutoff_hz must be positive")

    def spline_lambda(self, fps: float) -> float:
        """Lambda whose smoother has gain 1/2 at cutoff_hz: H(w) = 1 / (1 + lam * w^4 / fps)."""
        if self.smoothing is not None:
            return float(self.smoothing)
        w = 2 * np.pi * self.cutoff_hz
        return fps / w**4


def average_shape(betas) -> np.ndarray:
    betas = [check_beta(b) for b in betas]
    if not betas:
        raise ValueError("average_shape needs at least one beta")
    return np.mean(np.stack(betas), axis=0)


def smoothing_spline_values(t, y, lam, w=None):
    """Fitted values of the natural cubic smoothing spline (Reinsch algorithm).

    Minimizes sum_i w_i (y_i - g(t_i))^2 + lam * integral g''^2. y may have
    extra trailing dimensions; every column is smoothed independently.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(t)
    flat = y.reshape(n, -1)
    if lam == 0 or n < 3:
        return flat.reshape(y.shape).copy()
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    h = np.diff(t)
    m = n - 2
    # Q is n x m tridiagonal-by-columns, R is m x m symmetric tridiagonal
    q_lo, q_mid, q_hi = 1 / h[:-1], -1 / h[:-1] - 1 / h[1:], 1 / h[1:]
    r_diag = (h[:-1] + h[1:]) / 3
    r_off = h[1:-1] / 6
    winv = 1.0 / w
    # A = R + lam Q^T W^-1 Q, a symmetric pentadiagonal matrix
    d0 = r_diag + lam * (q_lo**2 * winv[:-2] + q_mid**2 * winv[1:-1] + q_hi**2 * winv[2:])
    d1 = r_off + lam * (q_mid[:-1] * q_lo[1:] * winv[1:-2] + q_hi[:-1] * q_mid[1:] * winv[2:-1])
    d2 = lam * q_hi[:-2] * q_lo[2:] * winv[2:-2]
    ab = np.zeros((5, m))
    ab[0, 2:] = d2
    ab[1, 1:] = d1
    ab[2] = d0
    ab[3, :-1] = d1
    ab[4, :-2] = d2
    qty = q_lo[:, None] * flat[:-2] + q_mid[:, None] * flat[1:-1] + q_hi[:, None] * flat[2:]
    gamma = solve_banded((2, 2), ab, qty)
    qg = np.zeros_like(flat)
    qg[:-2] += q_lo[:, None] * gamma
    qg[1:-1] += q_mid[:, None] * gamma
    qg[2:] += q_hi[:, None] * gamma
    g = flat - lam * winv[:, None] * qg
    return g.reshape(y.shape)


@dataclass
class SplineTrack:
    """Smoothed joint trajectories (n, 24, 3) over knot times in frames."""

    knots: np.ndarray
    data: np.ndarray      # raw joint positions the spline was fitted to
    values: np.ndarray    # spline values at the knots
    lam: float
    fps: float
    weights: np.ndarray | None = None  # (n, 24) per-joint sample weights

    def __post_init__(self):
        # with no smoothing the track is a pure interpolant; not-a-knot ends reproduce cubics exactly
        bc = "not-a-knot" if self.lam == 0 and len(self.knots) >= 4 else "natural"
        self._curve = CubicSpline(self.knots, self.values, axis=0, bc_type=bc)

    def __call__(self, frames):
        return self._curve(np.asarray(frames, dtype=float))

    def refit(self, mask: np.ndarray, outlier_weight: float = 1e-8) -> SplineTrack:
        """Refit with outlier samples (mask False) down-weighted to ~0."""
        weights = np.where(mask, 1.0, outlier_weight)
        values = np.empty_like(self.data)
        for j in range(self.data.shape[1]):
            values[:, j] = smoothing_spline_values(self.knots / self.fps, self.data[:, j], self.lam, weights[:, j])
        return SplineTrack(self.knots, self.data, values, self.lam, self.fps, weights)

    def studentized_residuals(self) -> np.ndarray:
        """Residual norms scaled by leverage (n, 24): |y_i - g_i| / sqrt(1 - S_ii).

        Raw residuals understate a spike at either end of the track, where the
        spline has high leverage and bends toward it. Dividing by the residual
        standard deviation puts every frame on the same scale.
        """
        raw = np.linalg.norm(self.data - self.values, axis=-1)
        n, joints = raw.shape
        t = self.knots / self.fps
        weights = np.ones((n, joints)) if self.weights is None else self.weights
        cache = {}
        out = np.empty_like(raw)
        for j in range(joints):
            key = weights[:, j].tobytes()
            if key not in cache:
                S = smoothing_spline_values(t, np.eye(n), self.lam, weights[:, j])
                cache[key] = np.sqrt(np.clip(1.0 - np.diag(S), 1e-12, None))
            out[:, j] = raw[:, j] / cache[key]
        return out


def fit_positions_spline(positions, fps: float, config: ReconConfig | None = None) -> SplineTrack:
    config = config or ReconConfig()
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    if n < 4:
        raise ValueError(f"spline fitting needs at least 4 frames, got {n}")
    knots = np.arange(n, dtype=float)
    lam = config.spline_lambda(fps)
    values = smoothing_spline_values(knots / fps, positions, lam)
    return SplineTrack(knots, positions.copy(), values, lam, fps)


def fit_spline(motion: Motion, skel: Skeleton, beta, config: ReconConfig | None = None) -> SplineTrack:
    pos = fk_batch(skel, bone_offsets(skel, beta), motion.theta, motion.root_t)[1]
    return fit_positions_spline(pos, motion.fps, config)


def _thresholds(residuals, inliers, k, floor):
    """Per-joint threshold median + k * sigma_MAD over the current inliers, floored."""
    out = np.empty(residuals.shape[1])
    for j in range(residuals.shape[1]):
        r = residuals[inliers[:, j], j]
        med = np.median(r)
        # 1.4826 makes the MAD a consistent estimate of a Gaussian sigma
        out[j] = max(med + k * 1.4826 * np.median(np.abs(r - med)), floor)
    return out


def detect_outliers(spline: SplineTrack, config: ReconConfig | None = None, max_rounds: int | None = None,
                    floor: float | None = None) -> np.ndarray:
    """Inlier mask (n, 24): False where a joint's residual to the spline is an outlier.

    Residuals are leverage-studentized distances to the spline. Outliers are removed
    one per joint per round (the largest residual above threshold), refitting
    the spline without them each time. Removing a spike first keeps its
    neighbours, which the spike had pulled off, from being flagged with it.
    """
    config = config or ReconConfig()
    n = len(spline.data)
    max_rounds = n if max_rounds is None else max_rounds
    inliers = np.ones(spline.data.shape[:2], dtype=bool)
    current = spline
    cols = np.arange(spline.data.shape[1])
    # thresholds come from the first fit; median and MAD are already robust to the spikes,
    # and recomputing them on a shrinking inlier set would keep lowering the bar
    floor = config.outlier_floor if floor is None else floor
    thr = _thresholds(current.studentized_residuals(), inliers, config.outlier_k, floor)
    for _ in range(max_rounds):
        res = current.studentized_residuals()
        candidate = np.where(inliers, res, -np.inf)
        worst = np.argmax(candidate, axis=0)
        hit = candidate[worst, cols] > thr
        if not hit.any():
            break
        inliers[worst[hit], cols[hit]] = False
        current = spline.refit(inliers)
    return inliers


def detect_motion_outliers(motion: Motion, spline: SplineTrack, config: ReconConfig | None = None) -> np.ndarray:
    if len(motion) != len(spline.data):
        raise ValueError("spline was fitted on a motion of different length")
    return detect_outliers(spline, config)


def detect_angle_outliers(motion: Motion, config: ReconConfig | None = None) -> np.ndarray:
    """Angle inlier mask (n, 24) from the same spline test run on the axis-angle tracks.

    Catches spikes on angles that drive only a short bone (wrists, ankles), whose
    position footprint can sit below the accumulated position noise.
    """
    config = config or ReconConfig()
    if config.angle_outlier_floor is None:
        return np.ones(motion.theta.shape[:2], dtype=bool)
    track = fit_positions_spline(motion.theta, motion.fps, config)
    return detect_outliers(track, config, floor=config.angle_outlier_floor)


def angle_mask(skel: Skeleton, position_mask: np.ndarray) -> np.ndarray:
    """Per-frame joint-angle inlier flags from joint-position flags.

    A joint's position is placed by its parent's rotation, so a position
    outlier at joint j disqualifies the parent's angle from the anchor term.
    """
    mask = np.ones_like(position_mask, dtype=bool)
    for j in range(NUM_JOINTS):
        p = skel.parents[j]
        if p >= 0:
            mask[:, p] &= position_mask[:, j]
    return mask


def outlier_sources(skel: Skeleton, position_mask: np.ndarray) -> list[tuple[int, int]]:
    """(frame, joint) angles that explain the flagged positions.

    A bad angle at joint p moves every descendant of p, so it shows up as a
    flagged subtree; its source is the parent of each flagged joint whose own
    parent position is clean.
    """
    out = set()
    for f, j in np.argwhere(~position_mask):
        p = skel.parents[j]
        if p >= 0 and (skel.parents[p] < 0 or position_mask[f, p]):
            out.add((int(f), int(p)))
    return sorted(out)


def fill_masked_angles(theta, angle_inliers) -> np.ndarray:
    """Replace excluded angles by linear interpolation between inlier frames of the same joint."""
    theta = np.array(theta, dtype=float, copy=True)
    frames = np.arange(len(theta))
    for j in range(theta.shape[1]):
        good = angle_inliers[:, j]
        if good.all() or not good.any():
            continue
        for k in range(3):
            theta[~good, j, k] = np.interp(frames[~good], frames[good], theta[good, j, k])
    return theta


@dataclass
class RegularizeResult:
    motion: Motion
    cost_before: np.ndarray  # per frame
    cost_after: np.ndarray
    trace: list


class RegularizationProblem:
    """Per-frame cost ||m (theta - Theta)||_2 + gamma ||FK(theta) - P_sp||_2, batched over frames."""

    def __init__(self, skel, beta, theta_obs, root_t, targets, angle_inliers, gamma):
        self.skel = skel
        self.off = bone_offsets(skel, beta)
        self.theta_obs = np.asarray(theta_obs, dtype=float)
        self.root_t = np.asarray(root_t, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        self.m = np.repeat(np.asarray(angle_inliers, dtype=float)[..., None], 3, axis=-1)
        self.gamma = float(gamma)

    def __call__(self, theta):
        diff = self.m * (theta - self.theta_obs)
        a = np.sqrt(np.sum(diff**2, axis=(1, 2)))
        rot, pos = fk_batch(self.skel, self.off, theta, self.root_t)
        r = pos - self.targets
        b = np.sqrt(np.sum(r**2, axis=(1, 2)))
        ga = np.divide(self.m * diff, a[:, None, None], out=np.zeros_like(diff), where=a[:, None, None] > 0)
        gp = np.divide(self.gamma * r, b[:, None, None], out=np.zeros_like(r), where=b[:, None, None] > 0)
        g_theta, _ = positions_vjp(self.skel, rot, pos, theta, gp)
        return a + self.gamma * b, ga + g_theta


def regularize_motion(motion: Motion, skel: Skeleton, beta, spline: SplineTrack, mask: np.ndarray | None = None,
                      gamma: float | None = None, config: ReconConfig | None = None,
                      angle_inliers: np.ndarray | None = None) -> RegularizeResult:
    """Refit joint angles frame by frame to the smoothed joint positions.

    `mask` flags joint positions; `angle_inliers` optionally excludes further angles.
    """
    config = config or ReconConfig()
    gamma = config.gamma if gamma is None else gamma
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    n = len(motion)
    mask = np.ones((n, NUM_JOINTS), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    off = bone_offsets(skel, beta)
    root_t = motion.root_t
    if config.smooth_root:
        root_t = spline.values[:, skel.root] - off[skel.root]
    inliers = angle_mask(skel, mask)
    if angle_inliers is not None:
        inliers &= np.asarray(angle_inliers, dtype=bool)
    problem = RegularizationProblem(skel, beta, motion.theta, root_t, spline.values, inliers, gamma)
    # excluded angles start from their neighbours instead of the corrupted value
    filled = fill_masked_angles(motion.theta, inliers)
    use = problem(filled)[0] < problem(motion.theta)[0]
    start = np.where(use[:, None, None], filled, motion.theta)
    try:
        res = minimize(problem, start, lr=config.learning_rate, beta1=config.beta1,
                       beta2=config.beta2, iterations=int(config.iterations), monotone=True,
                       lr_final=config.lr_final)
    except DivergenceError as exc:
        raise DivergenceError(f"regularization diverged at frame {exc.group}", exc.iteration, exc.group) from None
    before = problem(motion.theta)[0]
    return RegularizeResult(Motion(motion.fps, res.x, root_t), before, res.cost, res.trace)


@dataclass
class ReconstructResult:
    motion: Motion
    beta: np.ndarray
    mask: np.ndarray           # joint-position inliers
    angle_inliers: np.ndarray  # angles kept in the anchor term
    outliers: list             # (frame, joint) angles judged corrupt
    spline: SplineTrack
    regularized: RegularizeResult


def reconstruct(motion: Motion, skel: Skeleton, betas, config: ReconConfig | None = None) -> ReconstructResult:
    """average_shape -> fit_spline -> detect_outliers -> regularize_motion."""
    config = config or ReconConfig()
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    if betas.shape[-1] != NUM_BETAS:
        raise ValueError("betas must have 10 columns")
    beta = average_shape(betas)
    spline = fit_spline(motion, skel, beta, config)
    mask = detect_outliers(spline, config)
    angle_flags = detect_angle_outliers(motion, config)
    clean = spline.refit(mask) if not mask.all() else spline
    reg = regularize_motion(motion, skel, beta, clean, mask, config.gamma, config, angle_flags)
    outliers = set(outlier_sources(skel, mask)) | {(int(f), int(j)) for f, j in np.argwhere(~angle_flags)}
    return ReconstructResult(reg.motion, beta, mask, angle_mask(skel, mask) & angle_flags, sorted(outliers), clean, reg)
