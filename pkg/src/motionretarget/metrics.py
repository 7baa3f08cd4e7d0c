"""Evaluation protocol: acceptance window, windowed frame scores, MSE, SSIM, end-effector error."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .camera import CameraIntrinsics, project_world
from .skeleton import Motion, Skeleton, motion_positions

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
C1 = (0.01 * 255) ** 2
C2 = (0.03 * 255) ** 2


def acceptance_window(len1: int, len2: int) -> int:
    if len1 <= 0 or len2 <= 0:
        raise ValueError("sequence lengths must be positive")
    return max(15, 2 * abs(int(len1) - int(len2)))


def _as_frame(a):
    a = np.asarray(a, dtype=float)
    if a.ndim not in (2, 3) or a.shape[0] == 0 or a.shape[1] == 0:
        raise ValueError("frame must be a non-empty HxW or HxWxC grid")
    return a


def mse(a, b) -> float:
    a, b = _as_frame(a), _as_frame(b)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def luma(frame):
    """ITU-R 601 luma for RGB(A) frames; grayscale frames pass through."""
    f = _as_frame(frame)
    if f.ndim == 2:
        return f
    if f.shape[2] == 1:
        return f[..., 0]
    return f[..., 0] * 0.299 + f[..., 1] * 0.587 + f[..., 2] * 0.114


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(img, g1):
    # separable 'valid' correlation with a 1D kernel along both axes
    k = len(g1)
    rows = sliding_window_view(img, k, axis=0) @ g1
    return sliding_window_view(rows, k, axis=1) @ g1


def ssim_map(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"frames must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    x = np.arange(SSIM_WINDOW) - (SSIM_WINDOW - 1) / 2
    g1 = np.exp(-(x**2) / (2 * SSIM_SIGMA**2))
    g1 /= g1.sum()
    mu_a, mu_b = _filter_valid(a, g1), _filter_valid(b, g1)
    saa = _filter_valid(a * a, g1) - mu_a**2
    sbb = _filter_valid(b * b, g1) - mu_b**2
    sab = _filter_valid(a * b, g1) - mu_a * mu_b
    return ((2 * mu_a * mu_b + C1) * (2 * sab + C2)) / ((mu_a**2 + mu_b**2 + C1) * (saa + sbb + C2))


def ssim(a, b, per_channel: bool = False) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5) over the valid region.

    Colour frames are compared on luma unless per_channel is set, in which
    case channel scores are averaged.
    """
    a, b = _as_frame(a), _as_frame(b)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if per_channel and a.ndim == 3:
        return float(np.mean([ssim_map(a[..., c], b[..., c]).mean() for c in range(a.shape[2])]))
    return float(ssim_map(luma(a), luma(b)).mean())


METRICS = {"mse": (mse, min), "ssim": (ssim, max)}


def windowed_score(seq_a, seq_b, metric: str, w: int) -> np.ndarray:
    """score_k = best metric(a_k, b_j) for j in [k - w, k + w], clamped to valid indices."""
    if len(seq_a) == 0 or len(seq_b) == 0:
        raise ValueError("sequences must be non-empty")
    if w < 0:
        raise ValueError("window must be non-negative")
    fn, best = METRICS[metric]
    out = np.empty(len(seq_a))
    nb = len(seq_b)
    for k, a in enumerate(seq_a):
        lo, hi = max(0, k - w), min(nb - 1, k + w)
        if lo > hi:
            # k lies beyond the paired sequence; compare with its nearest end
            lo = hi = nb - 1
        out[k] = best(fn(a, seq_b[j]) for j in range(lo, hi + 1))
    return out


def end_effector_errors(motion: Motion, skel: Skeleton, beta, constraints, K: CameraIntrinsics) -> np.ndarray:
    """Pixel distance between each constrained joint's projection and its target."""
    pos = motion_positions(skel, beta, motion)
    errs = []
    for c in constraints:
        pix = project_world(pos[c.frame, c.joint], K)
        target = c.target if c.kind == "p2d" else project_world(c.target, K)
        errs.append(float(np.linalg.norm(pix - target)))
    return np.array(errs)


def end_effector_error(motion: Motion, skel: Skeleton, beta, constraints, K: CameraIntrinsics) -> float:
    """Mean over constraint instances of the end-effector pixel error."""
    errs = end_effector_errors(motion, skel, beta, constraints, K)
    return float(errs.mean()) if errs.size else 0.0


# reference values (pixels) for direct transfer vs. constrained retargeting
REFERENCE_EE_PX = {"direct_transfer": 20.80, "retargeting": 3.90}

# metrics that need pretrained networks; left empty for externally computed values
EXTERNAL_SLOTS = ("lpips", "fvd", "forgery")


@dataclass
class EvalReport:
    window: int
    per_frame: dict = field(default_factory=dict)   # metric -> list of per-frame scores
    aggregate: dict = field(default_factory=dict)   # metric -> mean
    end_effector: dict | None = None
    external: dict = field(default_factory=lambda: {k: None for k in EXTERNAL_SLOTS})
    metadata: dict = field(default_factory=dict)

    def add(self, metric, scores):
        scores = [float(s) for s in scores]
        self.per_frame[metric] = scores
        self.aggregate[metric] = float(np.mean(scores)) if scores else None

    def check(self) -> bool:
        return all(self.aggregate[m] == (float(np.mean(v)) if v else None) for m, v in self.per_frame.items())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        metrics = sorted(self.per_frame)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["frame"] + metrics)
        n = max((len(v) for v in self.per_frame.values()), default=0)
        for k in range(n):
            writer.writerow([k] + [repr(self.per_frame[m][k]) if k < len(self.per_frame[m]) else "" for m in metrics])
        return buf.getvalue()


def evaluate_frames(pred, ref, window: int | None = None, metrics=("mse", "ssim")) -> EvalReport:
    w = acceptance_window(len(pred), len(ref)) if window is None else int(window)
    report = EvalReport(window=w, metadata={"pred_frames": len(pred), "ref_frames": len(ref)})
    for m in metrics:
        report.add(m, windowed_score(pred, ref, m, w))
    return report
