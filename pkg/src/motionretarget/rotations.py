"""Axis-angle helpers: exponential map, its left Jacobian, skew matrices.

All functions accept arrays with arbitrary leading batch dimensions; the last
axis is the 3-vector.
"""
import numpy as np

# below this angle the closed forms lose precision; use Taylor series instead
_SMALL = 1e-4


def skew(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _coefficients(angle):
    """Return (sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3) elementwise."""
    t2 = angle * angle
    small = angle < _SMALL
    safe = np.where(small, 1.0, angle)
    safe2 = safe * safe
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(safe)) / safe2)
    c = np.where(small, 1.0 / 6.0 - t2 / 120.0, (safe - np.sin(safe)) / (safe2 * safe))
    return a, b, c


def exp_map(rotvec):
    """Rodrigues formula: axis-angle vectors (..., 3) to rotation matrices (..., 3, 3)."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec, axis=-1)
    a, b, _ = _coefficients(angle)
    K = skew(rotvec)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def left_jacobian(rotvec):
    """Left Jacobian of SO(3): d exp(v) / dv_i = skew(J_l(v) e_i) @ exp(v)."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec, axis=-1)
    _, b, c = _coefficients(angle)
    K = skew(rotvec)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + b[..., None, None] * K + c[..., None, None] * (K @ K)


def log_map(R):
    """Inverse of exp_map for a single rotation matrix; angle in [0, pi]."""
    R = np.asarray(R, dtype=float)
    cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < _SMALL:
        return 0.5 * w
    if np.pi - angle < 1e-6:
        # near pi the antisymmetric part vanishes; read the axis off R + I
        M = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(M)))
        axis = M[:, k] / np.sqrt(M[k, k])
        return axis * angle
    return w * (angle / (2.0 * np.sin(angle)))


def canonicalize(rotvec):
    """Wrap axis-angle magnitudes into [0, 2*pi) keeping the same rotation."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec, axis=-1, keepdims=True)
    wrapped = np.mod(angle, 2.0 * np.pi)
    scale = np.divide(wrapped, angle, out=np.ones_like(angle), where=angle > 0)
    return rotvec * scale
