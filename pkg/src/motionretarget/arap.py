"""Semantic-guided as-rigid-as-possible mesh deformation.

Contour pixels of a part-label image are matched to same-label mesh vertices
by nearest projection; the matched vertices become soft position constraints
of a local-global ARAP solve with cotangent weights.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .camera import CameraIntrinsics, backproject, project

log = logging.getLogger(__name__)

NUM_PARTS = 14
BACKGROUND = 0


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledMesh:
    vertices: np.ndarray   # (V, 3) meters
    triangles: np.ndarray  # (T, 3) int
    labels: np.ndarray     # (V,) part ids in 1..14

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        f = np.asarray(self.triangles, dtype=int)
        lab = np.asarray(self.labels, dtype=int)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError("vertices must be (V, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError("triangles must be (T, 3)")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("triangle index out of range")
        if lab.shape != (len(v),):
            raise MeshError("every vertex needs exactly one label")
        if np.any((lab < 1) | (lab > NUM_PARTS)):
            raise MeshError(f"vertex labels must lie in 1..{NUM_PARTS}")
        areas = triangle_areas(v, f)
        if np.any(areas <= 1e-12):
            raise MeshError(f"degenerate triangle {int(np.argmin(areas))}")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)
        object.__setattr__(self, "labels", lab)

    def with_vertices(self, vertices) -> LabeledMesh:
        return LabeledMesh(vertices, self.triangles, self.labels)


@dataclass(frozen=True)
class ContourPoint:
    pixel: tuple   # (u, v) = (column, row)
    label: int


@dataclass(frozen=True)
class ControlPoint:
    vertex: int
    target: np.ndarray


def triangle_areas(v, f):
    return 0.5 * np.linalg.norm(np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1)


def extract_contours(label_image, stride: int = 5) -> list[ContourPoint]:
    """Boundary pixels of every labeled region, in (label, row, column) order.

    A labeled pixel is on the boundary when one of its 4-neighbours carries a
    different label or lies outside the image. Each label's boundary list is
    subsampled by `stride`.
    """
    img = np.asarray(label_image)
    if img.size == 0:
        return []
    if img.ndim != 2:
        raise MeshError("label image must be a 2D grid")
    img = img.astype(int)
    if np.any((img < 0) | (img > NUM_PARTS)):
        raise MeshError(f"label image ids must lie in 0..{NUM_PARTS}")
    padded = np.pad(img, 1, constant_values=-1)
    centre = padded[1:-1, 1:-1]
    boundary = np.zeros(img.shape, dtype=bool)
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        boundary |= padded[1 + dr:padded.shape[0] - 1 + dr, 1 + dc:padded.shape[1] - 1 + dc] != centre
    boundary &= img != BACKGROUND
    out = []
    for label in np.unique(img[boundary]):
        rows, cols = np.nonzero(boundary & (img == label))
        for r, c in list(zip(rows, cols))[::max(1, stride)]:
            out.append(ContourPoint((float(c), float(r)), int(label)))
    return out


def match_control_points(mesh: LabeledMesh, K: CameraIntrinsics, contours) -> tuple[list[ControlPoint], int]:
    """Match contour points to same-label vertices by nearest 2D projection.

    Returns the control points (one per vertex; a later contour point picking
    the same vertex replaces the earlier one) and the number of contour points
    skipped for lack of a same-label vertex. Targets back-project the contour
    pixel at the chosen vertex's camera depth.
    """
    cam = K.to_camera(mesh.vertices)
    pix = project(cam, K)
    by_vertex: dict[int, ControlPoint] = {}
    skipped = 0
    for cp in contours:
        idx = np.flatnonzero(mesh.labels == cp.label)
        if idx.size == 0:
            skipped += 1
            continue
        d2 = np.sum((pix[idx] - np.asarray(cp.pixel, dtype=float)) ** 2, axis=1)
        v = int(idx[np.argmin(d2)])  # argmin returns the first, i.e. lowest index, on ties
        target_cam = backproject(np.asarray(cp.pixel, dtype=float), cam[v, 2], K)
        by_vertex.pop(v, None)
        by_vertex[v] = ControlPoint(v, K.to_world(target_cam))
    if skipped:
        log.warning("%d contour points had no vertex with a matching label", skipped)
    return list(by_vertex.values()), skipped


def cotangent_weights(v, f, clamp: float = 1e-8, uniform: bool = False):
    """Symmetric edge weights w_ij = (cot a + cot b) / 2 as a sparse matrix."""
    n = len(v)
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = f[:, (k + 1) % 3], f[:, (k + 2) % 3], f[:, k]
        if uniform:
            w = np.full(len(f), 0.5)
        else:
            a, b = v[i] - v[o], v[j] - v[o]
            w = 0.5 * np.einsum("ij,ij->i", a, b) / np.linalg.norm(np.cross(a, b), axis=1)
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    W = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    W.sum_duplicates()
    W.data = np.maximum(W.data, clamp)
    return W


@dataclass
class ArapConfig:
    iterations: int = 10
    tol: float = 1e-6
    penalty: float = 1e4
    uniform_weights: bool = False
    rigid_init: bool = True


@dataclass
class ArapResult:
    mesh: LabeledMesh
    energies: list          # objective after every iteration, energies[0] at the initial guess
    rotations: np.ndarray   # (V, 3, 3) final local rotations
    iterations: int


class ArapSolver:
    """Local-global minimizer of

        sum_i sum_j w_ij |(q_i - q_j) - R_i (p_i - p_j)|^2 + penalty * sum_c |q_c - t_c|^2
    """

    def __init__(self, mesh: LabeledMesh, config: ArapConfig | None = None):
        self.mesh = mesh
        self.config = config or ArapConfig()
        self.p = mesh.vertices
        W = cotangent_weights(mesh.vertices, mesh.triangles, uniform=self.config.uniform_weights).tocoo()
        self.ei, self.ej, self.w = W.row, W.col, W.data
        self.W = W.tocsr()
        self.edges = self.p[self.ei] - self.p[self.ej]
        deg = np.asarray(self.W.sum(axis=1)).ravel()
        self.L = (sp.diags(deg) - self.W).tocsc()

    def local_step(self, q):
        """Best-fit rotation per vertex from its one-ring (SVD with reflection fix)."""
        n = len(self.p)
        dq = q[self.ei] - q[self.ej]
        S = np.zeros((n, 3, 3))
        np.add.at(S, self.ei, self.w[:, None, None] * self.edges[:, :, None] * dq[:, None, :])
        U, _, Vt = np.linalg.svd(S)
        R = np.swapaxes(Vt, 1, 2) @ np.swapaxes(U, 1, 2)
        flip = np.linalg.det(R) < 0
        if flip.any():
            U[flip, :, 2] *= -1
            R[flip] = np.swapaxes(Vt[flip], 1, 2) @ np.swapaxes(U[flip], 1, 2)
        return R

    def energy(self, q, R, controls_idx, targets):
        r = (q[self.ei] - q[self.ej]) - np.einsum("eab,eb->ea", R[self.ei], self.edges)
        e = float(np.sum(self.w * np.sum(r * r, axis=1)))
        if len(controls_idx):
            e += self.config.penalty * float(np.sum((q[controls_idx] - targets) ** 2))
        return e

    def _rhs(self, R):
        # b_i = sum_j w_ij (R_i + R_j)/2 (p_i - p_j), summed over directed edges
        Rsum = 0.5 * (R[self.ei] + R[self.ej])
        contrib = self.w[:, None] * np.einsum("eab,eb->ea", Rsum, self.edges)
        b = np.zeros_like(self.p)
        np.add.at(b, self.ei, contrib)
        return b

    def solve(self, controls, initial=None) -> ArapResult:
        cfg = self.config
        n = len(self.p)
        idx = np.array([c.vertex for c in controls], dtype=int)
        targets = np.array([c.target for c in controls], dtype=float).reshape(-1, 3)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise MeshError("control vertex index out of range")
        anchors, anchor_pos = self._anchors(idx)
        # stationarity: 4 L q + 2 penalty (q - t) = 4 b  =>  (L + penalty/2) q = b + penalty/2 t
        half = 0.5 * cfg.penalty
        C = np.zeros(n)
        C[idx] += half
        C[anchors] += half
        A = (self.L + sp.diags(C)).tocsc()
        try:
            lu = splu(A)
        except RuntimeError as exc:
            raise MeshError(f"singular ARAP system: {exc}") from None
        extra = np.zeros((n, 3))
        np.add.at(extra, idx, half * targets)
        np.add.at(extra, anchors, half * anchor_pos)

        all_idx = np.concatenate([idx, anchors])
        all_t = np.concatenate([targets, anchor_pos])
        q = self._initial(idx, targets) if initial is None else np.asarray(initial, dtype=float).copy()
        R = self.local_step(q)
        energies = [self.energy(q, R, all_idx, all_t)]
        it = 0
        for it in range(1, cfg.iterations + 1):
            q = lu.solve(self._rhs(R) + extra)
            R = self.local_step(q)
            e = self.energy(q, R, all_idx, all_t)
            if not np.isfinite(e):
                raise FloatingPointError("ARAP energy is not finite")
            prev = energies[-1]
            energies.append(e)
            if e <= 1e-20 or abs(prev - e) <= cfg.tol * prev:
                break
        return ArapResult(self.mesh.with_vertices(q), energies, R, it)

    def _anchors(self, idx):
        """One fixed vertex per connected component without controls (removes the translation null space)."""
        n = len(self.p)
        ncomp, comp = sp.csgraph.connected_components(self.W, directed=False)
        covered = set(comp[idx].tolist()) if idx.size else set()
        anchors = [int(np.flatnonzero(comp == c)[0]) for c in range(ncomp) if c not in covered]
        anchors = np.array(anchors, dtype=int)
        return anchors, self.p[anchors].reshape(-1, 3)

    def _initial(self, idx, targets):
        """Initial guess: best rigid fit of the control points (Kabsch), else identity."""
        p = self.p
        if not self.config.rigid_init or idx.size == 0:
            return p.copy()
        src = p[idx]
        if idx.size < 3 or np.linalg.matrix_rank(src - src.mean(0), tol=1e-9) < 2:
            return p + (targets - src).mean(axis=0)
        cs, ct = src.mean(0), targets.mean(0)
        H = (src - cs).T @ (targets - ct)
        U, _, Vt = np.linalg.svd(H)
        D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
        R = Vt.T @ D @ U.T
        return (p - cs) @ R.T + ct


def arap_solve(mesh: LabeledMesh, controls, iters: int = 10, tol: float = 1e-6,
               config: ArapConfig | None = None) -> ArapResult:
    config = config or ArapConfig(iterations=iters, tol=tol)
    return ArapSolver(mesh, config).solve(controls)


def deform_to_labels(mesh: LabeledMesh, K: CameraIntrinsics, label_image, stride: int = 5,
                     config: ArapConfig | None = None):
    contours = extract_contours(label_image, stride)
    controls, skipped = match_control_points(mesh, K, contours)
    return arap_solve(mesh, controls, config=config), controls, skipped
