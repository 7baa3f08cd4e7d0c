"""Parametric 24-joint skeleton, linear shape basis and forward kinematics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .rotations import exp_map, left_jacobian

NUM_JOINTS = 24
NUM_BETAS = 10
BETA_BOUND = 5.0


class SkeletonError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Skeleton:
    parents: np.ndarray          # (24,) int, -1 marks the root
    rest_offsets: np.ndarray     # (24, 3) meters
    shape_basis: np.ndarray      # (10, 24, 3) meters per unit beta
    end_effectors: tuple[int, ...]
    joint_names: tuple[str, ...] = ()
    order: np.ndarray = field(init=False, repr=False)
    depth: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=int)
        rest = np.asarray(self.rest_offsets, dtype=float)
        basis = np.asarray(self.shape_basis, dtype=float)
        if parents.shape != (NUM_JOINTS,):
            raise SkeletonError(f"expected {NUM_JOINTS} parents, got {parents.shape}")
        if rest.shape != (NUM_JOINTS, 3):
            raise SkeletonError(f"rest_offsets must be {NUM_JOINTS}x3, got {rest.shape}")
        if basis.shape != (NUM_BETAS, NUM_JOINTS, 3):
            raise SkeletonError(f"shape_basis must be {NUM_BETAS}x{NUM_JOINTS}x3, got {basis.shape}")
        roots = np.flatnonzero(parents < 0)
        if len(roots) != 1:
            raise SkeletonError(f"skeleton must have exactly one root, found {len(roots)}")
        if np.any(parents >= NUM_JOINTS):
            raise SkeletonError("parent index out of range")
        # breadth-first walk from the root; anything unvisited is a cycle or orphan
        children = [[] for _ in range(NUM_JOINTS)]
        for j, p in enumerate(parents):
            if p >= 0:
                children[p].append(j)
        order, depth = [int(roots[0])], np.zeros(NUM_JOINTS, dtype=int)
        for j in order:
            for c in children[j]:
                depth[c] = depth[j] + 1
                order.append(c)
        if len(order) != NUM_JOINTS:
            raise SkeletonError("parent array does not form a tree reachable from the root")
        effectors = tuple(int(j) for j in self.end_effectors)
        if any(not 0 <= j < NUM_JOINTS for j in effectors):
            raise SkeletonError("end-effector index out of range")
        names = tuple(self.joint_names) or tuple(f"joint{j}" for j in range(NUM_JOINTS))
        if len(names) != NUM_JOINTS:
            raise SkeletonError("joint_names must list 24 names")
        for a in (parents, rest, basis):
            a.setflags(write=False)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "rest_offsets", rest)
        object.__setattr__(self, "shape_basis", basis)
        object.__setattr__(self, "end_effectors", effectors)
        object.__setattr__(self, "joint_names", names)
        object.__setattr__(self, "order", np.array(order))
        object.__setattr__(self, "depth", depth)

    @property
    def root(self) -> int:
        return int(self.order[0])

    def joint_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            if not 0 <= name_or_index < NUM_JOINTS:
                raise SkeletonError(f"joint index {name_or_index} out of range")
            return int(name_or_index)
        try:
            return self.joint_names.index(name_or_index)
        except ValueError:
            if str(name_or_index).isdigit():
                return self.joint_index(int(name_or_index))
            raise SkeletonError(f"unknown joint {name_or_index!r}") from None

    def ancestors_mask(self) -> np.ndarray:
        """mask[j, a] is True when a lies on the path root..j (inclusive)."""
        mask = np.eye(NUM_JOINTS, dtype=bool)
        for j in self.order[1:]:
            mask[j] |= mask[self.parents[j]]
        return mask

    def to_dict(self) -> dict:
        return {
            "parents": self.parents.tolist(),
            "rest_offsets": self.rest_offsets.tolist(),
            "shape_basis": self.shape_basis.tolist(),
            "end_effectors": list(self.end_effectors),
            "joint_names": list(self.joint_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Skeleton:
        try:
            return cls(
                parents=d["parents"],
                rest_offsets=d["rest_offsets"],
                shape_basis=d["shape_basis"],
                end_effectors=tuple(d["end_effectors"]),
                joint_names=tuple(d.get("joint_names", ())),
            )
        except KeyError as exc:
            raise SkeletonError(f"skeleton file missing field {exc}") from None


def load_skeleton(path=None) -> Skeleton:
    """Load a skeleton JSON file; with no path, the bundled SMPL-like default."""
    if path is None:
        text = resources.files("motionretarget.data").joinpath("smpl24.json").read_text()
    else:
        text = Path(path).read_text()
    return Skeleton.from_dict(json.loads(text))


def check_beta(beta, bound: float = BETA_BOUND) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (NUM_BETAS,):
        raise SkeletonError(f"beta must have {NUM_BETAS} entries, got shape {beta.shape}")
    if not np.all(np.isfinite(beta)):
        raise SkeletonError("beta contains non-finite values")
    if np.any(np.abs(beta) > bound):
        raise SkeletonError(f"|beta| exceeds bound {bound}")
    return beta


@dataclass(frozen=True, eq=False)
class Pose:
    theta: np.ndarray   # (24, 3) axis-angle, radians
    root_t: np.ndarray  # (3,) meters

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(NUM_JOINTS, 3)
        root_t = np.asarray(self.root_t, dtype=float).reshape(3)
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(root_t))):
            raise SkeletonError("pose contains non-finite values")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "root_t", root_t)


@dataclass(frozen=True, eq=False)
class Motion:
    """A pose sequence stored as stacked arrays: theta (n, 24, 3), root_t (n, 3)."""

    fps: float
    theta: np.ndarray
    root_t: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        theta = theta.reshape(theta.shape[0], NUM_JOINTS, 3) if theta.size else theta
        root_t = np.asarray(self.root_t, dtype=float)
        if not self.fps > 0:
            raise SkeletonError("fps must be positive")
        if theta.ndim != 3 or theta.shape[0] == 0:
            raise SkeletonError("motion must contain at least one frame")
        if root_t.shape != (theta.shape[0], 3):
            raise SkeletonError("root_t must be (frames, 3)")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(root_t))):
            raise SkeletonError("motion contains non-finite values")
        object.__setattr__(self, "fps", float(self.fps))
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "root_t", root_t)

    def __len__(self):
        return self.theta.shape[0]

    @property
    def frames(self) -> list[Pose]:
        return [Pose(t, r) for t, r in zip(self.theta, self.root_t)]

    @classmethod
    def from_poses(cls, fps, poses) -> Motion:
        return cls(fps, np.stack([p.theta for p in poses]), np.stack([p.root_t for p in poses]))


@dataclass(frozen=True, eq=False)
class JointPoses:
    rotations: np.ndarray     # (24, 3, 3) world frame
    translations: np.ndarray  # (24, 3)


def bone_offsets(skel: Skeleton, beta) -> np.ndarray:
    beta = check_beta(beta)
    offsets = skel.rest_offsets + np.tensordot(beta, skel.shape_basis, axes=1)
    lengths = np.linalg.norm(offsets, axis=1)
    for j in skel.order[1:]:
        if lengths[j] <= 1e-9:
            raise SkeletonError(f"degenerate bone at joint {j} ({skel.joint_names[j]})")
    return offsets


def fk_batch(skel: Skeleton, offsets: np.ndarray, theta, root_t):
    """Forward kinematics for F frames at once.

    Returns world rotations (F, 24, 3, 3) and joint positions (F, 24, 3).
    The root sits at root_t + offsets[root]; each child is placed at
    parent_rotation @ offset_child + parent_position.
    """
    theta = np.asarray(theta, dtype=float)
    root_t = np.asarray(root_t, dtype=float)
    local = exp_map(theta)
    rot = np.empty_like(local)
    pos = np.empty(theta.shape)
    r = skel.root
    rot[:, r] = local[:, r]
    pos[:, r] = root_t + offsets[r]
    parents = skel.parents
    for j in skel.order[1:]:
        p = parents[j]
        rot[:, j] = rot[:, p] @ local[:, j]
        pos[:, j] = pos[:, p] + rot[:, p] @ offsets[j]
    return rot, pos


def forward_kinematics(skel: Skeleton, beta, pose: Pose) -> JointPoses:
    offsets = bone_offsets(skel, beta)
    if not (np.all(np.isfinite(pose.theta)) and np.all(np.isfinite(pose.root_t))):
        raise SkeletonError("non-finite pose")
    rot, pos = fk_batch(skel, offsets, pose.theta[None], pose.root_t[None])
    return JointPoses(rot[0], pos[0])


def joint_positions(jp: JointPoses) -> np.ndarray:
    return np.array(jp.translations, copy=True)


def motion_positions(skel: Skeleton, beta, motion: Motion) -> np.ndarray:
    """Joint positions (n, 24, 3) for every frame of a motion."""
    return fk_batch(skel, bone_offsets(skel, beta), motion.theta, motion.root_t)[1]


def positions_vjp(skel: Skeleton, rot, pos, theta, grad_pos):
    """Pull a gradient on joint positions back to axis-angles and root translation.

    rot, pos come from fk_batch on theta. grad_pos is (F, 24, 3). Uses
    d p_j / d theta_a = skew(W_parent(a) J_l(theta_a) e_k) (p_j - p_a) for
    every ancestor a of j, accumulated over subtrees.
    """
    grad_pos = np.asarray(grad_pos, dtype=float)
    # subtree sums of g_j and p_j x g_j, accumulated leaves-first
    sum_g = grad_pos.copy()
    sum_pxg = np.cross(pos, grad_pos)
    parents = skel.parents
    for j in skel.order[:0:-1]:
        p = parents[j]
        sum_g[:, p] += sum_g[:, j]
        sum_pxg[:, p] += sum_pxg[:, j]
    torque = sum_pxg - np.cross(pos, sum_g)  # sum over subtree of (p_j - p_a) x g_j
    parent_rot = np.empty_like(rot)
    r = skel.root
    parent_rot[:, r] = np.eye(3)
    nonroot = skel.order[1:]
    parent_rot[:, nonroot] = rot[:, parents[nonroot]]
    A = parent_rot @ left_jacobian(theta)
    grad_theta = np.einsum("fjik,fji->fjk", A, torque)
    grad_root = sum_g[:, r]
    return grad_theta, grad_root


def positions_jacobian(skel: Skeleton, rot, pos, theta):
    """Dense Jacobian d pos / d theta with shape (F, 24, 3, 24, 3)."""
    parents = skel.parents
    parent_rot = np.empty_like(rot)
    parent_rot[:, skel.root] = np.eye(3)
    nonroot = skel.order[1:]
    parent_rot[:, nonroot] = rot[:, parents[nonroot]]
    A = parent_rot @ left_jacobian(theta)                       # (F, a, 3, k)
    d = pos[:, :, None, :] - pos[:, None, :, :]                 # (F, j, a, 3)
    J = np.cross(np.swapaxes(A, -1, -2)[:, None], d[:, :, :, None, :])  # (F, j, a, k, 3)
    J *= skel.ancestors_mask()[None, :, :, None, None]
    return np.moveaxis(J, -1, 2)
