"""Regenerate src/motionretarget/data/smpl24.json (the bundled default skeleton).

Rest offsets approximate the SMPL neutral joint layout (y up, facing +z,
T-pose). Each shape direction stretches a group of bones by 10% per unit.
"""
import json
from pathlib import Path

import numpy as np

NAMES = [
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
]
PARENTS = [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21]
OFFSETS = [
    (0.0, 0.0, 0.0),
    (0.06, -0.09, 0.0), (-0.06, -0.09, 0.0), (0.0, 0.11, -0.02),
    (0.04, -0.38, 0.0), (-0.04, -0.38, 0.0), (0.0, 0.135, 0.0),
    (-0.01, -0.40, -0.04), (0.01, -0.40, -0.04), (0.0, 0.055, 0.02),
    (0.04, -0.06, 0.12), (-0.04, -0.06, 0.12), (0.0, 0.21, -0.03),
    (0.08, 0.12, -0.01), (-0.08, 0.12, -0.01), (0.0, 0.09, 0.05),
    (0.12, 0.045, -0.02), (-0.12, 0.045, -0.02),
    (0.26, -0.015, -0.02), (-0.26, -0.015, -0.02),
    (0.25, 0.01, 0.0), (-0.25, 0.01, 0.0),
    (0.085, -0.01, -0.015), (-0.085, -0.01, -0.015),
]
GROUPS = [
    ("height", list(range(1, 24)), None),
    ("legs", [4, 5, 7, 8, 10, 11], None),
    ("arms", [18, 19, 20, 21, 22, 23], None),
    ("torso", [3, 6, 9, 12], None),
    ("shoulder_width", [13, 14, 16, 17], 0),
    ("hip_width", [1, 2], 0),
    ("neck_head", [12, 15], None),
    ("shins_forearms", [7, 8, 20, 21], None),
    ("thighs_upper_arms", [4, 5, 18, 19], None),
    ("hands_feet", [10, 11, 22, 23], None),
]


def build():
    rest = np.array(OFFSETS)
    basis = np.zeros((10, 24, 3))
    for i, (_, joints, axis) in enumerate(GROUPS):
        for j in joints:
            if axis is None:
                basis[i, j] = 0.1 * rest[j]
            else:
                basis[i, j, axis] = 0.1 * rest[j, axis]
    return {
        "joint_names": NAMES,
        "parents": PARENTS,
        "rest_offsets": rest.tolist(),
        "shape_basis": basis.round(6).tolist(),
        "shape_directions": [g[0] for g in GROUPS],
        "end_effectors": [10, 11, 22, 23],
    }


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src/motionretarget/data/smpl24.json"
    out.write_text(json.dumps(build(), indent=1) + "\n")
    print(f"wrote {out}")
