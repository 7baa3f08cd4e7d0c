"""File formats: motion, constraint, camera, skeleton JSON; OBJ meshes with label sidecars; images."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np
from PIL import Image, UnidentifiedImageError

from .arap import LabeledMesh, MeshError
from .camera import CameraIntrinsics
from .retarget import Constraint, ConstraintSet
from .skeleton import NUM_BETAS, NUM_JOINTS, Motion, Skeleton, load_skeleton


class InputError(ValueError):
    """Malformed or invalid input file; the CLI maps it to exit code 2."""


_NUM = {"type": "number"}


def _vec(n):
    return {"type": "array", "items": _NUM, "minItems": n, "maxItems": n}


MOTION_SCHEMA = {
    "type": "object",
    "required": ["header", "frames"],
    "properties": {
        "header": {
            "type": "object",
            "required": ["fps", "frame_count"],
            "properties": {
                "fps": {"type": "number", "exclusiveMinimum": 0},
                "frame_count": {"type": "integer", "minimum": 1},
                "skeleton_ref": {"type": ["string", "null"]},
                "beta": {"oneOf": [_vec(NUM_BETAS), {"type": "array", "items": _vec(NUM_BETAS), "minItems": 1}]},
            },
        },
        "frames": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["theta", "root_t"],
                "properties": {"theta": _vec(3 * NUM_JOINTS), "root_t": _vec(3)},
            },
        },
    },
}

CONSTRAINT_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["frame", "joint", "kind", "target"],
        "properties": {
            "frame": {"type": "integer", "minimum": 0},
            "joint": {"type": ["integer", "string"]},
            "kind": {"enum": ["p3d", "p2d"]},
            "target": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 3},
            "label": {"type": "string"},
        },
    },
}

CAMERA_SCHEMA = {
    "type": "object",
    "required": ["fx", "fy", "cx", "cy", "width", "height"],
    "properties": {
        "fx": {"type": "number", "exclusiveMinimum": 0},
        "fy": {"type": "number", "exclusiveMinimum": 0},
        "cx": _NUM, "cy": _NUM,
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "pose": {
            "type": "object",
            "required": ["R", "t"],
            "properties": {"R": {"type": "array", "items": _vec(3), "minItems": 3, "maxItems": 3}, "t": _vec(3)},
        },
    },
}


def read_json(path, schema=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if schema is not None:
        validator = jsonschema.Draft202012Validator(schema)
        error = next(iter(sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))), None)
        if error is not None:
            where = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in error.absolute_path) or "<root>"
            raise InputError(f"{path}: field {where}: {error.message}")
    return data


def write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def motion_to_dict(motion: Motion, beta=None, skeleton_ref=None) -> dict:
    header = {"fps": motion.fps, "frame_count": len(motion), "skeleton_ref": skeleton_ref}
    if beta is not None:
        header["beta"] = np.asarray(beta, dtype=float).tolist()
    frames = [{"theta": t.reshape(-1).tolist(), "root_t": r.tolist()} for t, r in zip(motion.theta, motion.root_t)]
    return {"header": header, "frames": frames}


def write_motion(path, motion: Motion, beta=None, skeleton_ref=None):
    write_json(path, motion_to_dict(motion, beta, skeleton_ref))


def read_motion(path):
    """Return (motion, betas, header); betas is (k, 10) or None."""
    data = read_json(path, MOTION_SCHEMA)
    header = data["header"]
    frames = data["frames"]
    if header["frame_count"] != len(frames):
        raise InputError(f"{path}: field .header.frame_count: {header['frame_count']} "
                         f"does not match {len(frames)} frames")
    theta = np.array([f["theta"] for f in frames], dtype=float).reshape(len(frames), NUM_JOINTS, 3)
    root_t = np.array([f["root_t"] for f in frames], dtype=float)
    betas = header.get("beta")
    if betas is not None:
        betas = np.atleast_2d(np.asarray(betas, dtype=float))
    try:
        motion = Motion(header["fps"], theta, root_t)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    return motion, betas, header


def read_constraints(path, skel: Skeleton, camera: CameraIntrinsics | None = None) -> ConstraintSet:
    data = read_json(path, CONSTRAINT_SCHEMA)
    out = []
    for i, item in enumerate(data):
        try:
            joint = skel.joint_index(item["joint"])
            out.append(Constraint(item["frame"], joint, item["kind"], item["target"], item.get("label", "")))
        except ValueError as exc:
            raise InputError(f"{path}: field [{i}]: {exc}") from None
    try:
        return ConstraintSet(tuple(out), camera)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def constraints_to_list(cs) -> list:
    return [{"frame": c.frame, "joint": c.joint, "kind": c.kind, "target": c.target.tolist(), "label": c.label}
            for c in cs]


def read_camera(path) -> CameraIntrinsics:
    data = read_json(path, CAMERA_SCHEMA)
    try:
        return CameraIntrinsics.from_dict(data)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def read_skeleton(path=None) -> Skeleton:
    if path is None:
        return load_skeleton()
    data = read_json(path)
    try:
        return Skeleton.from_dict(data)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def read_obj(path):
    """Vertices and triangles from a Wavefront OBJ (polygons are fan-triangulated)."""
    verts, tris = [], []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from None
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    tris.append([idx[0], idx[k], idx[k + 1]])
        except (ValueError, IndexError):
            raise InputError(f"{path}: line {lineno}: cannot parse {line.strip()!r}") from None
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(tris, dtype=int).reshape(-1, 3)


def read_labels(path, n_vertices=None):
    labels = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            labels.append(int(line.strip()))
        except ValueError:
            raise InputError(f"{path}: line {lineno}: expected an integer label") from None
    if n_vertices is not None and len(labels) != n_vertices:
        raise InputError(f"{path}: {len(labels)} labels for {n_vertices} vertices")
    return np.array(labels, dtype=int)


def read_mesh(obj_path, labels_path) -> LabeledMesh:
    v, f = read_obj(obj_path)
    labels = read_labels(labels_path, len(v))
    try:
        return LabeledMesh(v, f, labels)
    except MeshError as exc:
        raise InputError(f"{obj_path}: {exc}") from None


def write_obj(path, vertices, triangles):
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in np.asarray(vertices, dtype=float).tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(triangles, dtype=int)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_labels(path, labels):
    Path(path).write_text("".join(f"{int(x)}\n" for x in labels))


def read_image(path) -> np.ndarray:
    """Integer pixel grid from PNG/PGM/PPM (via Pillow) or a JSON matrix."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        data = read_json(path)
        try:
            return np.asarray(data, dtype=int)
        except (TypeError, ValueError):
            raise InputError(f"{path}: expected a rectangular integer matrix") from None
    try:
        with Image.open(path) as im:
            return np.asarray(im)
    except (OSError, UnidentifiedImageError) as exc:
        raise InputError(f"{path}: cannot read image ({exc})") from None


def read_frames(path) -> list[np.ndarray]:
    """A directory of images (sorted by name) or a single image file."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".png", ".pgm", ".ppm", ".json"))
        if not files:
            raise InputError(f"{path}: no frames found")
        return [read_image(p) for p in files]
    return [read_image(path)]


def write_image(path, array):
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)
