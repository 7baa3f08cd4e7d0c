"""Command-line entry point: reconstruct, retarget, deform, eval, plot, synth (and replay).

Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .arap import MeshError, deform_to_labels, extract_contours
from .camera import BehindCameraError, project_world
from .config import load_config
from .fileio import (InputError, constraints_to_list, read_camera, read_constraints, read_frames, read_image,
                     read_json, read_mesh, read_motion, read_skeleton, sha256, write_json, write_labels,
                     write_motion, write_obj)
from .metrics import (REFERENCE_EE_PX, EvalReport, acceptance_window, end_effector_errors, windowed_score)
from .optim import DivergenceError
from .plotting import AXES, contiguous_spans, trajectories_csv, trajectories_svg
from .recon import reconstruct
from .retarget import ConstraintError, ConstraintSet, retarget_motion
from .skeleton import NUM_BETAS, SkeletonError, check_beta, motion_positions
from .synth import TEMPLATES, ScenarioSpec, generate, scale_beta

log = logging.getLogger("motionretarget")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class Run:
    """Collects the inputs and outputs of one command and writes its manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out_dir = Path(args.out_dir)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.started = _dt.datetime.now(_dt.timezone.utc).isoformat()
        self.config = None

    def input(self, path):
        if path is not None:
            p = Path(path)
            if p.is_file():
                self.inputs[str(path)] = sha256(p)
            elif p.is_dir():
                for f in sorted(p.iterdir()):
                    if f.is_file():
                        self.inputs[str(f)] = sha256(f)
        return path

    def path(self, name) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return self.out_dir / name

    def finish(self):
        manifest = {
            "tool": "motionretarget",
            "version": __version__,
            "command": self.args.command,
            "argv": self.argv,
            "seed": self.args.seed,
            "inputs": self.inputs,
            "config": self.config,
            "outputs": {name: sha256(self.out_dir / name) for name in self.outputs},
            "started": self.started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        write_json(self.out_dir / "manifest.json", manifest)


def _parse_beta(value) -> np.ndarray:
    if value is None:
        return np.zeros(NUM_BETAS)
    if Path(value).is_file():
        data = read_json(value)
        if isinstance(data, dict):
            data = data.get("beta_target", data.get("beta"))
        try:
            beta = np.asarray(data, dtype=float)
        except (TypeError, ValueError):
            raise InputError(f"{value}: expected a list of {NUM_BETAS} numbers or a 'beta' field") from None
    else:
        try:
            beta = np.array([float(x) for x in value.split(",")])
        except ValueError:
            raise InputError(f"cannot parse beta {value!r}: expected a file or comma-separated numbers") from None
    try:
        return check_beta(beta)
    except SkeletonError as exc:
        raise InputError(str(exc)) from None


def _source_beta(betas):
    return np.zeros(NUM_BETAS) if betas is None else betas.mean(axis=0)


def _retarget_overrides(a):
    return {
        "retarget.lambda1": a.lambda1, "retarget.lambda2": a.lambda2, "retarget.lambda3": a.lambda3,
        "retarget.iterations": a.iterations, "retarget.learning_rate": a.lr,
        "retarget.window_seconds": a.window_seconds,
        "retarget.optimize_root_translation": True if a.optimize_root else None,
    }


# commands ---------------------------------------------------------------------------------


def cmd_reconstruct(a, run: Run):
    cfg = load_config(run.input(a.config), {"recon.gamma": a.gamma, "recon.iterations": a.iterations})
    skel = read_skeleton(run.input(a.skeleton))
    motion, betas, header = read_motion(run.input(a.motion))
    if betas is None:
        betas = np.zeros((1, NUM_BETAS))
    run.config = cfg.to_dict()
    res = reconstruct(motion, skel, betas, cfg.recon)
    outliers = np.argwhere(~res.mask)
    before, after = float(res.regularized.cost_before.sum()), float(res.regularized.cost_after.sum())
    pos_in = motion_positions(skel, res.beta, motion)
    pos_out = motion_positions(skel, res.beta, res.motion)
    report = {
        "frames": len(motion),
        "beta": res.beta.tolist(),
        "outlier_count": int(len(outliers)),
        "outliers": [{"frame": int(f), "joint": int(j), "name": skel.joint_names[j]} for f, j in outliers],
        "outlier_angles": [{"frame": f, "joint": j, "name": skel.joint_names[j]}
                           for f, j in res.outliers],
        "cost_before": before,
        "cost_after": after,
        "cost_change": (before - after) / before if before > 0 else 0.0,
        "max_joint_displacement": float(np.linalg.norm(pos_out - pos_in, axis=-1).max()),
        # rms displacement relative to the rms root-relative joint spread (body scale)
        "relative_motion_change": float(np.sqrt(np.mean((pos_out - pos_in) ** 2))
                                        / np.sqrt(np.mean((pos_in - pos_in[:, :1]) ** 2))),
        "gamma": cfg.recon.gamma,
    }
    write_motion(run.path("motion.json"), res.motion, res.beta, header.get("skeleton_ref"))
    write_json(run.path("report.json"), report)


def _residual_summary(skel, beta, motion, cs: ConstraintSet):
    pos = motion_positions(skel, beta, motion)
    rows = []
    for c in cs:
        p = pos[c.frame, c.joint]
        if c.kind == "p3d":
            rows.append({"frame": c.frame, "joint": c.joint, "kind": c.kind, "residual_m": float(np.linalg.norm(p - c.target))})
        else:
            rows.append({"frame": c.frame, "joint": c.joint, "kind": c.kind,
                         "residual_px": float(np.linalg.norm(project_world(p, cs.camera) - c.target))})
    r3 = [r["residual_m"] for r in rows if "residual_m" in r]
    r2 = [r["residual_px"] for r in rows if "residual_px" in r]
    summary = {
        "count_3d": len(r3), "count_2d": len(r2),
        "max_3d_m": max(r3) if r3 else None, "mean_3d_m": float(np.mean(r3)) if r3 else None,
        "max_2d_px": max(r2) if r2 else None, "mean_2d_px": float(np.mean(r2)) if r2 else None,
    }
    if cs.camera is not None and len(cs):
        summary["end_effector_px"] = float(end_effector_errors(motion, skel, beta, cs, cs.camera).mean())
    return summary, rows


def cmd_retarget(a, run: Run):
    cfg = load_config(run.input(a.config), _retarget_overrides(a))
    skel = read_skeleton(run.input(a.skeleton))
    source, betas, header = read_motion(run.input(a.motion))
    beta_s = _source_beta(betas)
    if a.beta_target and Path(a.beta_target).is_file():
        run.input(a.beta_target)
    beta_t = _parse_beta(a.beta_target)
    camera = read_camera(run.input(a.camera)) if a.camera else None
    if a.constraints:
        try:
            cs = read_constraints(run.input(a.constraints), skel, camera)
            cs.validate(skel, len(source))
        except ConstraintError as exc:
            raise InputError(str(exc)) from None
    else:
        cs = ConstraintSet((), camera)
    run.config = cfg.to_dict()
    res = retarget_motion(skel, source, beta_s, beta_t, cs, cfg.retarget)
    direct_summary, _ = _residual_summary(skel, beta_t, source, cs)
    summary, rows = _residual_summary(skel, beta_t, res.motion, cs)
    write_motion(run.path("motion.json"), res.motion, beta_t, header.get("skeleton_ref"))
    with open(run.path("loss_trace.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "start", "stop", "iteration", "loss"])
        for i, ((start, stop), trace) in enumerate(zip(res.windows, res.traces)):
            for it, loss in enumerate(trace):
                w.writerow([i, start, stop, it, repr(float(loss))])
    write_json(run.path("residuals.json"), {
        "retargeted": summary, "direct_transfer": direct_summary, "constraints": rows,
        "reference_px": REFERENCE_EE_PX,
    })


def cmd_deform(a, run: Run):
    cfg = load_config(run.input(a.config), {"deform.stride": a.stride, "deform.arap.iterations": a.iterations})
    mesh = read_mesh(run.input(a.mesh), run.input(a.labels))
    camera = read_camera(run.input(a.camera))
    image = read_image(run.input(a.label_image))
    run.config = cfg.to_dict()
    try:
        extract_contours(image, cfg.deform.stride)
    except MeshError as exc:
        raise InputError(f"{a.label_image}: {exc}") from None
    res, controls, skipped = deform_to_labels(mesh, camera, image, cfg.deform.stride, cfg.deform.arap)
    write_obj(run.path("mesh.obj"), res.mesh.vertices, res.mesh.triangles)
    write_labels(run.path("mesh.labels"), res.mesh.labels)
    with open(run.path("energy.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "energy"])
        for i, e in enumerate(res.energies):
            w.writerow([i, repr(float(e))])
    write_json(run.path("controls.json"), {
        "count": len(controls), "skipped_contours": skipped,
        "controls": [{"vertex": c.vertex, "target": c.target.tolist()} for c in controls],
    })


def _is_motion_file(path) -> bool:
    p = Path(path)
    if p.suffix.lower() != ".json" or not p.is_file():
        return False
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return isinstance(data, dict) and "header" in data


def _position_mse(pa, pb):
    return float(np.mean((pa - pb) ** 2))


def cmd_eval(a, run: Run):
    cfg = load_config(run.input(a.config), {"eval.window": a.window})
    run.config = cfg.to_dict()
    run.input(a.pred)
    run.input(a.ref)
    if _is_motion_file(a.pred) and _is_motion_file(a.ref):
        skel = read_skeleton(run.input(a.skeleton))
        pred, pb, _ = read_motion(a.pred)
        ref, rb, _ = read_motion(a.ref)
        beta_p, beta_r = _source_beta(pb), _source_beta(rb)
        w = cfg.eval.window if cfg.eval.window is not None else acceptance_window(len(pred), len(ref))
        pa = motion_positions(skel, beta_p, pred)
        pr = motion_positions(skel, beta_r, ref)
        report = EvalReport(window=w, metadata={"mode": "motion", "pred_frames": len(pred), "ref_frames": len(ref)})
        scores = []
        for k in range(len(pa)):
            lo, hi = max(0, k - w), min(len(pr) - 1, k + w)
            lo = min(lo, hi)
            scores.append(min(_position_mse(pa[k], pr[j]) for j in range(lo, hi + 1)))
        report.add("joint_position_mse", scores)
        if a.constraints:
            camera = read_camera(run.input(a.camera)) if a.camera else None
            if camera is None:
                raise InputError("end-effector error needs --camera")
            cs = read_constraints(run.input(a.constraints), skel, camera)
            errs = end_effector_errors(pred, skel, beta_p, cs, camera)
            report.end_effector = {"per_constraint_px": errs.tolist(),
                                   "mean_px": float(errs.mean()) if errs.size else 0.0,
                                   "reference_px": REFERENCE_EE_PX}
    else:
        pred = read_frames(a.pred)
        ref = read_frames(a.ref)
        w = cfg.eval.window if cfg.eval.window is not None else acceptance_window(len(pred), len(ref))
        report = EvalReport(window=w, metadata={"mode": "frames", "pred_frames": len(pred), "ref_frames": len(ref)})
        try:
            report.add("mse", windowed_score(pred, ref, "mse", w))
            report.add("ssim", windowed_score(pred, ref, "ssim", w))
        except ValueError as exc:
            raise InputError(str(exc)) from None
    run.path("report.json").write_text(report.to_json() + "\n")
    run.path("per_frame.csv").write_text(report.to_csv())


def cmd_plot(a, run: Run):
    skel = read_skeleton(run.input(a.skeleton))
    try:
        joint = skel.joint_index(a.joint)
    except SkeletonError as exc:
        raise InputError(str(exc)) from None
    if a.axis not in AXES:
        raise InputError(f"unknown axis {a.axis!r}")
    labels = a.label or []
    curves = {}
    fps = None
    for i, path in enumerate(a.motion):
        motion, betas, _ = read_motion(run.input(path))
        fps = fps or motion.fps
        name = labels[i] if i < len(labels) else Path(path).stem
        curves[name] = motion_positions(skel, _source_beta(betas), motion)[:, joint, AXES[a.axis]]
    spans, marks = [], None
    if a.constraints:
        camera = read_camera(run.input(a.camera)) if a.camera else None
        cs = read_constraints(run.input(a.constraints), skel, camera)
        mine = [c for c in cs if c.joint == joint]
        spans = contiguous_spans(c.frame for c in mine)
        p3 = [c for c in mine if c.kind == "p3d"]
        marks = (np.array([c.frame for c in p3]), np.array([c.target[AXES[a.axis]] for c in p3]))
    run.config = {"joint": skel.joint_names[joint], "axis": a.axis}
    trajectories_csv(run.path("trajectory.csv"), curves, fps)
    trajectories_svg(run.path("trajectory.svg"), curves, fps, skel.joint_names[joint], a.axis, spans, marks)


def cmd_synth(a, run: Run):
    if a.beta_target is not None:
        beta_t = _parse_beta(a.beta_target)
    else:
        beta_t = scale_beta(a.ratio)
    try:
        spec = ScenarioSpec(template=a.template, duration=a.duration, fps=a.fps, beta_target=beta_t.tolist(),
                            noise=a.noise, spikes=a.spikes, seed=a.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    skel = read_skeleton(run.input(a.skeleton))
    sc = generate(spec, skel)
    beta_s = np.asarray(spec.beta_source)
    run.config = {"scenario": {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                               for k, v in spec.__dict__.items()}}
    write_motion(run.path("source.json"), sc.source, beta_s)
    write_motion(run.path("observed.json"), sc.observed, beta_s)
    write_motion(run.path("target.json"), sc.target, beta_t)
    write_motion(run.path("direct.json"), sc.source, beta_t)
    write_json(run.path("constraints.json"), constraints_to_list(sc.constraints))
    write_json(run.path("camera.json"), sc.constraints.camera.to_dict())
    write_json(run.path("scenario.json"), {
        "spec": run.config["scenario"], "beta_source": beta_s.tolist(), "beta_target": beta_t.tolist(),
        "spikes": [list(s) for s in sc.spikes], "touch_spans": [list(s) for s in sc.touch_spans],
    })


def cmd_replay(a, run: Run):
    manifest = read_json(a.manifest)
    argv = list(manifest["argv"])
    if "--out-dir" in argv:
        argv[argv.index("--out-dir") + 1] = a.out_dir
    else:
        argv += ["--out-dir", a.out_dir]
    return main(argv)


# parser -----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="motionretarget", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML or JSON config file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out-dir", required=True)
        sp.add_argument("--skeleton", help="skeleton JSON (default: bundled 24-joint skeleton)")
        return sp

    sp = common(sub.add_parser("reconstruct", help="smooth a motion and reject outlier joints"))
    sp.add_argument("--motion", required=True)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--iterations", type=int)

    sp = common(sub.add_parser("retarget", help="retarget a motion to a new body shape"))
    sp.add_argument("--motion", required=True)
    sp.add_argument("--beta-target", help="JSON file or comma-separated 10 coefficients")
    sp.add_argument("--constraints")
    sp.add_argument("--camera")
    sp.add_argument("--lambda1", type=float)
    sp.add_argument("--lambda2", type=float)
    sp.add_argument("--lambda3", type=float)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--window-seconds", type=float)
    sp.add_argument("--optimize-root", action="store_true", help="add a per-window root translation offset")

    sp = common(sub.add_parser("deform", help="fit a labeled mesh to a part-label image"))
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--label-image", required=True)
    sp.add_argument("--camera", required=True)
    sp.add_argument("--stride", type=int)
    sp.add_argument("--iterations", type=int)

    sp = common(sub.add_parser("eval", help="windowed MSE/SSIM or motion metrics"))
    sp.add_argument("--pred", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--constraints")
    sp.add_argument("--camera")
    sp.add_argument("--window", type=int)

    sp = common(sub.add_parser("plot", help="plot one joint coordinate over time"))
    sp.add_argument("--motion", action="append", required=True)
    sp.add_argument("--label", action="append")
    sp.add_argument("--joint", required=True)
    sp.add_argument("--axis", default="y")
    sp.add_argument("--constraints")
    sp.add_argument("--camera")

    sp = common(sub.add_parser("synth", help="generate a synthetic paired scenario"))
    sp.add_argument("--template", required=True, choices=TEMPLATES)
    sp.add_argument("--ratio", type=float, default=1.0, help="uniform bone scale of the target")
    sp.add_argument("--beta-target")
    sp.add_argument("--duration", type=float, default=4.0)
    sp.add_argument("--fps", type=float, default=30.0)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--spikes", type=int, default=0)

    sp = sub.add_parser("replay", help="re-run a command from its manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(seed=None)
    return p


COMMANDS = {
    "reconstruct": cmd_reconstruct, "retarget": cmd_retarget, "deform": cmd_deform,
    "eval": cmd_eval, "plot": cmd_plot, "synth": cmd_synth,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MOTIONRETARGET_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        if args.command == "replay":
            return cmd_replay(args, None)
        run = Run(args, argv)
        COMMANDS[args.command](args, run)
        run.finish()
    except (InputError, ConstraintError, SkeletonError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DivergenceError, FloatingPointError, BehindCameraError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
