"""End-effector pixel error of direct transfer vs. constrained retargeting on the synthetic scenarios.

    python3 scripts/retarget_table.py [--ratios 0.8 1.25] [--duration 5] [--csv out.csv]
"""
import argparse
import csv
import time

import numpy as np

from motionretarget.metrics import REFERENCE_EE_PX, end_effector_errors
from motionretarget.retarget import RetargetConfig, retarget_motion
from motionretarget.skeleton import load_skeleton, motion_positions
from motionretarget.synth import TEMPLATES, ScenarioSpec, generate, scale_beta


def run_scenario(skel, template, ratio, duration, config):
    beta_t = scale_beta(ratio)
    sc = generate(ScenarioSpec(template, duration=duration, beta_target=beta_t.tolist()))
    cs = sc.constraints
    t0 = time.perf_counter()
    res = retarget_motion(skel, sc.source, np.zeros(10), beta_t, cs, config)
    seconds = time.perf_counter() - t0
    pos = motion_positions(skel, beta_t, res.motion)
    r3 = [np.linalg.norm(pos[c.frame, c.joint] - c.target) for c in cs if c.kind == "p3d"]
    return {
        "scenario": f"{template}@{ratio}",
        "constraints": len(cs),
        "direct_px": end_effector_errors(sc.source, skel, beta_t, cs, cs.camera).mean(),
        "retargeted_px": end_effector_errors(res.motion, skel, beta_t, cs, cs.camera).mean(),
        "max_3d_cm": 100 * max(r3, default=0.0),
        "seconds": seconds,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.8, 1.25])
    ap.add_argument("--duration", type=float, default=5.0)
    ap.add_argument("--fixed-root", action="store_true", help="do not optimize the per-window root offset")
    ap.add_argument("--csv")
    a = ap.parse_args()
    skel = load_skeleton()
    config = RetargetConfig(optimize_root_translation=not a.fixed_root)
    rows = [run_scenario(skel, t, r, a.duration, config) for t in TEMPLATES for r in a.ratios]

    print(f"{'scenario':<18}{'n':>5}{'direct px':>11}{'retarget px':>13}{'max 3D cm':>11}{'s':>7}")
    for r in rows:
        print(f"{r['scenario']:<18}{r['constraints']:>5}{r['direct_px']:>11.2f}{r['retargeted_px']:>13.2f}"
              f"{r['max_3d_cm']:>11.2f}{r['seconds']:>7.1f}")
    direct = np.mean([r["direct_px"] for r in rows])
    ours = np.mean([r["retargeted_px"] for r in rows])
    print(f"{'average':<18}{'':>5}{direct:>11.2f}{ours:>13.2f}")
    print(f"reference averages: direct {REFERENCE_EE_PX['direct_transfer']:.2f} px, "
          f"retargeting {REFERENCE_EE_PX['retargeting']:.2f} px")
    if a.csv:
        with open(a.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
