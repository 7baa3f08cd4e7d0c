"""ARAP on a box-shaped bar: energy per iteration for stretch, bend and twist, and solve time vs. mesh size."""
import argparse
import sys
import time
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from motionretarget.arap import ArapConfig, ControlPoint, arap_solve

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from conftest import bar_mesh  # noqa: E402


def end_controls(mesh, transform):
    v = mesh.vertices
    x = v[:, 0]
    fixed = [ControlPoint(int(i), v[i]) for i in np.flatnonzero(x <= 1e-9)]
    moved = [ControlPoint(int(i), transform(v[i])) for i in np.flatnonzero(x >= x.max() - 1e-9)]
    return fixed + moved


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iterations", type=int, default=10)
    a = ap.parse_args()
    mesh = bar_mesh()
    tip = Rotation.from_rotvec([0, 0, 0.5]).as_matrix()
    twist = Rotation.from_rotvec([1.0, 0, 0]).as_matrix()
    cases = {
        "stretch 10%": lambda p: p * [1.1, 1, 1],
        "bend": lambda p: tip @ (p - [1, 0, 0]) + [1, 0.3, 0],
        "twist": lambda p: twist @ (p - [1, 0.05, 0.05]) + [1, 0.05, 0.05],
    }
    cfg = ArapConfig(iterations=a.iterations, tol=0.0)
    print(f"bar mesh: {len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles")
    for name, fn in cases.items():
        res = arap_solve(mesh, end_controls(mesh, fn), config=cfg)
        print(f"{name:<12}" + " ".join(f"{e:.3e}" for e in res.energies))
    print("\nsize sweep (stretch, 10 iterations)")
    for nx in (20, 40, 80, 160):
        m = bar_mesh(nx=nx)
        t0 = time.perf_counter()
        arap_solve(m, end_controls(m, cases["stretch 10%"]), config=cfg)
        print(f"{len(m.vertices):>7} vertices  {time.perf_counter() - t0:6.2f} s")


if __name__ == "__main__":
    main()
