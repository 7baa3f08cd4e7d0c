import numpy as np
import pytest

from motionretarget.arap import LabeledMesh
from motionretarget.skeleton import load_skeleton

# PASS/FAIL lines from the acceptance suite, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def skel():
    return load_skeleton()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def bar_mesh(nx=40, ny=7, nz=7, length=1.0, width=0.1, height=0.1):
    """Surface triangulation of an axis-aligned box, built as a grid on each face."""
    verts = {}
    tris = []

    def vid(key, xyz):
        if key not in verts:
            verts[key] = (len(verts), xyz)
        return verts[key][0]

    xs = np.linspace(0, length, nx)
    ys = np.linspace(0, width, ny)
    zs = np.linspace(0, height, nz)
    grids = {"x": xs, "y": ys, "z": zs}
    faces = [("y", "z", "x", 0), ("y", "z", "x", nx - 1), ("x", "z", "y", 0), ("x", "z", "y", ny - 1),
             ("x", "y", "z", 0), ("x", "y", "z", nz - 1)]
    for u_ax, v_ax, w_ax, w_idx in faces:
        U, V = grids[u_ax], grids[v_ax]
        flip = w_idx != 0
        for a in range(len(U) - 1):
            for b in range(len(V) - 1):
                quad = []
                for da, db in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    idx = {u_ax: a + da, v_ax: b + db, w_ax: w_idx}
                    xyz = (xs[idx["x"]], ys[idx["y"]], zs[idx["z"]])
                    quad.append(vid((idx["x"], idx["y"], idx["z"]), xyz))
                t1, t2 = [quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]
                if flip:
                    t1, t2 = t1[::-1], t2[::-1]
                tris += [t1, t2]
    v = np.zeros((len(verts), 3))
    for i, xyz in verts.values():
        v[i] = xyz
    x = v[:, 0] / length
    labels = np.clip((x * 4).astype(int) + 1, 1, 4)
    return LabeledMesh(v, np.array(tris), labels)


@pytest.fixture(scope="session")
def bar():
    return bar_mesh()
