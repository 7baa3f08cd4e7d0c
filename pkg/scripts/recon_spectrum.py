"""Spectral effect of motion regularization and spike recall over a sweep of noise levels.

    python3 scripts/recon_spectrum.py [--noise 0.01 0.02 0.04] [--seeds 3]
"""
import argparse

import numpy as np

from motionretarget.recon import ReconConfig, reconstruct
from motionretarget.skeleton import load_skeleton, motion_positions
from motionretarget.synth import ScenarioSpec, generate


def band_powers(positions, fps, low=1.0, high=5.0):
    n = len(positions)
    x = positions.reshape(n, -1)
    A = np.stack([np.ones(n), np.arange(n)], axis=1)
    x = (x - A @ np.linalg.lstsq(A, x, rcond=None)[0]) * np.hanning(n)[:, None]
    power = np.abs(np.fft.rfft(x, axis=0)) ** 2
    f = np.fft.rfftfreq(n, 1 / fps)
    return power[f > high].sum(), power[f <= low].sum()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--template", default="walk")
    ap.add_argument("--noise", type=float, nargs="+", default=[0.01, 0.02, 0.04])
    ap.add_argument("--spikes", type=int, default=4)
    ap.add_argument("--seeds", type=int, default=3)
    a = ap.parse_args()
    skel = load_skeleton()
    beta = np.zeros(10)
    print(f"{'noise':>6}{'seed':>6}{'>5Hz cut %':>12}{'<=1Hz chg %':>13}{'spikes found':>14}{'flags':>7}")
    for noise in a.noise:
        for seed in range(a.seeds):
            sc = generate(ScenarioSpec(a.template, duration=8.0, noise=noise, spikes=a.spikes, seed=seed))
            res = reconstruct(sc.observed, skel, [beta], ReconConfig())
            hi0, lo0 = band_powers(motion_positions(skel, beta, sc.observed), sc.observed.fps)
            hi1, lo1 = band_powers(motion_positions(skel, beta, res.motion), sc.observed.fps)
            found = sum(tuple(s) in set(res.outliers) for s in sc.spikes)
            print(f"{noise:>6.3f}{seed:>6}{100 * (1 - hi1 / hi0):>12.1f}{100 * abs(lo1 - lo0) / lo0:>13.2f}"
                  f"{f'{found}/{len(sc.spikes)}':>14}{len(res.outliers):>7}")


if __name__ == "__main__":
    main()
